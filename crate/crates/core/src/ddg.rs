//! Dependency graph reconstruction and contraction.
//!
//! The builder replays the trace one instruction at a time. Each call frame
//! keeps a table from temporary registers to what they hold: a variable (or
//! an element of one), the result of a computation over other registers, or
//! a value carried back from a callee. A `Store` ends a computation: the
//! stored register is expanded back to the variables it was computed from,
//! which yields element-level read and write events plus the edges of the
//! complete graph. Contraction then keeps only the loop input variables.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::ops::Range;
use std::rc::Rc;

use crate::error::Warning;
use crate::preprocess::{is_alloc_call, Pointers, TracePartition, VarKey};
use crate::trace::{call_has_body, Opcode, Operand, Scalar, TraceInstruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessKind {
    Read,
    Write,
}

/// One element-level access, stamped with the dynamic id of the `Store`
/// that completed the computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEvent {
    pub t: u64,
    pub line: u32,
    pub variable: VarKey,
    pub element_addr: u64,
    pub width: u32,
    pub kind: AccessKind,
    /// For writes: the distinct variables the stored value was computed from.
    pub sources: Vec<VarKey>,
}

/// Known storage of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extent {
    pub base: u64,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalInfo {
    pub name: String,
    pub function: String,
    pub line: u32,
}

/// Variables declared by `Alloca`, by address. Re-entrant calls may reuse an
/// address, so every declaration seen there is kept.
#[derive(Debug, Clone, Default)]
pub struct LocalRegistry {
    locals: HashMap<u64, Vec<LocalInfo>>,
}

impl LocalRegistry {
    pub fn at(&self, address: u64) -> &[LocalInfo] {
        self.locals.get(&address).map_or(&[], Vec::as_slice)
    }

    /// Where `key` was declared, if an alloca for it was seen.
    pub fn declaration(&self, key: &VarKey) -> Option<&LocalInfo> {
        self.at(key.address).iter().find(|l| l.name == key.name)
    }

    fn record(&mut self, address: u64, info: LocalInfo) {
        let list = self.locals.entry(address).or_default();
        if !list.contains(&info) {
            list.push(info);
        }
    }
}

/// True iff `key` lives at the address of a loop input variable.
pub fn is_mli(key: &VarKey, mli_addresses: &HashSet<u64>) -> bool {
    mli_addresses.contains(&key.address)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    Var(VarKey),
    /// A temporary, identified by the dynamic instruction defining it.
    Reg(u64),
}

pub type VertexId = usize;

/// Directed graph where an edge `u -> v` means v's value is computed from u.
#[derive(Debug, Clone, Default)]
pub struct DepGraph {
    vertices: Vec<Vertex>,
    labels: Vec<String>,
    index: HashMap<Vertex, VertexId>,
    parents: Vec<Vec<VertexId>>,
    edges: Vec<(VertexId, VertexId)>,
    edge_time: HashMap<(VertexId, VertexId), u64>,
}

impl DepGraph {
    pub fn add_vertex(&mut self, v: Vertex, label: &str) -> VertexId {
        if let Some(&id) = self.index.get(&v) {
            return id;
        }
        let id = self.vertices.len();
        self.index.insert(v.clone(), id);
        self.vertices.push(v);
        self.labels.push(label.to_string());
        self.parents.push(Vec::new());
        id
    }

    pub fn var(&mut self, key: &VarKey) -> VertexId {
        if let Some(&id) = self.index.get(&Vertex::Var(key.clone())) {
            return id;
        }
        self.add_vertex(Vertex::Var(key.clone()), &key.name)
    }

    /// Adds `from -> to` unless present; the first time stamp is kept.
    pub fn add_edge(&mut self, from: VertexId, to: VertexId, t: u64) {
        if let std::collections::hash_map::Entry::Vacant(e) = self.edge_time.entry((from, to)) {
            e.insert(t);
            self.edges.push((from, to));
            self.parents[to].push(from);
        }
    }

    pub fn id(&self, v: &Vertex) -> Option<VertexId> {
        self.index.get(v).copied()
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn label(&self, id: VertexId) -> &str {
        &self.labels[id]
    }

    pub fn parents(&self, id: VertexId) -> &[VertexId] {
        &self.parents[id]
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn edge_time(&self, from: VertexId, to: VertexId) -> Option<u64> {
        self.edge_time.get(&(from, to)).copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Variable parents of the variable `key`, sorted.
    pub fn var_parents(&self, key: &VarKey) -> BTreeSet<VarKey> {
        let Some(id) = self.id(&Vertex::Var(key.clone())) else {
            return BTreeSet::new();
        };
        self.parents(id)
            .iter()
            .filter_map(|&p| match self.vertex(p) {
                Vertex::Var(k) => Some(k.clone()),
                Vertex::Reg(_) => None,
            })
            .collect()
    }

    /// Graphviz rendering under the given graph name.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph {name} {{\n");
        for (id, v) in self.vertices.iter().enumerate() {
            let shape = match v {
                Vertex::Var(_) => "box",
                Vertex::Reg(_) => "ellipse",
            };
            let label = self.labels[id].replace('"', "\\\"");
            let _ = writeln!(out, "  n{id} [label=\"{label}\", shape={shape}];");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Access {
    key: VarKey,
    elem: u64,
    width: u32,
}

#[derive(Debug, Clone)]
struct Binding {
    key: VarKey,
    elem: u64,
    width: u32,
    /// Holds a pointer into the variable rather than one of its values.
    address: bool,
    def: u64,
}

#[derive(Debug, Clone)]
enum Input {
    Reg(String),
    Var(Access),
}

#[derive(Debug, Clone)]
enum RegDef {
    Bound(Binding),
    Derived { inputs: Vec<Input>, def: u64 },
    Carried {
        sources: Rc<Vec<Access>>,
        from: Option<VertexId>,
        def: u64,
    },
    Heap { base: u64, size: Option<u64> },
}

#[derive(Debug, Clone)]
struct Param {
    key: VarKey,
    address: bool,
}

#[derive(Debug, Default)]
struct Frame {
    params: HashMap<String, Param>,
    regs: HashMap<String, RegDef>,
    /// Caller register awaiting this frame's return value.
    pending: Option<(String, u64)>,
}

/// Everything the dependency pass produces.
#[derive(Debug, Clone, Default)]
pub struct DdgOutput {
    pub graph: DepGraph,
    pub events: Vec<AccessEvent>,
    pub registry: LocalRegistry,
    /// `None` records a variable whose storage size is unknown.
    pub extents: HashMap<VarKey, Option<Extent>>,
    pub warnings: Vec<Warning>,
}

/// Replays instructions, maintaining frames and emitting graph edges and
/// access events while recording is on.
pub struct DdgBuilder {
    frames: Vec<Frame>,
    pointers: Pointers,
    out: DdgOutput,
    recording: bool,
}

impl Default for DdgBuilder {
    fn default() -> Self {
        DdgBuilder {
            frames: vec![Frame::default()],
            pointers: Pointers::default(),
            out: DdgOutput::default(),
            recording: true,
        }
    }
}

fn width_of(op: &Operand) -> u32 {
    (op.size_bits / 8).max(1)
}

fn const_u64(op: &Operand) -> Option<u64> {
    if op.is_register {
        return None;
    }
    match op.value {
        Scalar::Int(v) if v >= 0 => Some(v as u64),
        Scalar::Hex(v) => Some(v),
        _ => None,
    }
}

impl DdgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// When off, state is still tracked but no events, edges or warnings
    /// are produced.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    /// Current call depth (0 in the outermost frame).
    pub fn depth(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn finish(self) -> DdgOutput {
        self.out
    }

    pub fn output(&self) -> &DdgOutput {
        &self.out
    }

    /// Makes sure the variable has a vertex even if nothing touches it.
    pub fn seed_vertex(&mut self, key: &VarKey) {
        self.out.graph.var(key);
    }

    pub fn run(&mut self, seq: &[TraceInstruction], range: Range<usize>) {
        for i in range {
            self.step(seq, i);
        }
    }

    pub fn step(&mut self, seq: &[TraceInstruction], idx: usize) {
        let ins = &seq[idx];
        match ins.opcode {
            Opcode::Load | Opcode::GetElementPtr | Opcode::BitCast => self.step_load(ins),
            Opcode::Store => self.flush_store(ins),
            Opcode::Call => self.step_call(ins, call_has_body(seq, idx)),
            Opcode::Ret => self.step_ret(ins),
            Opcode::Alloca => self.step_alloca(ins),
            ref op if op.is_arith() => self.step_arith(ins),
            _ => {}
        }
    }

    fn top(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("base frame is never popped")
    }

    fn warn(&mut self, w: Warning) {
        if self.recording {
            self.out.warnings.push(w);
        }
    }

    fn define(&mut self, res: Option<&Operand>, def: RegDef) {
        if let Some(res) = res {
            self.top().regs.insert(res.name.clone(), def);
        }
    }

    fn undefine(&mut self, res: Option<&Operand>) {
        if let Some(res) = res {
            self.top().regs.remove(&res.name);
        }
    }

    /// Resolves a named operand: parameter of the current frame first, then
    /// the operand's own identity. The flag tells whether the name denotes a
    /// pointer (its value is an address into the resolved variable).
    fn resolve_named(&self, op: &Operand) -> (VarKey, bool) {
        let frame = self.frames.last().expect("base frame is never popped");
        if let Some(p) = frame.params.get(&op.name) {
            return (p.key.clone(), p.address);
        }
        let own = VarKey::of(op);
        let pointer = self.pointers.is_pointer(&own);
        (self.pointers.resolve(own), pointer)
    }

    fn step_load(&mut self, ins: &TraceInstruction) {
        let (Some(src), res) = (ins.input(1), ins.result()) else {
            return;
        };
        let def = ins.dyn_id;
        let res_addr = res.map_or(src.addr(), Operand::addr);
        let width = res.map_or(8, width_of);
        if src.is_named() {
            let (key, pointer) = self.resolve_named(src);
            let binding = match ins.opcode {
                Opcode::Load if !pointer => Binding {
                    key,
                    elem: src.addr(),
                    width,
                    address: false,
                    def,
                },
                _ => Binding {
                    key,
                    elem: res_addr,
                    width,
                    address: true,
                    def,
                },
            };
            self.define(res, RegDef::Bound(binding));
            return;
        }
        if !src.is_temp() {
            self.undefine(res);
            return;
        }
        let current = self.top().regs.get(&src.name).cloned();
        let next = match (current, &ins.opcode) {
            (None, _) => {
                self.warn(Warning::UnboundRegister {
                    name: src.name.clone(),
                    dyn_id: def,
                });
                if ins.opcode == Opcode::BitCast {
                    return;
                }
                None
            }
            (Some(RegDef::Bound(b)), Opcode::Load) => Some(RegDef::Bound(Binding {
                elem: src.addr(),
                width,
                address: false,
                def,
                ..b
            })),
            (Some(RegDef::Bound(b)), Opcode::GetElementPtr) => Some(RegDef::Bound(Binding {
                elem: res_addr,
                width,
                address: true,
                def,
                ..b
            })),
            (Some(RegDef::Bound(b)), _) => Some(RegDef::Bound(Binding { def, ..b })),
            (Some(h @ RegDef::Heap { .. }), Opcode::GetElementPtr | Opcode::BitCast) => Some(h),
            (Some(RegDef::Derived { .. } | RegDef::Carried { .. }), Opcode::BitCast) => {
                Some(RegDef::Derived {
                    inputs: vec![Input::Reg(src.name.clone())],
                    def,
                })
            }
            (Some(_), _) => None,
        };
        match next {
            Some(d) => self.define(res, d),
            None => self.undefine(res),
        }
    }

    fn input_of(&self, op: &Operand) -> Option<Input> {
        if op.is_temp() {
            Some(Input::Reg(op.name.clone()))
        } else if op.is_named() {
            let (key, _) = self.resolve_named(op);
            Some(Input::Var(Access {
                key,
                elem: op.addr(),
                width: width_of(op),
            }))
        } else {
            None
        }
    }

    fn step_arith(&mut self, ins: &TraceInstruction) {
        let inputs = ins.inputs().into_iter().filter_map(|o| self.input_of(o)).collect();
        self.define(
            ins.result(),
            RegDef::Derived {
                inputs,
                def: ins.dyn_id,
            },
        );
    }

    fn step_alloca(&mut self, ins: &TraceInstruction) {
        let Some(res) = ins.result() else { return };
        if !res.is_named() {
            return;
        }
        let key = VarKey::of(res);
        self.out.registry.record(
            key.address,
            LocalInfo {
                name: key.name.clone(),
                function: ins.function.clone(),
                line: ins.line,
            },
        );
        if let Some(size) = ins.input(1).and_then(const_u64) {
            self.out.extents.insert(
                key.clone(),
                Some(Extent {
                    base: key.address,
                    size,
                }),
            );
        }
        self.top().params.remove(&key.name);
    }

    fn step_call(&mut self, ins: &TraceInstruction, has_body: bool) {
        let (args, callee) = ins.call_parts();
        let callee_name = callee.map_or("", |c| c.name.as_str());
        let res = ins.result();
        if !has_body {
            if is_alloc_call(callee_name) {
                let size = match (args.first(), args.get(1)) {
                    (Some(n), Some(sz)) if callee_name == "calloc" => {
                        const_u64(n).zip(const_u64(sz)).map(|(a, b)| a * b)
                    }
                    (Some(n), _) if callee_name != "realloc" => const_u64(n),
                    (_, Some(n)) => const_u64(n),
                    _ => None,
                };
                let base = res.map_or(0, Operand::addr);
                self.define(res, RegDef::Heap { base, size });
            } else {
                let inputs = args.iter().filter_map(|o| self.input_of(o)).collect();
                self.define(
                    res,
                    RegDef::Derived {
                        inputs,
                        def: ins.dyn_id,
                    },
                );
            }
            return;
        }
        self.undefine(res);
        let params: Vec<&Operand> = ins.params().collect();
        let mut frame = Frame {
            pending: res.map(|r| (r.name.clone(), ins.dyn_id)),
            ..Frame::default()
        };
        if params.len() != args.len() {
            self.warn(Warning::ArityMismatch {
                callee: callee_name.to_string(),
                args: args.len(),
                params: params.len(),
                dyn_id: ins.dyn_id,
            });
        } else {
            for (arg, param) in args.iter().zip(params) {
                if let Some(bound) = self.arg_binding(arg) {
                    frame.params.insert(param.name.clone(), bound);
                }
            }
        }
        self.frames.push(frame);
    }

    fn arg_binding(&self, arg: &Operand) -> Option<Param> {
        if arg.is_named() {
            let (key, _) = self.resolve_named(arg);
            return Some(Param { key, address: true });
        }
        if !arg.is_temp() {
            return None;
        }
        match self.frames.last()?.regs.get(&arg.name)? {
            RegDef::Bound(b) => Some(Param {
                key: b.key.clone(),
                address: b.address,
            }),
            _ => None,
        }
    }

    fn step_ret(&mut self, ins: &TraceInstruction) {
        if self.frames.len() == 1 {
            return;
        }
        let pending = self.top().pending.clone();
        let carried = match (&pending, ins.input(1)) {
            (Some(_), Some(op)) => Some(self.expand_operand(op, ins.dyn_id)),
            _ => None,
        };
        self.frames.pop();
        if let (Some((name, def)), Some((sources, from))) = (pending, carried) {
            self.top().regs.insert(
                name,
                RegDef::Carried {
                    sources: Rc::new(sources),
                    from,
                    def,
                },
            );
        }
    }

    fn expand_operand(&mut self, op: &Operand, t: u64) -> (Vec<Access>, Option<VertexId>) {
        match self.input_of(op) {
            Some(Input::Reg(name)) => self.expand(&name, t),
            Some(Input::Var(acc)) => {
                let v = self.recording.then(|| self.out.graph.var(&acc.key));
                (vec![acc], v)
            }
            None => (Vec::new(), None),
        }
    }

    /// Follows a register back to the variable accesses it was computed
    /// from, adding the traversed edges to the complete graph.
    fn expand(&mut self, name: &str, t: u64) -> (Vec<Access>, Option<VertexId>) {
        let Some(def) = self.top().regs.get(name).cloned() else {
            self.warn(Warning::UnboundRegister {
                name: name.to_string(),
                dyn_id: t,
            });
            return (Vec::new(), None);
        };
        let rec = self.recording;
        match def {
            RegDef::Bound(b) => {
                let v = rec.then(|| {
                    let var = self.out.graph.var(&b.key);
                    let reg = self.out.graph.add_vertex(Vertex::Reg(b.def), name);
                    self.out.graph.add_edge(var, reg, t);
                    reg
                });
                let acc = Access {
                    key: b.key,
                    elem: b.elem,
                    width: b.width,
                };
                (vec![acc], v)
            }
            RegDef::Derived { inputs, def } => {
                let v = rec.then(|| self.out.graph.add_vertex(Vertex::Reg(def), name));
                let mut all = Vec::new();
                for input in inputs {
                    let (acc, from) = match input {
                        Input::Reg(r) => self.expand(&r, t),
                        Input::Var(a) => {
                            let from = rec.then(|| self.out.graph.var(&a.key));
                            (vec![a], from)
                        }
                    };
                    if let (Some(from), Some(v)) = (from, v) {
                        self.out.graph.add_edge(from, v, t);
                    }
                    all.extend(acc);
                }
                (all, v)
            }
            RegDef::Carried { sources, from, def } => {
                let v = rec.then(|| self.out.graph.add_vertex(Vertex::Reg(def), name));
                if let (Some(from), Some(v)) = (from, v) {
                    self.out.graph.add_edge(from, v, t);
                }
                (sources.as_ref().clone(), v)
            }
            RegDef::Heap { .. } => (Vec::new(), None),
        }
    }

    /// Ends a computation at a `Store`.
    pub fn flush_store(&mut self, ins: &TraceInstruction) {
        let (Some(val), Some(dst)) = (ins.input(1), ins.input(2)) else {
            return;
        };
        let t = ins.dyn_id;
        let dest = if dst.is_named() {
            let frame = self.frames.last().expect("base frame is never popped");
            if let Some(p) = frame.params.get(&dst.name) {
                (p.key.clone(), dst.addr())
            } else {
                let dkey = VarKey::of(dst);
                if val.is_named() {
                    let (src, _) = self.resolve_named(val);
                    self.pointers.assign(dkey, src);
                    return;
                }
                let vdef = if val.is_temp() {
                    self.top().regs.get(&val.name).cloned()
                } else {
                    None
                };
                match vdef {
                    Some(RegDef::Bound(b)) if b.address => {
                        self.pointers.assign(dkey, b.key);
                        return;
                    }
                    Some(RegDef::Heap { base, size }) => {
                        self.pointers.own_heap(dkey.clone());
                        self.out
                            .extents
                            .insert(dkey, size.map(|size| Extent { base, size }));
                        return;
                    }
                    _ => {}
                }
                self.pointers.forget(&dkey);
                (dkey, dst.addr())
            }
        } else if dst.is_temp() {
            match self.top().regs.get(&dst.name).cloned() {
                Some(RegDef::Bound(b)) => (b.key, dst.addr()),
                Some(RegDef::Heap { .. }) => return,
                _ => {
                    self.warn(Warning::UnboundRegister {
                        name: dst.name.clone(),
                        dyn_id: t,
                    });
                    return;
                }
            }
        } else {
            return;
        };
        let (accesses, from) = if val.is_temp() {
            self.expand(&val.name, t)
        } else {
            (Vec::new(), None)
        };
        if !self.recording {
            return;
        }
        let (key, elem) = dest;
        let mut sources: Vec<VarKey> = Vec::new();
        for a in &accesses {
            if !sources.contains(&a.key) {
                sources.push(a.key.clone());
            }
            self.out.events.push(AccessEvent {
                t,
                line: ins.line,
                variable: a.key.clone(),
                element_addr: a.elem,
                width: a.width,
                kind: AccessKind::Read,
                sources: Vec::new(),
            });
        }
        let to = self.out.graph.var(&key);
        if let Some(from) = from {
            self.out.graph.add_edge(from, to, t);
        }
        self.out.events.push(AccessEvent {
            t,
            line: ins.line,
            variable: key,
            element_addr: elem,
            width: width_of(val),
            kind: AccessKind::Write,
            sources,
        });
    }
}

/// Replays the part before the loop silently, then records the loop.
pub fn build_complete(
    seq: &[TraceInstruction],
    partition: &TracePartition,
    mli: &[VarKey],
) -> DdgOutput {
    let mut b = DdgBuilder::new();
    b.set_recording(false);
    b.run(seq, partition.part_a.clone());
    b.set_recording(true);
    for key in mli {
        b.seed_vertex(key);
    }
    b.run(seq, partition.part_b.clone());
    b.finish()
}

/// Loop input variables reachable backwards from `start` without passing
/// through another loop input variable. `visited` and `seen_mli` carry over
/// between calls, so a second call only reports inputs not found before.
fn mli_ancestors_from(
    graph: &DepGraph,
    start: &[VertexId],
    by_addr: &HashMap<u64, &VarKey>,
    visited: &mut HashSet<VertexId>,
    seen_mli: &mut HashSet<VertexId>,
) -> Vec<VertexId> {
    let mut found = Vec::new();
    let mut stack: Vec<VertexId> = start.iter().rev().copied().collect();
    while let Some(p) = stack.pop() {
        let is_input = matches!(graph.vertex(p), Vertex::Var(k) if by_addr.contains_key(&k.address));
        if is_input {
            if seen_mli.insert(p) {
                found.push(p);
            }
        } else if visited.insert(p) {
            stack.extend(graph.parents(p).iter().rev());
        }
    }
    found
}

fn mli_ancestors(graph: &DepGraph, start: &[VertexId], by_addr: &HashMap<u64, &VarKey>) -> Vec<VertexId> {
    mli_ancestors_from(graph, start, by_addr, &mut HashSet::new(), &mut HashSet::new())
}

/// Removes every vertex that is not a loop input variable, linking each
/// input variable directly to the input variables it depends on.
pub fn contract(complete: &DepGraph, mli: &[VarKey]) -> DepGraph {
    let by_addr: HashMap<u64, &VarKey> = mli.iter().map(|k| (k.address, k)).collect();
    let mut out = DepGraph::default();
    for key in mli {
        out.var(key);
    }
    for key in mli {
        let Some(n) = complete.id(&Vertex::Var(key.clone())) else {
            continue;
        };
        let to = out.var(key);
        // Parents in order of their first edge time; each input ancestor is
        // credited to the earliest parent that reaches it.
        let mut parents: Vec<(u64, VertexId)> = complete
            .parents(n)
            .iter()
            .map(|&p| (complete.edge_time(p, n).unwrap_or(0), p))
            .collect();
        parents.sort_unstable();
        let (mut visited, mut seen_mli) = (HashSet::new(), HashSet::new());
        for (t, p) in parents {
            for a in mli_ancestors_from(complete, &[p], &by_addr, &mut visited, &mut seen_mli) {
                let Vertex::Var(k) = complete.vertex(a) else { continue };
                let canonical = by_addr[&k.address];
                let from = out.var(canonical);
                out.add_edge(from, to, t);
            }
        }
    }
    out
}

/// Reads and writes of loop input variables per source line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineDeps {
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
}

/// For each line with a write to a loop input variable, the input variables
/// written there and the input variables the written values depend on. A
/// source that is a local is replaced by the input variables it derives from.
pub fn line_summary(
    events: &[AccessEvent],
    complete: &DepGraph,
    mli: &[VarKey],
) -> BTreeMap<u32, LineDeps> {
    let by_addr: HashMap<u64, &VarKey> = mli.iter().map(|k| (k.address, k)).collect();
    let mut cache: HashMap<VarKey, Vec<String>> = HashMap::new();
    let mut out: BTreeMap<u32, LineDeps> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == AccessKind::Write) {
        let Some(dest) = by_addr.get(&e.variable.address) else {
            continue;
        };
        let entry = out.entry(e.line).or_default();
        entry.writes.insert(dest.name.clone());
        for s in &e.sources {
            if let Some(k) = by_addr.get(&s.address) {
                entry.reads.insert(k.name.clone());
                continue;
            }
            let names = cache.entry(s.clone()).or_insert_with(|| {
                let Some(id) = complete.id(&Vertex::Var(s.clone())) else {
                    return Vec::new();
                };
                mli_ancestors(complete, complete.parents(id), &by_addr)
                    .into_iter()
                    .filter_map(|a| match complete.vertex(a) {
                        Vertex::Var(k) => Some(by_addr[&k.address].name.clone()),
                        Vertex::Reg(_) => None,
                    })
                    .collect()
            });
            entry.reads.extend(names.iter().cloned());
        }
    }
    out
}
