//! Runs a mini program and writes its instruction trace.
//!
//! Code shape follows an unoptimized compiler: every variable lives in
//! memory, each use reloads it into a fresh numbered register, element
//! addresses come from `GetElementPtr`, heap blocks come from `malloc`, and
//! a call with a body is immediately followed by the callee's instructions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::program::{Arg, BinOp, Expr, Function, MiniProgram, ParamKind, Place, Shape, Stmt, Storage};
use crate::SynthError;

const MAIN_STACK: u64 = 0x7ff0_0000_0000;
const CALLEE_STACK: u64 = 0x7ff8_0000_0000;
const HEAP: u64 = 0x5555_0000_0000;
const ELEM: u64 = 8;

/// The trace plus what a test needs to interpret it.
#[derive(Debug, Clone)]
pub struct Emitted {
    pub trace: String,
    pub function: String,
    pub start_line: u32,
    pub end_line: u32,
    pub induction: String,
    /// Identity address of each `main` variable: the variable itself for
    /// scalars and stack arrays, the pointer slot for heap arrays.
    pub addresses: BTreeMap<String, u64>,
    /// Address of element 0 for every array in `main`.
    pub bases: BTreeMap<String, u64>,
    pub blocks: u64,
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Float(f64),
    Int(i64),
    Addr(u64),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Addr(a) => write!(f, "{a:#x}"),
        }
    }
}

/// An operand about to be written.
#[derive(Debug, Clone)]
enum Opnd {
    Reg { name: String, bits: u32, value: Value },
    Const { bits: u32, value: Value },
}

impl Opnd {
    fn num(&self) -> f64 {
        match self.value() {
            Value::Float(v) => v,
            Value::Int(v) => v as f64,
            Value::Addr(a) => a as f64,
        }
    }

    fn value(&self) -> Value {
        match self {
            Opnd::Reg { value, .. } | Opnd::Const { value, .. } => *value,
        }
    }

    fn named(name: &str, value: Value) -> Opnd {
        Opnd::Reg {
            name: name.to_string(),
            bits: 64,
            value,
        }
    }
}

/// Where a name's storage is, in the current frame.
#[derive(Debug, Clone, Copy)]
enum Loc {
    Scalar { addr: u64, bits: u32 },
    /// Arrays reached by `GetElementPtr` on the name itself.
    Array { base: u64 },
    /// Arrays reached through a pointer stored in `slot`.
    Indirect { slot: u64, base: u64 },
    UnsetPointer { slot: u64 },
}

struct Frame {
    function: String,
    bb: &'static str,
    next_reg: u32,
    scope: HashMap<String, Loc>,
}

struct Emitter<'p> {
    functions: HashMap<&'p str, &'p Function>,
    out: String,
    dyn_id: u64,
    frames: Vec<Frame>,
    mem: HashMap<u64, f64>,
    sp: u64,
    heap: u64,
}

fn align(n: u64) -> u64 {
    n.div_ceil(16) * 16
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

impl<'p> Emitter<'p> {
    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("a frame is always active")
    }

    fn reg(&mut self) -> String {
        let f = self.frame();
        f.next_reg += 1;
        f.next_reg.to_string()
    }

    fn instr(&mut self, line: u32, opcode: &str, inputs: &[&Opnd], params: &[(String, u64)], result: Option<&Opnd>) {
        self.dyn_id += 1;
        let frame = self.frames.last().expect("a frame is always active");
        let _ = writeln!(self.out, "I|{}|{}|{line}:1|{}|{opcode}", self.dyn_id, frame.function, frame.bb);
        let mut write = |slot: &str, o: &Opnd| {
            let _ = match o {
                Opnd::Reg { name, bits, value } => writeln!(self.out, "O|{slot}|{bits}|1|{name}|{value}"),
                Opnd::Const { bits, value } => writeln!(self.out, "O|{slot}|{bits}|0||{value}"),
            };
        };
        for (k, o) in inputs.iter().enumerate() {
            write(&(k + 1).to_string(), o);
        }
        for (name, addr) in params {
            write("f", &Opnd::named(name, Value::Addr(*addr)));
        }
        if let Some(r) = result {
            write("r", r);
        }
        self.out.push('\n');
    }

    fn loc(&self, name: &str) -> Loc {
        *self
            .frames
            .last()
            .and_then(|f| f.scope.get(name))
            .unwrap_or_else(|| panic!("validated program uses undeclared `{name}`"))
    }

    fn load_scalar(&mut self, name: &str, line: u32) -> Opnd {
        let Loc::Scalar { addr, bits } = self.loc(name) else {
            panic!("`{name}` is not a scalar");
        };
        let v = self.mem.get(&addr).copied().unwrap_or(0.0);
        let value = if bits == 64 { Value::Float(v) } else { Value::Int(v as i64) };
        let r = Opnd::Reg { name: self.reg(), bits, value };
        self.instr(line, "Load", &[&Opnd::named(name, Value::Addr(addr))], &[], Some(&r));
        if bits == 64 {
            return r;
        }
        let wide = Opnd::Reg {
            name: self.reg(),
            bits: 64,
            value: Value::Float(v),
        };
        self.instr(line, "BitCast", &[&r], &[], Some(&wide));
        wide
    }

    /// Register holding an array's base address, loading the pointer slot
    /// when the array is reached indirectly.
    fn array_base(&mut self, name: &str, line: u32) -> (Opnd, u64) {
        match self.loc(name) {
            Loc::Array { base } => (Opnd::named(name, Value::Addr(base)), base),
            Loc::Indirect { slot, base } => {
                let r = Opnd::Reg {
                    name: self.reg(),
                    bits: 64,
                    value: Value::Addr(base),
                };
                self.instr(line, "Load", &[&Opnd::named(name, Value::Addr(slot))], &[], Some(&r));
                (r, base)
            }
            other => panic!("`{name}` is not an array: {other:?}"),
        }
    }

    fn elem_ptr(&mut self, name: &str, i: u32, line: u32) -> (Opnd, u64) {
        let (base_op, base) = self.array_base(name, line);
        let addr = base + ELEM * u64::from(i);
        let r = Opnd::Reg {
            name: self.reg(),
            bits: 64,
            value: Value::Addr(addr),
        };
        let idx = Opnd::Const {
            bits: 64,
            value: Value::Int(i64::from(i)),
        };
        self.instr(line, "GetElementPtr", &[&base_op, &idx], &[], Some(&r));
        (r, addr)
    }

    fn load_elem(&mut self, name: &str, i: u32, line: u32) -> (Opnd, u64) {
        let (ptr, addr) = self.elem_ptr(name, i, line);
        let v = self.mem.get(&addr).copied().unwrap_or(0.0);
        let r = Opnd::Reg {
            name: self.reg(),
            bits: 64,
            value: Value::Float(v),
        };
        self.instr(line, "Load", &[&ptr], &[], Some(&r));
        (r, addr)
    }

    fn expr(&mut self, e: &Expr, line: u32) -> Opnd {
        match e {
            Expr::Const(c) => Opnd::Const {
                bits: 64,
                value: Value::Float(*c),
            },
            Expr::Var(n) => self.load_scalar(n, line),
            Expr::Elem(n, i) => self.load_elem(n, *i, line).0,
            Expr::Bin(op, l, r) => {
                let a = self.expr(l, line);
                let b = self.expr(r, line);
                let (x, y) = (a.num(), b.num());
                let v = match op {
                    BinOp::Add | BinOp::FAdd => x + y,
                    BinOp::Sub | BinOp::FSub => x - y,
                    BinOp::Mul | BinOp::FMul => x * y,
                    BinOp::UDiv | BinOp::SDiv | BinOp::FDiv => {
                        if y == 0.0 {
                            0.0
                        } else {
                            x / y
                        }
                    }
                };
                let res = Opnd::Reg {
                    name: self.reg(),
                    bits: 64,
                    value: Value::Float(finite(v)),
                };
                self.instr(line, op.mnemonic(), &[&a, &b], &[], Some(&res));
                res
            }
            Expr::Cast(x) => {
                let a = self.expr(x, line);
                if let Opnd::Const { .. } = a {
                    return a;
                }
                let res = Opnd::Reg {
                    name: self.reg(),
                    bits: 64,
                    value: a.value(),
                };
                self.instr(line, "BitCast", &[&a], &[], Some(&res));
                res
            }
            Expr::Builtin(name, args) => {
                let ops: Vec<Opnd> = args.iter().map(|a| self.expr(a, line)).collect();
                let first = ops.first().map_or(0.0, Opnd::num);
                let v = match name.as_str() {
                    "sqrt" => first.abs().sqrt(),
                    "exp" => first.min(50.0).exp(),
                    "fabs" => first.abs(),
                    "pow" => first.powf(ops.get(1).map_or(1.0, Opnd::num).clamp(-4.0, 4.0)),
                    _ => 0.0,
                };
                let callee = Opnd::named(name, Value::Int(0));
                let res = Opnd::Reg {
                    name: self.reg(),
                    bits: 64,
                    value: Value::Float(finite(v)),
                };
                let mut inputs: Vec<&Opnd> = ops.iter().collect();
                inputs.push(&callee);
                self.instr(line, "Call", &inputs, &[], Some(&res));
                res
            }
            Expr::Call(f, args) => self.call(f, args, line),
        }
    }

    fn store(&mut self, value: &Opnd, target: &Place, line: u32) {
        let v = value.num();
        match target {
            Place::Var(n) => {
                let Loc::Scalar { addr, .. } = self.loc(n) else {
                    panic!("`{n}` is not a scalar");
                };
                self.mem.insert(addr, v);
                self.instr(line, "Store", &[value, &Opnd::named(n, Value::Addr(addr))], &[], None);
            }
            Place::Elem(n, i) => {
                let (ptr, addr) = self.elem_ptr(n, *i, line);
                self.mem.insert(addr, v);
                self.instr(line, "Store", &[value, &ptr], &[], None);
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        let line = s.line().expect("lines are assigned before emission");
        match s {
            Stmt::Assign { target, value, .. } => {
                let v = self.expr(value, line);
                self.store(&v, target, line);
            }
            Stmt::Call { func, args, .. } => {
                self.call(func, args, line);
            }
            Stmt::Eval { value, .. } => {
                self.expr(value, line);
            }
            Stmt::PointerAssign { pointer, target, .. } => {
                let slot = match self.loc(pointer) {
                    Loc::UnsetPointer { slot } | Loc::Indirect { slot, .. } => slot,
                    other => panic!("`{pointer}` is not a pointer: {other:?}"),
                };
                let base = match self.loc(target) {
                    Loc::Array { .. } => {
                        let (ptr, base) = self.elem_ptr(target, 0, line);
                        self.instr(line, "Store", &[&ptr, &Opnd::named(pointer, Value::Addr(slot))], &[], None);
                        base
                    }
                    _ => {
                        let (reg, base) = self.array_base(target, line);
                        self.instr(line, "Store", &[&reg, &Opnd::named(pointer, Value::Addr(slot))], &[], None);
                        base
                    }
                };
                self.frame().scope.insert(pointer.clone(), Loc::Indirect { slot, base });
            }
        }
    }

    /// Emits a call with its body; the call block is written after the body
    /// has run because it carries the returned value.
    fn call(&mut self, fname: &str, args: &[Arg], line: u32) -> Opnd {
        let func = self.functions[fname];
        let mut arg_ops: Vec<Opnd> = Vec::new();
        let mut scope = HashMap::new();
        let saved_sp = self.sp;
        let mut params: Vec<(String, u64)> = Vec::new();
        for (a, p) in args.iter().zip(&func.params) {
            let (op, loc) = match (a, p.kind) {
                (Arg::Const(c), ParamKind::Scalar) => {
                    let slot = self.sp;
                    self.sp += 16;
                    self.mem.insert(slot, *c);
                    let op = Opnd::Const {
                        bits: 64,
                        value: Value::Float(*c),
                    };
                    (op, Loc::Scalar { addr: slot, bits: 64 })
                }
                (Arg::Var(n), ParamKind::Scalar) => {
                    let Loc::Scalar { addr, .. } = self.loc(n) else {
                        panic!("`{n}` is not a scalar");
                    };
                    (self.load_scalar(n, line), Loc::Scalar { addr, bits: 64 })
                }
                (Arg::Elem(n, i), ParamKind::Scalar) => {
                    let (op, addr) = self.load_elem(n, *i, line);
                    (op, Loc::Scalar { addr, bits: 64 })
                }
                (Arg::Var(n), ParamKind::Array { .. }) => {
                    let (op, base) = self.array_base(n, line);
                    (op, Loc::Array { base })
                }
                (a, k) => panic!("validated call passes {a:?} for {k:?}"),
            };
            let addr = match loc {
                Loc::Scalar { addr, .. } => addr,
                Loc::Array { base } => base,
                _ => unreachable!("parameters are scalars or arrays"),
            };
            params.push((p.name.clone(), addr));
            scope.insert(p.name.clone(), loc);
            arg_ops.push(op);
        }
        let result_name = func.ret.as_ref().map(|_| self.reg());

        let caller_out = std::mem::take(&mut self.out);
        let call_id = self.dyn_id + 1;
        self.dyn_id += 1;
        self.frames.push(Frame {
            function: func.name.clone(),
            bb: "entry",
            next_reg: 0,
            scope,
        });
        let fline = func.line.expect("lines are assigned before emission");
        for d in &func.locals {
            let size = match d.shape {
                Shape::Array { len, .. } => u64::from(len) * ELEM,
                _ => ELEM,
            };
            let addr = self.sp;
            self.sp += align(size);
            let loc = match d.shape {
                Shape::Array { .. } => Loc::Array { base: addr },
                _ => Loc::Scalar { addr, bits: 64 },
            };
            self.frame().scope.insert(d.name.clone(), loc);
            self.instr(
                d.line.unwrap_or(fline),
                "Alloca",
                &[&Opnd::Const { bits: 64, value: Value::Int(size as i64) }],
                &[],
                Some(&Opnd::named(&d.name, Value::Addr(addr))),
            );
        }
        for s in &func.body {
            self.stmt(s);
        }
        let ret_line = func.ret_line.unwrap_or(fline);
        let ret = func.ret.as_ref().map(|e| self.expr(e, ret_line));
        match &ret {
            Some(v) => self.instr(ret_line, "Ret", &[v], &[], None),
            None => self.instr(ret_line, "Ret", &[], &[], None),
        }
        self.frames.pop();
        self.sp = saved_sp;
        let body = std::mem::replace(&mut self.out, caller_out);

        let result = result_name.map(|name| Opnd::Reg {
            name,
            bits: 64,
            value: Value::Float(ret.as_ref().map_or(0.0, Opnd::num)),
        });
        let callee = Opnd::named(&func.name, Value::Int(0));
        let mut inputs: Vec<&Opnd> = arg_ops.iter().collect();
        inputs.push(&callee);
        let after = self.dyn_id;
        self.dyn_id = call_id - 1;
        self.instr(line, "Call", &inputs, &params, result.as_ref());
        self.dyn_id = after;
        self.out.push_str(&body);
        result.unwrap_or(Opnd::Const {
            bits: 64,
            value: Value::Float(0.0),
        })
    }

    fn alloc_heap(&mut self, name: &str, slot: u64, len: u32, storage: Storage, line: u32) -> u64 {
        let size = u64::from(len) * ELEM;
        let base = self.heap;
        self.heap += align(size);
        let malloc = Opnd::named("malloc", Value::Int(0));
        let size_op = if storage == Storage::Opaque {
            let r = Opnd::Reg {
                name: self.reg(),
                bits: 64,
                value: Value::Int(size as i64),
            };
            self.instr(line, "Call", &[&Opnd::named("get_size", Value::Int(0))], &[], Some(&r));
            r
        } else {
            Opnd::Const {
                bits: 64,
                value: Value::Int(size as i64),
            }
        };
        let raw = Opnd::Reg {
            name: self.reg(),
            bits: 64,
            value: Value::Addr(base),
        };
        self.instr(line, "Call", &[&size_op, &malloc], &[], Some(&raw));
        let cast = Opnd::Reg {
            name: self.reg(),
            bits: 64,
            value: Value::Addr(base),
        };
        self.instr(line, "BitCast", &[&raw], &[], Some(&cast));
        self.instr(line, "Store", &[&cast, &Opnd::named(name, Value::Addr(slot))], &[], None);
        base
    }

    fn set_bb(&mut self, bb: &'static str) {
        self.frame().bb = bb;
    }
}

/// Lays out, validates and runs `program`, returning its trace.
pub fn emit(program: &MiniProgram) -> Result<Emitted, SynthError> {
    let mut prog = program.clone();
    prog.layout();
    prog.validate()?;
    let functions = prog.functions.iter().map(|f| (f.name.as_str(), f)).collect();
    let mut em = Emitter {
        functions,
        out: String::new(),
        dyn_id: 0,
        frames: vec![Frame {
            function: "main".into(),
            bb: "entry",
            next_reg: 0,
            scope: HashMap::new(),
        }],
        mem: HashMap::new(),
        sp: CALLEE_STACK,
        heap: HEAP,
    };
    let lp = &prog.main_loop;
    let (start, end) = (lp.start_line.expect("laid out"), lp.end_line.expect("laid out"));
    let main_line = prog.main_line.expect("laid out");

    let mut addresses = BTreeMap::new();
    let mut bases = BTreeMap::new();
    let mut next = MAIN_STACK;
    for d in &prog.declarations {
        let is_it = d.name == lp.induction;
        let size = match d.shape {
            Shape::Array { len, storage: Storage::Stack } => u64::from(len) * ELEM,
            _ if is_it => 4,
            _ => ELEM,
        };
        let addr = next;
        next += align(size);
        addresses.insert(d.name.clone(), addr);
        let loc = match d.shape {
            Shape::Scalar => Loc::Scalar {
                addr,
                bits: if is_it { 32 } else { 64 },
            },
            Shape::Array { storage: Storage::Stack, .. } => {
                bases.insert(d.name.clone(), addr);
                Loc::Array { base: addr }
            }
            Shape::Array { .. } => Loc::Indirect { slot: addr, base: 0 },
            Shape::Pointer => Loc::UnsetPointer { slot: addr },
        };
        em.frame().scope.insert(d.name.clone(), loc);
        em.instr(
            d.line.unwrap_or(main_line),
            "Alloca",
            &[&Opnd::Const { bits: 64, value: Value::Int(size as i64) }],
            &[],
            Some(&Opnd::named(&d.name, Value::Addr(addr))),
        );
    }
    for (k, d) in prog.declarations.iter().enumerate() {
        let line = d.line.unwrap_or(main_line);
        let addr = addresses[&d.name];
        if let Shape::Array { len, storage: s @ (Storage::Heap | Storage::Opaque) } = d.shape {
            let base = em.alloc_heap(&d.name, addr, len, s, line);
            bases.insert(d.name.clone(), base);
            em.frame().scope.insert(d.name.clone(), Loc::Indirect { slot: addr, base });
        }
        if !d.initialized {
            continue;
        }
        let init = |i: u32| Opnd::Const {
            bits: 64,
            value: Value::Float((k as f64) + f64::from(i) + 1.0),
        };
        match d.shape {
            Shape::Array { len, .. } => {
                for i in 0..len {
                    em.store(&init(i), &Place::Elem(d.name.clone(), i), line);
                }
            }
            _ => em.store(&init(0), &Place::Var(d.name.clone()), line),
        }
    }
    for s in &prog.pre_loop {
        em.stmt(s);
    }
    for (name, loc) in &em.frames[0].scope {
        if let Loc::Indirect { base, .. } = loc {
            bases.insert(name.clone(), *base);
        }
    }

    let it = lp.induction.clone();
    let it_addr = addresses[&it];
    let int32 = |v: i64| Opnd::Const {
        bits: 32,
        value: Value::Int(v),
    };
    em.store(&int32(0), &Place::Var(it.clone()), start);
    let loop_regs = em.frame().next_reg;
    let check = |em: &mut Emitter, k: u32| {
        em.set_bb("for.cond");
        let cur = Opnd::Reg {
            name: em.reg(),
            bits: 32,
            value: Value::Int(i64::from(k)),
        };
        em.instr(start, "Load", &[&Opnd::named(&it, Value::Addr(it_addr))], &[], Some(&cur));
        let cond = Opnd::Reg {
            name: em.reg(),
            bits: 1,
            value: Value::Int(i64::from(k < lp.iterations)),
        };
        em.instr(start, "ICmp", &[&cur, &int32(i64::from(lp.iterations))], &[], Some(&cond));
        em.instr(start, "Br", &[&cond], &[], None);
    };
    for k in 0..lp.iterations {
        em.frame().next_reg = loop_regs;
        check(&mut em, k);
        em.set_bb("for.body");
        for s in &lp.body {
            em.stmt(s);
        }
        em.set_bb("for.inc");
        let cur = Opnd::Reg {
            name: em.reg(),
            bits: 32,
            value: Value::Int(i64::from(k)),
        };
        em.instr(start, "Load", &[&Opnd::named(&it, Value::Addr(it_addr))], &[], Some(&cur));
        let inc = Opnd::Reg {
            name: em.reg(),
            bits: 32,
            value: Value::Int(i64::from(k) + 1),
        };
        em.instr(start, "Add", &[&cur, &int32(1)], &[], Some(&inc));
        em.mem.insert(it_addr, f64::from(k + 1));
        em.instr(start, "Store", &[&inc, &Opnd::named(&it, Value::Addr(it_addr))], &[], None);
    }
    em.frame().next_reg = loop_regs;
    check(&mut em, lp.iterations);
    em.set_bb("for.end");
    for s in &prog.post_loop {
        em.stmt(s);
    }
    let last = prog
        .post_loop
        .iter()
        .filter_map(Stmt::line)
        .max()
        .unwrap_or(end)
        .max(end)
        + 1;
    em.instr(last, "Ret", &[&int32(0)], &[], None);

    Ok(Emitted {
        trace: em.out,
        function: "main".into(),
        start_line: start,
        end_line: end,
        induction: it,
        addresses,
        bases,
        blocks: em.dyn_id,
    })
}
