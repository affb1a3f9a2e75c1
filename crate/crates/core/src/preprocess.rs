//! Splitting the trace around the main loop and finding its input variables.
//!
//! A loop input variable is one that takes part in computation both before
//! the loop and at the loop's own level inside it. Work done inside calls made
//! from the loop is skipped when collecting the loop side, so same-named
//! locals of helper functions cannot be mistaken for loop inputs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::ops::Range;

use crate::error::{AnalysisError, Warning};
use crate::trace::{call_has_body, Opcode, Operand, TraceInstruction};

/// Where the main computation loop lives in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopSpec {
    pub function: String,
    pub start_line: u32,
    pub end_line: u32,
    pub induction_hint: Option<String>,
}

impl LoopSpec {
    pub fn new(function: impl Into<String>, start_line: u32, end_line: u32) -> Self {
        LoopSpec {
            function: function.into(),
            start_line,
            end_line,
            induction_hint: None,
        }
    }

    pub fn with_induction(mut self, name: impl Into<String>) -> Self {
        self.induction_hint = Some(name.into());
        self
    }

    fn contains(&self, line: u32) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }
}

/// A program variable: the address it lives at plus its source name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarKey {
    pub address: u64,
    pub name: String,
}

impl VarKey {
    pub fn new(address: u64, name: impl Into<String>) -> Self {
        VarKey {
            address,
            name: name.into(),
        }
    }

    pub(crate) fn of(op: &Operand) -> Self {
        VarKey::new(op.addr(), op.name.clone())
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{:#x}", self.name, self.address)
    }
}

/// Index ranges of the instructions before, inside and after the loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePartition {
    pub part_a: Range<usize>,
    pub part_b: Range<usize>,
    pub part_c: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarEntry {
    pub first_dyn_id: u64,
    pub function: String,
    pub line: u32,
}

/// Variables seen in a trace range, keyed by identity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarTable {
    entries: BTreeMap<VarKey, VarEntry>,
}

impl VarTable {
    fn note(&mut self, key: VarKey, ins: &TraceInstruction) {
        debug_assert!(crate::trace::is_variable_name(&key.name));
        self.entries.entry(key).or_insert_with(|| VarEntry {
            first_dyn_id: ins.dyn_id,
            function: ins.function.clone(),
            line: ins.line,
        });
    }

    pub fn get(&self, key: &VarKey) -> Option<&VarEntry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &VarKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarKey, &VarEntry)> {
        self.entries.iter()
    }

    /// Keys ordered by first occurrence.
    pub fn keys_in_order(&self) -> Vec<VarKey> {
        let mut keys: Vec<(&VarKey, u64)> =
            self.entries.iter().map(|(k, e)| (k, e.first_dyn_id)).collect();
        keys.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        keys.into_iter().map(|(k, _)| k.clone()).collect()
    }
}

/// Pointer variables and what they point to.
///
/// A pointer assignment `p = &x` (or `p = q` with `q` already a pointer)
/// makes later uses of `p` stand for `x`. Variables that receive a heap
/// block are pointers too, but own their storage.
#[derive(Debug, Clone, Default)]
pub struct Pointers {
    aliases: HashMap<VarKey, VarKey>,
    heap_owners: HashSet<VarKey>,
}

impl Pointers {
    /// Follows pointer assignments to the variable that owns the storage.
    pub fn resolve(&self, key: VarKey) -> VarKey {
        let mut cur = key;
        let mut hops = 0;
        while let Some(next) = self.aliases.get(&cur) {
            cur = next.clone();
            hops += 1;
            if hops > self.aliases.len() {
                break;
            }
        }
        cur
    }

    pub fn is_pointer(&self, key: &VarKey) -> bool {
        self.aliases.contains_key(key) || self.heap_owners.contains(key)
    }

    pub fn assign(&mut self, pointer: VarKey, target: VarKey) {
        let target = self.resolve(target);
        if target != pointer {
            self.heap_owners.remove(&pointer);
            self.aliases.insert(pointer, target);
        }
    }

    pub fn own_heap(&mut self, key: VarKey) {
        self.aliases.remove(&key);
        self.heap_owners.insert(key);
    }

    pub fn forget(&mut self, key: &VarKey) {
        self.aliases.remove(key);
    }
}

pub(crate) fn is_alloc_call(name: &str) -> bool {
    matches!(name, "malloc" | "calloc" | "realloc" | "aligned_alloc")
}

/// Splits `seq` into the parts before, inside and after the loop.
///
/// An instruction belongs to the loop when its anchor line lies in the loop's
/// range. The anchor is the instruction's own line when it executes in the
/// loop function, and the line of the outstanding call when it executes in a
/// function called from there. Allocas are declarations and never anchor.
pub fn partition(seq: &[TraceInstruction], spec: &LoopSpec) -> Result<TracePartition, AnalysisError> {
    if spec.start_line > spec.end_line {
        return Err(AnalysisError::InvalidLoop {
            start: spec.start_line,
            end: spec.end_line,
        });
    }
    let not_found = || AnalysisError::LoopNotFound {
        function: spec.function.clone(),
        start: spec.start_line,
        end: spec.end_line,
    };
    let Some(first) = seq.first() else {
        return Err(not_found());
    };
    // (function, line of the call it is currently making)
    let mut stack: Vec<(&str, u32)> = vec![(first.function.as_str(), 0)];
    let mut range: Option<(usize, usize)> = None;
    for (i, ins) in seq.iter().enumerate() {
        let level = stack.iter().position(|(f, _)| *f == spec.function);
        let anchor = match level {
            Some(l) if l + 1 == stack.len() => Some(ins.line),
            Some(l) => Some(stack[l].1),
            None => None,
        };
        if ins.opcode != Opcode::Alloca && anchor.is_some_and(|a| spec.contains(a)) {
            range = Some(range.map_or((i, i), |(s, _)| (s, i)));
        }
        match ins.opcode {
            Opcode::Call if call_has_body(seq, i) => {
                if let Some(top) = stack.last_mut() {
                    top.1 = ins.line;
                }
                stack.push((seq[i + 1].function.as_str(), 0));
            }
            Opcode::Ret if stack.len() > 1 => {
                stack.pop();
            }
            _ => {}
        }
    }
    let (s, e) = range.ok_or_else(not_found)?;
    Ok(TracePartition {
        part_a: 0..s,
        part_b: s..e + 1,
        part_c: e + 1..seq.len(),
    })
}

#[derive(Debug, Clone)]
enum RegInfo {
    Var { key: VarKey, address: bool },
    Heap,
}

/// Collects the variables referenced by computation in `range`.
///
/// With `bypass_calls`, the bodies of calls made from the range are skipped;
/// the call sites themselves still count.
pub fn collect_arithmetic_vars(
    seq: &[TraceInstruction],
    range: Range<usize>,
    bypass_calls: bool,
) -> VarTable {
    collect_with(seq, range, bypass_calls, &mut Pointers::default())
}

/// Like [`collect_arithmetic_vars`], continuing from known pointer state.
pub fn collect_with(
    seq: &[TraceInstruction],
    range: Range<usize>,
    bypass_calls: bool,
    pointers: &mut Pointers,
) -> VarTable {
    let mut table = VarTable::default();
    let mut frames: Vec<HashMap<&str, RegInfo>> = vec![HashMap::new()];
    let mut skip_depth = 0usize;
    for i in range {
        let ins = &seq[i];
        if skip_depth > 0 {
            match ins.opcode {
                Opcode::Call if call_has_body(seq, i) => skip_depth += 1,
                Opcode::Ret => skip_depth -= 1,
                _ => {}
            }
            continue;
        }
        let regs = frames.last_mut().expect("base frame is never popped");
        if let Some(res) = ins.result() {
            regs.remove(res.name.as_str());
        }
        match ins.opcode {
            Opcode::Load | Opcode::GetElementPtr | Opcode::BitCast => {
                let Some(src) = ins.input(1) else { continue };
                let info = if src.is_named() {
                    let own = VarKey::of(src);
                    let pointer = pointers.is_pointer(&own);
                    let key = pointers.resolve(own);
                    table.note(key.clone(), ins);
                    let address = ins.opcode != Opcode::Load || pointer;
                    Some(RegInfo::Var { key, address })
                } else if src.is_temp() {
                    match (regs.get(src.name.as_str()), &ins.opcode) {
                        (Some(RegInfo::Var { key, .. }), Opcode::GetElementPtr) => Some(RegInfo::Var {
                            key: key.clone(),
                            address: true,
                        }),
                        (Some(RegInfo::Var { key, .. }), Opcode::Load) => Some(RegInfo::Var {
                            key: key.clone(),
                            address: false,
                        }),
                        (Some(other), _) => Some(other.clone()),
                        (None, _) => None,
                    }
                } else {
                    None
                };
                if let (Some(res), Some(info)) = (ins.result(), info) {
                    regs.insert(res.name.as_str(), info);
                }
            }
            Opcode::Store => {
                let (Some(val), Some(dst)) = (ins.input(1), ins.input(2)) else { continue };
                if !dst.is_named() {
                    continue;
                }
                let dkey = VarKey::of(dst);
                if val.is_named() {
                    let src = pointers.resolve(VarKey::of(val));
                    table.note(src.clone(), ins);
                    pointers.assign(dkey, src);
                    continue;
                }
                match regs.get(val.name.as_str()).filter(|_| val.is_temp()) {
                    Some(RegInfo::Var { key, address: true }) => {
                        table.note(key.clone(), ins);
                        pointers.assign(dkey, key.clone());
                    }
                    Some(RegInfo::Heap) => {
                        table.note(dkey.clone(), ins);
                        pointers.own_heap(dkey);
                    }
                    _ => {
                        pointers.forget(&dkey);
                        table.note(dkey, ins);
                    }
                }
            }
            Opcode::Call => {
                let (args, callee) = ins.call_parts();
                for a in args.iter().filter(|a| a.is_named()) {
                    table.note(pointers.resolve(VarKey::of(a)), ins);
                }
                if call_has_body(seq, i) {
                    if bypass_calls {
                        skip_depth = 1;
                    } else {
                        frames.push(HashMap::new());
                    }
                } else if let (Some(res), Some(callee)) = (ins.result(), callee) {
                    if is_alloc_call(&callee.name) {
                        regs.insert(res.name.as_str(), RegInfo::Heap);
                    }
                }
            }
            Opcode::Ret if frames.len() > 1 => {
                frames.pop();
            }
            _ => {}
        }
    }
    table
}

/// Keys present in both tables, ordered by first occurrence in `inside`.
pub fn match_mli(before: &VarTable, inside: &VarTable) -> Vec<VarKey> {
    inside
        .keys_in_order()
        .into_iter()
        .filter(|k| before.contains(k))
        .collect()
}

/// Everything the preprocessing stage produces.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub partition: TracePartition,
    pub before: VarTable,
    pub inside: VarTable,
    pub mli: Vec<VarKey>,
    pub warnings: Vec<Warning>,
}

/// Partitions the trace and derives the loop input set.
pub fn preprocess(seq: &[TraceInstruction], spec: &LoopSpec) -> Result<Preprocessed, AnalysisError> {
    let partition = partition(seq, spec)?;
    let mut pointers = Pointers::default();
    let before = collect_with(seq, partition.part_a.clone(), false, &mut pointers);
    let inside = collect_with(seq, partition.part_b.clone(), true, &mut pointers.clone());
    let mli = match_mli(&before, &inside);

    let mut warnings = Vec::new();
    let everywhere = collect_with(seq, partition.part_b.clone(), false, &mut pointers.clone());
    let mli_set: HashSet<&VarKey> = mli.iter().collect();
    let call_only: Vec<String> = everywhere
        .keys_in_order()
        .into_iter()
        .filter(|k| before.contains(k) && !inside.contains(k) && !mli_set.contains(k))
        .map(|k| k.name)
        .collect();
    if !call_only.is_empty() {
        warnings.push(Warning::CallOnlyVariables { names: call_only });
    }
    let before_names: HashMap<&str, Vec<&VarKey>> =
        before.iter().fold(HashMap::new(), |mut m, (k, _)| {
            m.entry(k.name.as_str()).or_default().push(k);
            m
        });
    for key in inside.keys_in_order() {
        if before.contains(&key) {
            continue;
        }
        if before_names.contains_key(key.name.as_str()) {
            warnings.push(Warning::AddressMismatch { name: key.name });
        }
    }
    Ok(Preprocessed {
        partition,
        before,
        inside,
        mli,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace;

    fn seq(text: &str) -> Vec<TraceInstruction> {
        parse_trace(text.as_bytes(), 1).unwrap()
    }

    const SMALL: &str = "\
I|1|main|2:1|entry|Alloca
O|1|64|0||8
O|r|64|1|x|0x100

I|2|main|3:1|entry|Store
O|1|64|0||1.0
O|2|64|1|x|0x100

I|3|main|5:1|body|Load
O|1|64|1|x|0x100
O|r|64|1|1|0

I|4|main|5:1|body|FAdd
O|1|64|1|1|0
O|2|64|0||2.0
O|r|64|1|2|0

I|5|main|5:1|body|Store
O|1|64|1|2|0
O|2|64|1|x|0x100

I|6|main|8:1|exit|Ret
";

    #[test]
    fn three_parts_cover_sequence() {
        let s = seq(SMALL);
        let p = partition(&s, &LoopSpec::new("main", 4, 6)).unwrap();
        assert_eq!(p.part_a, 0..2);
        assert_eq!(p.part_b, 2..5);
        assert_eq!(p.part_c, 5..6);
    }

    #[test]
    fn whole_program_loop_leaves_outer_parts_empty() {
        let s = seq(SMALL);
        let p = partition(&s, &LoopSpec::new("main", 1, 100)).unwrap();
        // The leading alloca never anchors, so it stays before the loop.
        assert_eq!(p.part_a, 0..1);
        assert_eq!(p.part_c, 6..6);
        let s2: Vec<_> = s[1..].to_vec();
        let p = partition(&s2, &LoopSpec::new("main", 1, 100)).unwrap();
        assert!(p.part_a.is_empty() && p.part_c.is_empty());
    }

    #[test]
    fn absent_function_is_loop_not_found() {
        let s = seq(SMALL);
        assert!(matches!(
            partition(&s, &LoopSpec::new("solve", 1, 100)),
            Err(AnalysisError::LoopNotFound { .. })
        ));
        assert!(matches!(
            partition(&s, &LoopSpec::new("main", 9, 3)),
            Err(AnalysisError::InvalidLoop { .. })
        ));
    }

    #[test]
    fn branch_only_range_is_empty() {
        let s = seq("I|1|main|1:1|a|Br\n\nI|2|main|1:1|a|Br\nO|1|1|1|3|1\n\n");
        assert!(collect_arithmetic_vars(&s, 0..2, false).is_empty());
    }

    #[test]
    fn numeric_names_never_collected() {
        let s = seq(SMALL);
        let t = collect_arithmetic_vars(&s, 0..s.len(), false);
        assert_eq!(t.keys_in_order(), vec![VarKey::new(0x100, "x")]);
        assert_eq!(t.get(&VarKey::new(0x100, "x")).unwrap().first_dyn_id, 2);
    }

    #[test]
    fn matching_is_by_address_and_name() {
        let s = seq(SMALL);
        let a = collect_arithmetic_vars(&s, 0..2, false);
        let b = collect_arithmetic_vars(&s, 2..5, true);
        assert_eq!(match_mli(&a, &b), vec![VarKey::new(0x100, "x")]);
        let other = seq("I|1|main|3:1|e|Load\nO|1|64|1|x|0x200\nO|r|64|1|1|0\n\n");
        let c = collect_arithmetic_vars(&other, 0..1, false);
        assert!(match_mli(&a, &c).is_empty());
        assert!(match_mli(&VarTable::default(), &b).is_empty());
    }

    #[test]
    fn pointer_assignment_resolves_to_source() {
        let text = "\
I|1|main|2:1|e|Store
O|1|64|1|arr|0x100
O|2|64|1|ptr|0x300

I|2|main|3:1|e|Load
O|1|64|1|ptr|0x300
O|r|64|1|1|0x100

I|3|main|3:1|e|GetElementPtr
O|1|64|1|1|0x100
O|2|64|0||1
O|r|64|1|2|0x108

I|4|main|3:1|e|Store
O|1|64|0||4.0
O|2|64|1|2|0x108
";
        let s = seq(text);
        let t = collect_arithmetic_vars(&s, 0..s.len(), false);
        assert_eq!(t.keys_in_order(), vec![VarKey::new(0x100, "arr")]);
    }
}
