//! Element-level access histories and the checkpoint decision per variable.
//!
//! Decision order for a loop input variable:
//!
//! 1. `WAR` when some element is first read in the loop and written later,
//!    so the value carried into an iteration is overwritten.
//! 2. `Outcome` when the loop only writes it.
//! 3. Otherwise, if it is both written and read, it must be fully
//!    overwritten before its first read to be safe. A partial overwrite, or
//!    an unknown extent, makes it `RAPO`.
//! 4. Everything else is `NotCritical`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::ddg::{AccessEvent, AccessKind, Extent};
use crate::error::Warning;
use crate::preprocess::{LoopSpec, TracePartition, VarKey};
use crate::trace::{call_has_body, Opcode, TraceInstruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    War,
    Outcome,
    Rapo,
    Index,
    NotCritical,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::War => "WAR",
            Pattern::Outcome => "Outcome",
            Pattern::Rapo => "RAPO",
            Pattern::Index => "Index",
            Pattern::NotCritical => "NotCritical",
        }
    }

    pub fn is_critical(self) -> bool {
        self != Pattern::NotCritical
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ElementLog {
    /// Widest access seen, in bytes.
    pub width: u32,
    pub accesses: Vec<(u64, AccessKind)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementHistory {
    pub variable: VarKey,
    pub extent: Option<Extent>,
    pub elements: BTreeMap<u64, ElementLog>,
}

/// Groups loop events by loop input variable and element.
///
/// The extent comes from the variable's allocation when it was seen. A
/// variable without allocation info that is only ever accessed at its own
/// address is a scalar of the accessed width; anything else is unknown.
pub fn build_histories(
    events: &[AccessEvent],
    mli: &[VarKey],
    extents: &HashMap<VarKey, Option<Extent>>,
) -> BTreeMap<VarKey, ElementHistory> {
    let by_addr: HashMap<u64, &VarKey> = mli.iter().map(|k| (k.address, k)).collect();
    let mut out: BTreeMap<VarKey, ElementHistory> = BTreeMap::new();
    for e in events {
        let Some(&key) = by_addr.get(&e.variable.address) else {
            continue;
        };
        let h = out.entry(key.clone()).or_insert_with(|| ElementHistory {
            variable: key.clone(),
            extent: None,
            elements: BTreeMap::new(),
        });
        let log = h.elements.entry(e.element_addr).or_default();
        log.width = log.width.max(e.width);
        log.accesses.push((e.t, e.kind));
    }
    for h in out.values_mut() {
        h.extent = match extents.get(&h.variable) {
            Some(known) => *known,
            None => {
                let scalar = h.elements.keys().all(|&a| a == h.variable.address);
                scalar.then(|| Extent {
                    base: h.variable.address,
                    size: h.elements.values().map(|l| u64::from(l.width)).max().unwrap_or(1),
                })
            }
        };
    }
    out
}

/// Whether the byte ranges `[addr, addr + width)` cover the whole extent.
fn covers(extent: Extent, spans: &mut [(u64, u64)]) -> bool {
    spans.sort_unstable();
    let end = extent.base + extent.size;
    let mut reached = extent.base;
    for &(s, e) in spans.iter() {
        if s > reached {
            return false;
        }
        reached = reached.max(e);
        if reached >= end {
            return true;
        }
    }
    reached >= end
}

pub fn classify(h: &ElementHistory) -> Pattern {
    let war = h.elements.values().any(|log| {
        matches!(log.accesses.first(), Some((_, AccessKind::Read)))
            && log.accesses.iter().any(|(_, k)| *k == AccessKind::Write)
    });
    if war {
        return Pattern::War;
    }
    let first_read = h
        .elements
        .values()
        .flat_map(|l| l.accesses.iter())
        .filter(|(_, k)| *k == AccessKind::Read)
        .map(|(t, _)| *t)
        .min();
    let any_write = h
        .elements
        .values()
        .any(|l| l.accesses.iter().any(|(_, k)| *k == AccessKind::Write));
    let Some(first_read) = first_read else {
        return if any_write {
            Pattern::Outcome
        } else {
            Pattern::NotCritical
        };
    };
    if !any_write {
        return Pattern::NotCritical;
    }
    let Some(extent) = h.extent else {
        return Pattern::Rapo;
    };
    let mut spans: Vec<(u64, u64)> = h
        .elements
        .iter()
        .filter(|(_, l)| {
            l.accesses
                .iter()
                .any(|&(t, k)| k == AccessKind::Write && t < first_read)
        })
        .map(|(&a, l)| (a, a + u64::from(l.width)))
        .collect();
    if covers(extent, &mut spans) {
        Pattern::NotCritical
    } else {
        Pattern::Rapo
    }
}

/// Classifies every history, in parallel when available. The result does
/// not depend on scheduling.
pub fn classify_all(histories: &BTreeMap<VarKey, ElementHistory>) -> BTreeMap<VarKey, Pattern> {
    let list: Vec<&ElementHistory> = histories.values().collect();
    #[cfg(feature = "parallel")]
    let patterns: Vec<Pattern> = {
        use rayon::prelude::*;
        list.par_iter().map(|h| classify(h)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let patterns: Vec<Pattern> = list.iter().map(|h| classify(h)).collect();
    list.into_iter()
        .map(|h| h.variable.clone())
        .zip(patterns)
        .collect()
}

/// Loop-function-level instructions of the loop, i.e. not inside calls.
fn loop_level(seq: &[TraceInstruction], range: std::ops::Range<usize>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for i in range {
        let ins = &seq[i];
        if depth == 0 {
            out.push(i);
        }
        match ins.opcode {
            Opcode::Call if call_has_body(seq, i) => depth += 1,
            Opcode::Ret if depth > 0 => depth -= 1,
            _ => {}
        }
    }
    out
}

/// Induction variables of the loop.
///
/// A hint is looked up by name in the loop function. Otherwise the
/// candidates are variables both loaded and stored on the loop's header
/// line. Failing that, variables loaded on the header line whose value is
/// rewritten from itself inside the loop.
pub fn find_index(
    seq: &[TraceInstruction],
    partition: &TracePartition,
    spec: &LoopSpec,
    events: &[AccessEvent],
) -> (Vec<VarKey>, Option<Warning>) {
    let own = |op: &crate::trace::Operand| VarKey::new(op.addr(), op.name.clone());
    if let Some(hint) = &spec.induction_hint {
        let found = partition
            .part_b
            .clone()
            .chain(0..seq.len())
            .map(|i| &seq[i])
            .filter(|ins| ins.function == spec.function)
            .flat_map(|ins| ins.operands.iter())
            .find(|op| op.is_named() && &op.name == hint)
            .map(own);
        return match found {
            Some(k) => (vec![k], None),
            None => (Vec::new(), Some(Warning::IndexNotFound { hint: Some(hint.clone()) })),
        };
    }
    let mut stored: Vec<VarKey> = Vec::new();
    let mut loaded: HashSet<VarKey> = HashSet::new();
    for i in loop_level(seq, partition.part_b.clone()) {
        let ins = &seq[i];
        if ins.function != spec.function || ins.line != spec.start_line {
            continue;
        }
        match ins.opcode {
            Opcode::Store => {
                if let Some(d) = ins.input(2).filter(|d| d.is_named()) {
                    let k = own(d);
                    if !stored.contains(&k) {
                        stored.push(k);
                    }
                }
            }
            Opcode::Load => {
                if let Some(s) = ins.input(1).filter(|s| s.is_named()) {
                    loaded.insert(own(s));
                }
            }
            _ => {}
        }
    }
    let mut found: Vec<VarKey> = stored.into_iter().filter(|k| loaded.contains(k)).collect();
    if found.is_empty() {
        let mut latch: Vec<VarKey> = Vec::new();
        for e in events {
            if e.kind == AccessKind::Write
                && loaded.contains(&e.variable)
                && e.sources.contains(&e.variable)
                && !latch.contains(&e.variable)
            {
                latch.push(e.variable.clone());
            }
        }
        found = latch;
    }
    if found.is_empty() {
        (found, Some(Warning::IndexNotFound { hint: None }))
    } else {
        (found, None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportEntry {
    pub variable: VarKey,
    pub pattern: Pattern,
    /// Declaring function and line.
    pub declared_at: Option<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointReport {
    pub loop_spec: LoopSpec,
    pub mli: Vec<VarKey>,
    pub entries: Vec<ReportEntry>,
    pub warnings: Vec<String>,
}

impl CheckpointReport {
    pub fn critical(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| e.pattern.is_critical())
    }

    pub fn not_critical(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| !e.pattern.is_critical())
    }

    /// Pattern of the first entry with this name.
    pub fn pattern_of(&self, name: &str) -> Option<Pattern> {
        self.entries
            .iter()
            .find(|e| e.variable.name == name)
            .map(|e| e.pattern)
    }
}

/// Assembles the report: loop inputs in order, then induction variables
/// that are not loop inputs. An induction variable is always `Index`.
pub fn make_report(
    mli: &[VarKey],
    patterns: &BTreeMap<VarKey, Pattern>,
    index_vars: &[VarKey],
    spec: &LoopSpec,
    declared_at: impl Fn(&VarKey) -> Option<(String, u32)>,
    warnings: &[Warning],
) -> CheckpointReport {
    let index_addrs: HashSet<u64> = index_vars.iter().map(|k| k.address).collect();
    let mli_addrs: HashSet<u64> = mli.iter().map(|k| k.address).collect();
    let mut entries: Vec<ReportEntry> = mli
        .iter()
        .map(|k| ReportEntry {
            variable: k.clone(),
            pattern: if index_addrs.contains(&k.address) {
                Pattern::Index
            } else {
                patterns.get(k).copied().unwrap_or(Pattern::NotCritical)
            },
            declared_at: declared_at(k),
        })
        .collect();
    for k in index_vars.iter().filter(|k| !mli_addrs.contains(&k.address)) {
        entries.push(ReportEntry {
            variable: k.clone(),
            pattern: Pattern::Index,
            declared_at: declared_at(k),
        });
    }
    let mut all = warnings.to_vec();
    if mli.is_empty() {
        all.push(Warning::EmptyMli);
    }
    CheckpointReport {
        loop_spec: spec.clone(),
        mli: mli.to_vec(),
        entries,
        warnings: crate::error::summarize_warnings(&all),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(extent: Option<Extent>, accesses: &[(u64, u64, AccessKind)]) -> ElementHistory {
        let mut elements: BTreeMap<u64, ElementLog> = BTreeMap::new();
        for &(addr, t, k) in accesses {
            let log = elements.entry(addr).or_default();
            log.width = 8;
            log.accesses.push((t, k));
        }
        ElementHistory {
            variable: VarKey::new(0x100, "v"),
            extent,
            elements,
        }
    }

    use AccessKind::{Read as R, Write as W};
    const ARR: Option<Extent> = Some(Extent { base: 0x100, size: 24 });

    #[test]
    fn read_then_write_is_war() {
        assert_eq!(classify(&hist(ARR, &[(0x100, 1, R), (0x100, 2, W)])), Pattern::War);
    }

    #[test]
    fn write_only_is_outcome() {
        assert_eq!(classify(&hist(ARR, &[(0x100, 1, W), (0x108, 2, W)])), Pattern::Outcome);
    }

    #[test]
    fn scalar_written_then_read_is_safe() {
        let s = Some(Extent { base: 0x100, size: 8 });
        assert_eq!(classify(&hist(s, &[(0x100, 1, W), (0x100, 2, R), (0x100, 3, W)])), Pattern::NotCritical);
    }

    #[test]
    fn partial_overwrite_is_rapo() {
        let h = hist(ARR, &[(0x100, 1, W), (0x108, 2, W), (0x110, 3, R)]);
        assert_eq!(classify(&h), Pattern::Rapo);
        let full = hist(ARR, &[(0x100, 1, W), (0x108, 2, W), (0x110, 3, W), (0x110, 4, R)]);
        assert_eq!(classify(&full), Pattern::NotCritical);
    }

    #[test]
    fn unknown_extent_is_conservative() {
        let h = hist(None, &[(0x100, 1, W), (0x108, 2, W), (0x110, 3, W), (0x108, 4, R)]);
        assert_eq!(classify(&h), Pattern::Rapo);
    }

    #[test]
    fn read_only_is_not_critical() {
        assert_eq!(classify(&hist(ARR, &[(0x100, 1, R), (0x108, 2, R)])), Pattern::NotCritical);
    }

    #[test]
    fn histories_group_by_element_and_skip_others() {
        let v = VarKey::new(0x100, "v");
        let ev = |t, addr, kind| AccessEvent {
            t,
            line: 1,
            variable: v.clone(),
            element_addr: addr,
            width: 8,
            kind,
            sources: vec![],
        };
        let mut events = vec![ev(1, 0x100, W), ev(2, 0x110, W), ev(3, 0x100, R)];
        events.push(AccessEvent {
            variable: VarKey::new(0x900, "local"),
            ..ev(4, 0x900, W)
        });
        let h = build_histories(&events, &[v.clone()], &HashMap::new());
        assert_eq!(h.len(), 1);
        let hv = &h[&v];
        assert_eq!(hv.elements.len(), 2);
        assert_eq!(hv.elements[&0x100].accesses, vec![(1, W), (3, R)]);
        assert_eq!(hv.extent, None);
        let only_scalar = build_histories(&events[..1], &[v.clone()], &HashMap::new());
        assert_eq!(only_scalar[&v].extent, Some(Extent { base: 0x100, size: 8 }));
    }

    #[test]
    fn index_takes_precedence_and_empty_mli_warns() {
        let spec = LoopSpec::new("main", 1, 2);
        let it = VarKey::new(0x10, "it");
        let x = VarKey::new(0x20, "x");
        let patterns = BTreeMap::from([(it.clone(), Pattern::War), (x.clone(), Pattern::Rapo)]);
        let r = make_report(&[x.clone(), it.clone()], &patterns, &[it.clone()], &spec, |_| None, &[]);
        assert_eq!(r.pattern_of("it"), Some(Pattern::Index));
        assert_eq!(r.entries.len(), 2);
        let r = make_report(&[], &BTreeMap::new(), &[it], &spec, |_| None, &[]);
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.warnings, vec!["no main-loop input variables found".to_string()]);
    }
}
