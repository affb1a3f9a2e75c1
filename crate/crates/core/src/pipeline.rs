//! End-to-end analysis.

use std::collections::{BTreeMap, HashSet};

use crate::classify::{build_histories, classify_all, find_index, make_report, CheckpointReport, ElementHistory, Pattern};
use crate::ddg::{build_complete, contract, AccessEvent, DepGraph, LocalRegistry};
use crate::error::{AnalysisError, Warning};
use crate::preprocess::{collect_with, preprocess, LoopSpec, Pointers, Preprocessed, VarKey};
use crate::trace::{parse_trace, TraceInstruction};

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub loop_spec: LoopSpec,
    /// Parser threads; the result never depends on it.
    pub workers: usize,
    /// Warn about outcome variables that are never used after the loop.
    pub check_outcome_after_loop: bool,
}

impl AnalysisConfig {
    pub fn new(loop_spec: LoopSpec) -> Self {
        AnalysisConfig {
            loop_spec,
            workers: 1,
            check_outcome_after_loop: false,
        }
    }

    pub fn workers(mut self, n: usize) -> Self {
        self.workers = n.max(1);
        self
    }
}

/// The report together with the intermediate results behind it.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: CheckpointReport,
    pub preprocessed: Preprocessed,
    pub complete: DepGraph,
    pub contracted: DepGraph,
    pub events: Vec<AccessEvent>,
    pub histories: BTreeMap<VarKey, ElementHistory>,
    pub patterns: BTreeMap<VarKey, Pattern>,
    pub registry: LocalRegistry,
}

pub fn analyze(trace: &[u8], cfg: &AnalysisConfig) -> Result<Analysis, AnalysisError> {
    let seq = parse_trace(trace, cfg.workers)?;
    analyze_instructions(&seq, cfg)
}

pub fn analyze_instructions(
    seq: &[TraceInstruction],
    cfg: &AnalysisConfig,
) -> Result<Analysis, AnalysisError> {
    let pre = preprocess(seq, &cfg.loop_spec)?;
    let ddg = build_complete(seq, &pre.partition, &pre.mli);
    let contracted = contract(&ddg.graph, &pre.mli);
    let histories = build_histories(&ddg.events, &pre.mli, &ddg.extents);
    let patterns = classify_all(&histories);
    let (index, index_warning) = find_index(seq, &pre.partition, &cfg.loop_spec, &ddg.events);

    let mut warnings: Vec<Warning> = pre.warnings.clone();
    warnings.extend(index_warning);
    warnings.extend(ddg.warnings.iter().cloned());
    if cfg.check_outcome_after_loop {
        let mut pointers = Pointers::default();
        collect_with(seq, pre.partition.part_a.clone(), false, &mut pointers);
        let after = collect_with(seq, pre.partition.part_c.clone(), false, &mut pointers);
        let used: HashSet<u64> = after.iter().map(|(k, _)| k.address).collect();
        for (k, p) in &patterns {
            if *p == Pattern::Outcome && !used.contains(&k.address) {
                warnings.push(Warning::OutcomeUnused { name: k.name.clone() });
            }
        }
    }

    let registry = ddg.registry;
    let declared_at = |k: &VarKey| {
        registry
            .declaration(k)
            .map(|l| (l.function.clone(), l.line))
            .or_else(|| pre.before.get(k).map(|e| (e.function.clone(), e.line)))
            .or_else(|| pre.inside.get(k).map(|e| (e.function.clone(), e.line)))
    };
    let report = make_report(&pre.mli, &patterns, &index, &cfg.loop_spec, declared_at, &warnings);
    Ok(Analysis {
        report,
        preprocessed: pre,
        complete: ddg.graph,
        contracted,
        events: ddg.events,
        histories,
        patterns,
        registry,
    })
}
