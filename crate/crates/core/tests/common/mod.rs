//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ckpt_core::ddg::{DepGraph, Vertex};
use ckpt_core::VarKey;

use ckpt_core::{analyze, Analysis, AnalysisConfig, LoopSpec};
use ckpt_synth::{emit, expected, Emitted, Expected, MiniProgram};

pub fn spec_of(e: &Emitted) -> LoopSpec {
    LoopSpec::new(e.function.clone(), e.start_line, e.end_line)
}

pub struct Run {
    pub emitted: Emitted,
    pub analysis: Analysis,
    pub expected: Expected,
}

/// Emits, analyzes (without an induction hint) and interprets `prog`.
pub fn run(prog: &MiniProgram) -> Run {
    run_with(prog, |s| s)
}

pub fn run_with(prog: &MiniProgram, spec: impl FnOnce(LoopSpec) -> LoopSpec) -> Run {
    let emitted = emit(prog).expect("program emits");
    let cfg = AnalysisConfig::new(spec(spec_of(&emitted)));
    let analysis = analyze(emitted.trace.as_bytes(), &cfg).expect("analysis succeeds");
    let expected = expected(prog).expect("oracle runs");
    Run {
        emitted,
        analysis,
        expected,
    }
}

pub fn report_pairs(a: &Analysis) -> BTreeSet<(String, &'static str)> {
    a.report
        .entries
        .iter()
        .map(|e| (e.variable.name.clone(), e.pattern.as_str()))
        .collect()
}

pub fn mli_names(a: &Analysis) -> BTreeSet<String> {
    a.report.mli.iter().map(|k| k.name.clone()).collect()
}

/// Contracted edges by brute force: u -> v iff some path u -> ... -> v has
/// only non-input intermediates.
pub fn closure_oracle(n: usize, edges: &[(usize, usize)], mli: &BTreeSet<usize>) -> BTreeSet<(usize, usize)> {
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in (0..n).filter(|k| !mli.contains(k)) {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for &u in mli {
        for &v in mli {
            if reach[u][v] {
                out.insert((u, v));
            }
        }
    }
    out
}

/// Builds the graph; odd non-input vertices become registers, the rest
/// named variables.
pub fn build_graph(n: usize, edges: &[(usize, usize)], mli: &BTreeSet<usize>) -> (DepGraph, Vec<VarKey>) {
    let mut g = DepGraph::default();
    for i in 0..n {
        let v = if mli.contains(&i) || i % 2 == 0 {
            Vertex::Var(VarKey::new(0x1000 + 8 * i as u64, format!("v{i}")))
        } else {
            Vertex::Reg(i as u64)
        };
        let id = g.add_vertex(v, &format!("v{i}"));
        assert_eq!(id, i);
    }
    for (t, &(a, b)) in edges.iter().enumerate() {
        g.add_edge(a, b, t as u64);
    }
    let keys = mli.iter().map(|&i| VarKey::new(0x1000 + 8 * i as u64, format!("v{i}"))).collect();
    (g, keys)
}

pub fn contracted_pairs(c: &DepGraph) -> BTreeSet<(usize, usize)> {
    let index = |id| c.label(id)[1..].parse::<usize>().unwrap();
    c.edges().iter().map(|&(a, b)| (index(a), index(b))).collect()
}

