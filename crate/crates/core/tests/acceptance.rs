//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Thresholds are the constants below.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ckpt_core::ddg::{contract, line_summary, LineDeps};
use ckpt_core::report::to_json;
use ckpt_core::{analyze, AnalysisConfig};
use ckpt_synth::oracle::Access;
use ckpt_synth::{emit, fixtures, generate, ExpectedPattern, GenConfig, MiniProgram};
use common::{build_graph, closure_oracle, contracted_pairs, mli_names, report_pairs, run, spec_of};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL_LOOP_BUDGET: Duration = Duration::from_secs(1);
const ORACLE_PROGRAMS: u64 = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const DAG_COUNT: usize = 200;
const DAG_MAX_VERTICES: usize = 200;
const DETERMINISM_TRACES: usize = 20;
const DETERMINISM_MAX_BLOCKS: u64 = 1_000_000;
/// The largest trace must come within this fraction of the maximum.
const DETERMINISM_SIZE_SLACK: f64 = 0.01;
const DETERMINISM_MIN_BLOCKS: u64 = 1_000;
const DETERMINISM_WORKERS: [usize; 3] = [1, 2, 8];
const LINEARITY_BASE_BLOCKS: u64 = 200_000;
const LINEARITY_MAX_RATIO: f64 = 2.5;
const LINEARITY_REPEATS: usize = 3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn pairs(list: &[(&str, &'static str)]) -> BTreeSet<(String, &'static str)> {
    list.iter().map(|(n, p)| (n.to_string(), *p)).collect()
}

fn small_loop_golden() -> Outcome {
    let started = Instant::now();
    let r = run(&fixtures::small_loop());
    let took = started.elapsed();
    let mli_ok = mli_names(&r.analysis) == ["a", "b", "sum", "s", "r"].map(String::from).into();
    let want = pairs(&[
        ("r", "WAR"),
        ("a", "RAPO"),
        ("sum", "Outcome"),
        ("it", "Index"),
        ("b", "NotCritical"),
        ("s", "NotCritical"),
    ]);
    let got = report_pairs(&r.analysis);
    outcome(
        mli_ok && got == want && took < SMALL_LOOP_BUDGET,
        format!("mli ok={mli_ok}, report {got:?}, {took:.2?}"),
    )
}

fn small_loop_contraction() -> Outcome {
    let r = run(&fixtures::small_loop());
    let a = &r.analysis;
    let parents = |name: &str| -> BTreeSet<String> {
        a.report
            .mli
            .iter()
            .find(|k| k.name == name)
            .map(|k| a.contracted.var_parents(k).into_iter().map(|p| p.name).collect())
            .unwrap_or_default()
    };
    let sum = parents("sum");
    let r_self = parents("r").contains("r");
    outcome(
        sum == ["a", "b"].map(String::from).into() && r_self,
        format!("sum <- {sum:?}, r self-edge={r_self}"),
    )
}

fn cg_golden() -> Outcome {
    let r = run(&fixtures::cg());
    let a = &r.analysis;
    let want = pairs(&[
        ("x", "WAR"),
        ("iter", "Index"),
        ("z", "NotCritical"),
        ("p", "NotCritical"),
        ("q", "NotCritical"),
        ("r", "NotCritical"),
        ("A", "NotCritical"),
    ]);
    let got = report_pairs(a);
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
    let d = |reads: &[&str], writes: &[&str]| LineDeps {
        reads: s(reads),
        writes: s(writes),
    };
    let lines: BTreeMap<u32, LineDeps> = [
        (2, d(&[], &["z"])),
        (3, d(&["x"], &["r"])),
        (5, d(&["r"], &["p"])),
        (7, d(&["A", "p"], &["q"])),
        (9, d(&["q", "r", "p", "z"], &["z"])),
        (11, d(&["q", "r", "p"], &["r"])),
        (14, d(&["r", "p"], &["p"])),
        (19, d(&["z"], &["x"])),
    ]
    .into();
    let summary = line_summary(&a.events, &a.complete, &a.report.mli);
    let lines_ok = summary == lines;
    outcome(got == want && lines_ok, format!("report {got:?}, line summary ok={lines_ok}"))
}

fn oracle_equivalence() -> Outcome {
    let cfg = GenConfig::default();
    let started = Instant::now();
    let mut mismatches = Vec::new();
    for seed in 0..ORACLE_PROGRAMS {
        let r = run(&generate(seed, &cfg));
        if report_pairs(&r.analysis) != r.expected.report_pairs() || mli_names(&r.analysis) != r.expected.mli {
            mismatches.push(seed);
        }
    }
    let took = started.elapsed();
    outcome(
        mismatches.is_empty() && took < ORACLE_BUDGET,
        format!("{ORACLE_PROGRAMS} programs, mismatching seeds {mismatches:?}, {took:.2?}"),
    )
}

fn contraction_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xda6);
    let mut failures = 0;
    for _ in 0..DAG_COUNT {
        let n = rng.gen_range(2..=DAG_MAX_VERTICES);
        let density = rng.gen_range(0.5..3.0);
        let edges: Vec<(usize, usize)> = (0..(n as f64 * density) as usize)
            .filter_map(|_| {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                (a != b).then(|| (a.min(b), a.max(b)))
            })
            .collect();
        let share = rng.gen_range(0.05..0.6);
        let mli: BTreeSet<usize> = (0..n).filter(|_| rng.gen_bool(share)).collect();
        let (g, keys) = build_graph(n, &edges, &mli);
        if contracted_pairs(&contract(&g, &keys)) != closure_oracle(n, &edges, &mli) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{DAG_COUNT} DAGs, {failures} mismatches"))
}

/// `p` with the largest iteration count whose trace has at most `blocks`
/// blocks (at least one iteration).
fn scaled(mut p: MiniProgram, blocks: u64) -> MiniProgram {
    p.main_loop.iterations = 1;
    let one = emit(&p).expect("emits").blocks;
    p.main_loop.iterations = 2;
    let per_iter = (emit(&p).expect("emits").blocks - one).max(1);
    p.main_loop.iterations = (blocks.saturating_sub(one) / per_iter + 1) as u32;
    p
}

fn parallel_determinism() -> Outcome {
    let cfg = GenConfig::default();
    let ratio = (DETERMINISM_MAX_BLOCKS as f64 / DETERMINISM_MIN_BLOCKS as f64).powf(1.0 / (DETERMINISM_TRACES - 1) as f64);
    let mut differing = Vec::new();
    let mut largest = 0;
    for k in 0..DETERMINISM_TRACES {
        let target = (DETERMINISM_MIN_BLOCKS as f64 * ratio.powi(k as i32)).round() as u64;
        let e = emit(&scaled(generate(10_000 + k as u64, &cfg), target)).expect("emits");
        largest = largest.max(e.blocks);
        let reports: Vec<String> = DETERMINISM_WORKERS
            .iter()
            .map(|&w| {
                let cfg = AnalysisConfig::new(spec_of(&e)).workers(w);
                to_json(&analyze(e.trace.as_bytes(), &cfg).expect("analyzes").report)
            })
            .collect();
        if reports.windows(2).any(|w| w[0] != w[1]) {
            differing.push(k);
        }
    }
    outcome(
        differing.is_empty()
            && largest <= DETERMINISM_MAX_BLOCKS
            && largest as f64 >= DETERMINISM_MAX_BLOCKS as f64 * (1.0 - DETERMINISM_SIZE_SLACK),
        format!("{DETERMINISM_TRACES} traces up to {largest} blocks, workers {DETERMINISM_WORKERS:?}, differing {differing:?}"),
    )
}

fn linearity() -> Outcome {
    let base = fixtures::cg();
    let times: Vec<(u64, Duration)> = [1, 2, 4]
        .iter()
        .map(|&m| {
            let e = emit(&scaled(base.clone(), LINEARITY_BASE_BLOCKS * m)).expect("emits");
            let cfg = AnalysisConfig::new(spec_of(&e)).workers(1);
            let best = (0..LINEARITY_REPEATS)
                .map(|_| {
                    let started = Instant::now();
                    std::hint::black_box(analyze(e.trace.as_bytes(), &cfg).expect("analyzes"));
                    started.elapsed()
                })
                .min()
                .expect("repeats > 0");
            (e.blocks, best)
        })
        .collect();
    let ratios: Vec<f64> = times.windows(2).map(|w| w[1].1.as_secs_f64() / w[0].1.as_secs_f64()).collect();
    outcome(
        ratios.iter().all(|&r| r <= LINEARITY_MAX_RATIO),
        format!("blocks/time {times:?}, ratios {ratios:.2?} (max {LINEARITY_MAX_RATIO})"),
    )
}

fn conservatism() -> Outcome {
    let cfg = GenConfig::default();
    let mut checked = 0;
    let mut missed = Vec::new();
    for seed in 0..ORACLE_PROGRAMS {
        let p = generate(seed, &cfg);
        let r = run(&p);
        for (name, h) in &r.expected.histories {
            if h.len.is_some() || !r.expected.mli.contains(name) {
                continue;
            }
            if r.expected.patterns.get(name) == Some(&ExpectedPattern::War) {
                continue;
            }
            let write_then_read = h.elements.values().any(|log| {
                log.iter()
                    .skip_while(|(_, a)| *a != Access::Write)
                    .any(|(_, a)| *a == Access::Read)
            });
            if !write_then_read {
                continue;
            }
            checked += 1;
            if r.analysis.report.pattern_of(name).map(|p| p.as_str()) != Some("RAPO") {
                missed.push(format!("{seed}:{name}"));
            }
        }
    }
    outcome(
        checked > 0 && missed.is_empty(),
        format!("{checked} unknown-extent arrays written then read, not RAPO: {missed:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("small example report", small_loop_golden),
        ("small example contraction", small_loop_contraction),
        ("conjugate gradient report and line summary", cg_golden),
        ("oracle equivalence", oracle_equivalence),
        ("contraction soundness", contraction_soundness),
        ("parallel determinism", parallel_determinism),
        ("linear scaling", linearity),
        ("unknown extents stay conservative", conservatism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
