//! Parse and analyze one synthetic trace with a single worker and with one
//! worker per core. Without the `parallel` feature both run sequentially.

use ckpt_core::{analyze, parse_trace, AnalysisConfig, LoopSpec};
use ckpt_synth::{emit, fixtures};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn trace() -> (String, LoopSpec) {
    let mut p = fixtures::cg();
    p.main_loop.iterations = 200;
    let e = emit(&p).expect("fixture emits");
    let spec = LoopSpec::new(e.function.clone(), e.start_line, e.end_line);
    (e.trace, spec)
}

fn bench(c: &mut Criterion) {
    let (text, spec) = trace();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()).max(2);
    let mut group = c.benchmark_group("pipeline");
    group.throughput(Throughput::Bytes(text.len() as u64));
    group.sample_size(10);
    for workers in [1, cores] {
        group.bench_with_input(BenchmarkId::new("parse", workers), &workers, |b, &w| {
            b.iter(|| parse_trace(text.as_bytes(), w).expect("parses"))
        });
        let cfg = AnalysisConfig::new(spec.clone()).workers(workers);
        group.bench_with_input(BenchmarkId::new("analyze", workers), &cfg, |b, cfg| {
            b.iter(|| analyze(text.as_bytes(), cfg).expect("analyzes"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
