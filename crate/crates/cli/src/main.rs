//! `ckpt-scan`: reports which variables of a loop must be checkpointed,
//! given an instruction trace of one run.

use std::path::PathBuf;
use std::process::ExitCode;

use ckpt_core::{analyze, report, AnalysisConfig, AnalysisError, LoopSpec};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "ckpt-scan", version, about = "Find the variables a main loop must checkpoint, from an instruction trace")]
struct Args {
    /// Instruction trace to analyze.
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// Function containing the main loop.
    #[arg(long, value_name = "NAME")]
    loop_function: String,
    /// First source line of the loop.
    #[arg(long, value_name = "N")]
    loop_start: u32,
    /// Last source line of the loop.
    #[arg(long, value_name = "N")]
    loop_end: u32,
    /// Name of the loop's induction variable, if detection should be skipped.
    #[arg(long, value_name = "NAME")]
    induction: Option<String>,
    /// Parser threads (defaults to the number of cores).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the complete and contracted dependency graphs as Graphviz.
    #[arg(long, value_name = "PATH")]
    dump_ddg: Option<PathBuf>,
    /// Warn about outcome variables never used after the loop.
    #[arg(long)]
    check_outcome_after_loop: bool,
}

const EXIT_LOOP: u8 = 2;
const EXIT_TRACE: u8 = 3;
const EXIT_OUTPUT: u8 = 1;

fn main() -> ExitCode {
    let args = Args::parse();
    let bytes = match std::fs::read(&args.trace) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read trace {}: {e}", args.trace.display());
            return ExitCode::from(EXIT_TRACE);
        }
    };
    let mut spec = LoopSpec::new(args.loop_function.clone(), args.loop_start, args.loop_end);
    if let Some(name) = &args.induction {
        spec = spec.with_induction(name.clone());
    }
    let workers = args.workers.map_or_else(
        || std::thread::available_parallelism().map_or(1, |n| n.get()),
        |n| n as usize,
    );
    let mut cfg = AnalysisConfig::new(spec).workers(workers);
    cfg.check_outcome_after_loop = args.check_outcome_after_loop;

    let analysis = match analyze(&bytes, &cfg) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                AnalysisError::Trace(_) => EXIT_TRACE,
                AnalysisError::LoopNotFound { .. } | AnalysisError::InvalidLoop { .. } => EXIT_LOOP,
            };
            return ExitCode::from(code);
        }
    };
    for w in &analysis.report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.dump_ddg {
        let dot = analysis.complete.to_dot("complete") + &analysis.contracted.to_dot("contracted");
        if let Err(e) = std::fs::write(path, dot) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_OUTPUT);
        }
    }
    let out = match args.format {
        Format::Json => report::to_json(&analysis.report),
        Format::Text => report::to_text(&analysis.report),
    };
    print!("{out}");
    ExitCode::SUCCESS
}
