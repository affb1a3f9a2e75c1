//! Finds the variables a loop-based program must checkpoint, using only a
//! dynamic instruction trace.
//!
//! The pipeline reads the trace ([`trace`]), splits it around the main loop
//! and finds the loop's input variables ([`preprocess`]), rebuilds the data
//! dependencies inside the loop ([`ddg`]), and classifies how each input
//! variable is read and written ([`classify`]). [`analyze`] runs all of it.

pub mod classify;
pub mod ddg;
pub mod error;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod trace;

pub use classify::{CheckpointReport, Pattern, ReportEntry};
pub use error::{AnalysisError, TraceError, Warning};
pub use pipeline::{analyze, analyze_instructions, Analysis, AnalysisConfig};
pub use preprocess::{LoopSpec, VarKey};
pub use trace::{parse_trace, Opcode, TraceInstruction};
