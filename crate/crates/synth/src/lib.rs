//! Test support for the checkpoint analyzer.
//!
//! A [`MiniProgram`] is a small loop program. [`emit`] runs it and writes the
//! instruction trace an instrumented build would produce, and [`oracle`]
//! interprets the same program at source level to give the expected loop
//! inputs and access patterns. [`random`] generates programs and
//! [`fixtures`] holds the hand-written ones.

pub mod emit;
pub mod fixtures;
pub mod oracle;
pub mod program;
pub mod random;

pub use emit::{emit, Emitted};
pub use oracle::{expected, Expected, ExpectedPattern};
pub use program::{
    Arg, BinOp, Decl, Expr, Function, Loop, MiniProgram, Param, ParamKind, Place, Shape, Stmt,
    Storage,
};
pub use random::{generate, GenConfig};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("bad program JSON: {0}")]
    Json(#[from] serde_json::Error),
}
