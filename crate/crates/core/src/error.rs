//! Error and warning types shared by the pipeline stages.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("malformed trace block at byte {offset}: {reason}")]
    MalformedBlock { reason: String, offset: usize },
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("no instruction of `{function}` lies on lines {start}..={end}; check --loop-function and the line range")]
    LoopNotFound {
        function: String,
        start: u32,
        end: u32,
    },
    #[error("loop start line {start} is after end line {end}")]
    InvalidLoop { start: u32, end: u32 },
}

/// Non-fatal findings. None of them changes the analysis outcome status.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Warning {
    /// A temporary was consumed before any instruction defined it.
    UnboundRegister { name: String, dyn_id: u64 },
    /// Parameter and argument counts of a call with a body differ.
    ArityMismatch {
        callee: String,
        args: usize,
        params: usize,
        dyn_id: u64,
    },
    /// No induction variable could be resolved for the loop.
    IndexNotFound { hint: Option<String> },
    /// No variable is both defined before and used inside the loop.
    EmptyMli,
    /// Variables referenced before the loop and, inside it, only from
    /// within called functions. They are not treated as loop inputs.
    CallOnlyVariables { names: Vec<String> },
    /// The same name was seen at more than one address before the loop.
    AddressMismatch { name: String },
    /// An outcome variable is never used after the loop.
    OutcomeUnused { name: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnboundRegister { name, dyn_id } => {
                write!(f, "register `{name}` used without a binding at instruction {dyn_id}")
            }
            Warning::ArityMismatch {
                callee,
                args,
                params,
                dyn_id,
            } => write!(
                f,
                "call to `{callee}` at instruction {dyn_id} passes {args} arguments for {params} parameters; its body is analyzed without bindings"
            ),
            Warning::IndexNotFound { hint: Some(h) } => {
                write!(f, "induction variable `{h}` does not occur in the loop function")
            }
            Warning::IndexNotFound { hint: None } => {
                write!(f, "no induction variable found; pass --induction NAME")
            }
            Warning::EmptyMli => f.write_str("no main-loop input variables found"),
            Warning::CallOnlyVariables { names } => write!(
                f,
                "used in the loop only inside called functions, not analyzed as loop inputs: {}",
                names.join(", ")
            ),
            Warning::AddressMismatch { name } => write!(
                f,
                "`{name}` appears at several addresses before the loop; matched by first address"
            ),
            Warning::OutcomeUnused { name } => {
                write!(f, "outcome variable `{name}` is not used after the loop")
            }
        }
    }
}

/// Collapses repeated warnings of the same kind into counted lines, keeping
/// first-occurrence order.
pub fn summarize_warnings(warnings: &[Warning]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let unbound: Vec<&Warning> = warnings
        .iter()
        .filter(|w| matches!(w, Warning::UnboundRegister { .. }))
        .collect();
    let mut unbound_done = false;
    for w in warnings {
        match w {
            Warning::UnboundRegister { .. } if unbound.len() > 1 => {
                if !unbound_done {
                    out.push(format!("{} (and {} more unbound uses)", unbound[0], unbound.len() - 1));
                    unbound_done = true;
                }
            }
            other => {
                let line = other.to_string();
                if !out.contains(&line) {
                    out.push(line);
                }
            }
        }
    }
    out
}
