//! Report rendering. JSON output has sorted keys and is byte-stable.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::classify::{CheckpointReport, ReportEntry};

fn entry_json(e: &ReportEntry) -> Value {
    json!({
        "name": e.variable.name,
        "address": format!("{:#x}", e.variable.address),
        "pattern": e.pattern.as_str(),
        "declared_at": e.declared_at.as_ref().map(|(f, l)| json!({"function": f, "line": l})),
    })
}

pub fn to_json_value(r: &CheckpointReport) -> Value {
    json!({
        "loop": {
            "function": r.loop_spec.function,
            "start_line": r.loop_spec.start_line,
            "end_line": r.loop_spec.end_line,
            "induction": r.loop_spec.induction_hint,
        },
        "mli": r.mli.iter().map(|k| json!({"name": k.name, "address": format!("{:#x}", k.address)})).collect::<Vec<_>>(),
        "critical": r.critical().map(entry_json).collect::<Vec<_>>(),
        "not_critical": r.not_critical().map(entry_json).collect::<Vec<_>>(),
        "warnings": r.warnings,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json(r: &CheckpointReport) -> String {
    let mut s = serde_json::to_string_pretty(&to_json_value(r)).expect("report values serialize");
    s.push('\n');
    s
}

fn location(e: &ReportEntry) -> String {
    match &e.declared_at {
        Some((f, l)) => format!("{f}:{l}"),
        None => "?".to_string(),
    }
}

pub fn to_text(r: &CheckpointReport) -> String {
    let mut out = String::new();
    let l = &r.loop_spec;
    let _ = writeln!(out, "loop: {} lines {}-{}", l.function, l.start_line, l.end_line);
    let names: Vec<&str> = r.mli.iter().map(|k| k.name.as_str()).collect();
    let _ = writeln!(out, "loop inputs: {}", names.join(", "));
    let _ = writeln!(out, "checkpoint:");
    for e in r.critical() {
        let _ = writeln!(out, "  {:<16} {:<8} declared {}", e.variable.name, e.pattern.as_str(), location(e));
    }
    let _ = writeln!(out, "not needed:");
    for e in r.not_critical() {
        let _ = writeln!(out, "  {:<16} declared {}", e.variable.name, location(e));
    }
    out
}
