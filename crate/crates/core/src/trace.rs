//! Trace grammar and reader.
//!
//! A trace is UTF-8 text made of instruction blocks. Each block opens with a
//! header line and carries one line per operand; a blank line closes it:
//!
//! ```text
//! I|<dyn_id>|<function>|<line>:<col>|<bb_label>|<opcode>
//! O|<slot>|<size_bits>|<0|1>|<name>|<value>
//! ```
//!
//! Large traces are split into block-aligned chunks that are parsed
//! independently (in parallel with the `parallel` feature) and merged in
//! order, so the result never depends on the worker count.

use std::fmt;
use std::str::FromStr;

use crate::error::TraceError;

/// Role of an operand within its instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    /// Numbered input, starting at 1.
    Input(u32),
    /// The result register (`r`).
    Result,
    /// A callee parameter (`f`), only present on calls.
    Param,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Input(k) => write!(f, "{k}"),
            Slot::Result => f.write_str("r"),
            Slot::Param => f.write_str("f"),
        }
    }
}

/// Literal operand value. Floats are kept as raw bits so equality is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scalar {
    Int(i64),
    Hex(u64),
    Float(u64),
}

impl Scalar {
    pub fn float(v: f64) -> Self {
        Scalar::Float(v.to_bits())
    }

    /// The value read as a byte address.
    pub fn as_addr(self) -> u64 {
        match self {
            Scalar::Int(v) => v as u64,
            Scalar::Hex(v) => v,
            Scalar::Float(_) => 0,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Hex(v) => write!(f, "{v:#x}"),
            Scalar::Float(bits) => write!(f, "{:?}", f64::from_bits(bits)),
        }
    }
}

impl FromStr for Scalar {
    type Err = &'static str;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            return u64::from_str_radix(hex, 16)
                .map(Scalar::Hex)
                .map_err(|_| "bad hex value");
        }
        if let Ok(v) = s.parse::<i64>() {
            return Ok(Scalar::Int(v));
        }
        if let Ok(v) = s.parse::<u64>() {
            return Ok(Scalar::Hex(v));
        }
        s.parse::<f64>()
            .map(Scalar::float)
            .map_err(|_| "bad operand value")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Operand {
    pub slot: Slot,
    pub size_bits: u32,
    pub is_register: bool,
    pub name: String,
    pub value: Scalar,
}

impl Operand {
    /// True for operands that name a source variable rather than a
    /// temporary. Purely numeric names are temporaries.
    pub fn is_named(&self) -> bool {
        self.is_register && is_variable_name(&self.name)
    }

    /// True for temporaries (numeric register names).
    pub fn is_temp(&self) -> bool {
        self.is_register && !self.name.is_empty() && !is_variable_name(&self.name)
    }

    pub fn addr(&self) -> u64 {
        self.value.as_addr()
    }
}

/// Non-blank and not purely digits.
pub fn is_variable_name(name: &str) -> bool {
    !name.trim().is_empty() && !name.bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Opcode {
    Ret,
    Br,
    Add,
    FAdd,
    Sub,
    FSub,
    Mul,
    FMul,
    UDiv,
    SDiv,
    FDiv,
    Alloca,
    Load,
    Store,
    GetElementPtr,
    BitCast,
    Call,
    Other(String),
}

const MNEMONICS: &[(Opcode, &str, u32)] = &[
    (Opcode::Ret, "Ret", 1),
    (Opcode::Br, "Br", 2),
    (Opcode::Add, "Add", 8),
    (Opcode::FAdd, "FAdd", 9),
    (Opcode::Sub, "Sub", 10),
    (Opcode::FSub, "FSub", 11),
    (Opcode::Mul, "Mul", 12),
    (Opcode::FMul, "FMul", 13),
    (Opcode::UDiv, "UDiv", 14),
    (Opcode::SDiv, "SDiv", 15),
    (Opcode::FDiv, "FDiv", 16),
    (Opcode::Alloca, "Alloca", 26),
    (Opcode::Load, "Load", 27),
    (Opcode::Store, "Store", 28),
    (Opcode::GetElementPtr, "GetElementPtr", 29),
    (Opcode::BitCast, "BitCast", 44),
    (Opcode::Call, "Call", 49),
];

impl Opcode {
    pub fn is_arith(&self) -> bool {
        matches!(
            self,
            Opcode::Add
                | Opcode::FAdd
                | Opcode::Sub
                | Opcode::FSub
                | Opcode::Mul
                | Opcode::FMul
                | Opcode::UDiv
                | Opcode::SDiv
                | Opcode::FDiv
        )
    }

    /// Parses a mnemonic (any case) or a legacy numeric code.
    pub fn from_token(token: &str) -> Opcode {
        if let Ok(code) = token.parse::<u32>() {
            if let Some((op, _, _)) = MNEMONICS.iter().find(|(_, _, c)| *c == code) {
                return op.clone();
            }
            return Opcode::Other(token.to_string());
        }
        MNEMONICS
            .iter()
            .find(|(_, m, _)| m.eq_ignore_ascii_case(token))
            .map(|(op, _, _)| op.clone())
            .unwrap_or_else(|| Opcode::Other(token.to_string()))
    }

    pub fn mnemonic(&self) -> &str {
        match self {
            Opcode::Other(code) => code,
            op => MNEMONICS
                .iter()
                .find(|(o, _, _)| o == op)
                .map(|(_, m, _)| *m)
                .expect("every named opcode has a mnemonic"),
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceInstruction {
    pub dyn_id: u64,
    pub function: String,
    pub line: u32,
    pub column: u32,
    pub bb_label: String,
    pub opcode: Opcode,
    pub operands: Vec<Operand>,
}

impl TraceInstruction {
    pub fn input(&self, k: u32) -> Option<&Operand> {
        self.operands.iter().find(|o| o.slot == Slot::Input(k))
    }

    pub fn result(&self) -> Option<&Operand> {
        self.operands.iter().find(|o| o.slot == Slot::Result)
    }

    /// Numbered inputs in slot order.
    pub fn inputs(&self) -> Vec<&Operand> {
        let mut v: Vec<&Operand> = self
            .operands
            .iter()
            .filter(|o| matches!(o.slot, Slot::Input(_)))
            .collect();
        v.sort_by_key(|o| o.slot);
        v
    }

    pub fn params(&self) -> impl Iterator<Item = &Operand> {
        self.operands.iter().filter(|o| o.slot == Slot::Param)
    }

    /// For a call: argument operands and the callee operand. The callee is
    /// the last numbered input and carries the function name.
    pub fn call_parts(&self) -> (Vec<&Operand>, Option<&Operand>) {
        let mut inputs = self.inputs();
        let callee = inputs.pop();
        (inputs, callee)
    }
}

impl fmt::Display for TraceInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "I|{}|{}|{}:{}|{}|{}",
            self.dyn_id, self.function, self.line, self.column, self.bb_label, self.opcode
        )?;
        for o in &self.operands {
            writeln!(
                f,
                "O|{}|{}|{}|{}|{}",
                o.slot,
                o.size_bits,
                u8::from(o.is_register),
                o.name,
                o.value
            )?;
        }
        Ok(())
    }
}

/// True when the call at `idx` is followed by its callee's body.
pub fn call_has_body(seq: &[TraceInstruction], idx: usize) -> bool {
    seq[idx].opcode == Opcode::Call
        && seq
            .get(idx + 1)
            .is_some_and(|next| next.function != seq[idx].function)
}

/// Serializes instructions as a trace, one blank line after each block.
pub fn write_trace(instrs: &[TraceInstruction]) -> String {
    let mut out = String::new();
    for ins in instrs {
        out.push_str(&ins.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkBoundary {
    pub byte_offset: usize,
    pub first_dyn_id: u64,
}

fn malformed(reason: impl Into<String>, offset: usize) -> TraceError {
    TraceError::MalformedBlock {
        reason: reason.into(),
        offset,
    }
}

fn parse_header(line: &str, offset: usize) -> Result<TraceInstruction, TraceError> {
    let fields: Vec<&str> = line.split('|').collect();
    if fields.len() != 6 || fields[0] != "I" {
        return Err(malformed(
            format!("header needs 6 fields, found {}", fields.len()),
            offset,
        ));
    }
    let dyn_id = fields[1]
        .parse()
        .map_err(|_| malformed("bad dynamic id", offset))?;
    let (line_no, col) = fields[3]
        .split_once(':')
        .ok_or_else(|| malformed("location is not line:col", offset))?;
    let line_no = line_no
        .parse()
        .map_err(|_| malformed("bad line number", offset))?;
    let column = col.parse().map_err(|_| malformed("bad column", offset))?;
    Ok(TraceInstruction {
        dyn_id,
        function: fields[2].to_string(),
        line: line_no,
        column,
        bb_label: fields[4].to_string(),
        opcode: Opcode::from_token(fields[5]),
        operands: Vec::new(),
    })
}

fn parse_operand(line: &str, offset: usize) -> Result<Operand, TraceError> {
    let fields: Vec<&str> = line.split('|').collect();
    if fields.len() != 6 {
        return Err(malformed(
            format!("operand needs 6 fields, found {}", fields.len()),
            offset,
        ));
    }
    let slot = match fields[1] {
        "r" => Slot::Result,
        "f" => Slot::Param,
        k => match k.parse::<u32>() {
            Ok(k) if k >= 1 => Slot::Input(k),
            _ => return Err(malformed(format!("bad operand slot {k:?}"), offset)),
        },
    };
    let size_bits = fields[2]
        .parse()
        .map_err(|_| malformed("bad operand size", offset))?;
    let is_register = match fields[3] {
        "1" => true,
        "0" => false,
        _ => return Err(malformed("register flag must be 0 or 1", offset)),
    };
    let name = fields[4];
    if !is_register && !name.is_empty() {
        return Err(malformed("constant operand carries a name", offset));
    }
    let value = fields[5]
        .parse()
        .map_err(|e: &str| malformed(e, offset))?;
    Ok(Operand {
        slot,
        size_bits,
        is_register,
        name: name.to_string(),
        value,
    })
}

fn push_operand(
    ins: &mut TraceInstruction,
    op: Operand,
    offset: usize,
) -> Result<(), TraceError> {
    if op.slot == Slot::Result && ins.result().is_some() {
        return Err(malformed("more than one result operand", offset));
    }
    ins.operands.push(op);
    Ok(())
}

/// Parses text holding whole blocks. `base` is the absolute offset of `text`
/// in the trace, used for error positions.
fn parse_blocks(text: &str, base: usize) -> Result<Vec<TraceInstruction>, TraceError> {
    let mut out: Vec<TraceInstruction> = Vec::new();
    let mut open: Option<(TraceInstruction, usize)> = None;
    let mut offset = base;
    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            if let Some((ins, at)) = open.take() {
                commit(&mut out, ins, at)?;
            }
        } else if line.starts_with("I|") {
            if let Some((ins, at)) = open.take() {
                commit(&mut out, ins, at)?;
            }
            open = Some((parse_header(line, line_offset)?, line_offset));
        } else if line.starts_with("O|") {
            let Some((ins, _)) = open.as_mut() else {
                return Err(malformed("operand line outside a block", line_offset));
            };
            let op = parse_operand(line, line_offset)?;
            push_operand(ins, op, line_offset)?;
        } else {
            return Err(malformed("unrecognized line", line_offset));
        }
    }
    if let Some((ins, at)) = open.take() {
        commit(&mut out, ins, at)?;
    }
    Ok(out)
}

fn commit(
    out: &mut Vec<TraceInstruction>,
    ins: TraceInstruction,
    offset: usize,
) -> Result<(), TraceError> {
    if let Some(prev) = out.last() {
        if ins.dyn_id <= prev.dyn_id {
            return Err(malformed(
                format!("dynamic id {} does not follow {}", ins.dyn_id, prev.dyn_id),
                offset,
            ));
        }
    }
    out.push(ins);
    Ok(())
}

/// Parses a single block.
pub fn parse_block(text: &str) -> Result<TraceInstruction, TraceError> {
    let mut blocks = parse_blocks(text, 0)?;
    match blocks.len() {
        1 => Ok(blocks.pop().expect("length checked")),
        0 => Err(malformed("no block header", 0)),
        n => Err(malformed(format!("expected one block, found {n}"), 0)),
    }
}

/// Offset of the first block start at or after `from`.
fn next_block_start(trace: &[u8], from: usize) -> Option<usize> {
    if from == 0 {
        return Some(0);
    }
    let mut i = from - 1;
    while i + 2 < trace.len() {
        match trace[i..].iter().position(|&b| b == b'\n') {
            None => return None,
            Some(p) => {
                let nl = i + p;
                if trace[nl + 1..].starts_with(b"I|") {
                    return Some(nl + 1);
                }
                i = nl + 1;
            }
        }
    }
    None
}

fn dyn_id_at(trace: &[u8], offset: usize) -> Result<u64, TraceError> {
    let rest = &trace[offset..];
    let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
    let line = std::str::from_utf8(&rest[..end]).map_err(|_| malformed("invalid UTF-8", offset))?;
    Ok(parse_header(line.trim_end_matches('\r'), offset)?.dyn_id)
}

/// Splits `trace` into at most `n_chunks` block-aligned pieces by moving
/// each naive split point forward to the next block header.
pub fn partition_stream(trace: &[u8], n_chunks: usize) -> Result<Vec<ChunkBoundary>, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let n = n_chunks.max(1);
    let mut offsets: Vec<usize> = Vec::with_capacity(n);
    for k in 0..n {
        let naive = k * trace.len() / n;
        if let Some(at) = next_block_start(trace, naive) {
            if offsets.last() != Some(&at) {
                offsets.push(at);
            }
        }
    }
    offsets
        .into_iter()
        .map(|byte_offset| {
            Ok(ChunkBoundary {
                byte_offset,
                first_dyn_id: dyn_id_at(trace, byte_offset)?,
            })
        })
        .collect()
}

fn parse_chunk(trace: &[u8], start: usize, end: usize) -> Result<Vec<TraceInstruction>, TraceError> {
    let text = std::str::from_utf8(&trace[start..end]).map_err(|e| {
        malformed("invalid UTF-8", start + e.valid_up_to())
    })?;
    parse_blocks(text, start)
}

#[cfg(feature = "parallel")]
fn parse_chunks(
    trace: &[u8],
    spans: &[(usize, usize)],
    workers: usize,
) -> Vec<Result<Vec<TraceInstruction>, TraceError>> {
    use rayon::prelude::*;
    let run = || {
        spans
            .par_iter()
            .map(|&(s, e)| parse_chunk(trace, s, e))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => spans.iter().map(|&(s, e)| parse_chunk(trace, s, e)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parse_chunks(
    trace: &[u8],
    spans: &[(usize, usize)],
    _workers: usize,
) -> Vec<Result<Vec<TraceInstruction>, TraceError>> {
    spans.iter().map(|&(s, e)| parse_chunk(trace, s, e)).collect()
}

/// Parses a whole trace using `workers` chunks. The output is identical for
/// every worker count; errors report the earliest problem in file order.
pub fn parse_trace(trace: &[u8], workers: usize) -> Result<Vec<TraceInstruction>, TraceError> {
    if trace.is_empty() {
        return Ok(Vec::new());
    }
    let workers = workers.max(1);
    if workers == 1 {
        return parse_chunk(trace, 0, trace.len());
    }
    let bounds = match partition_stream(trace, workers) {
        Ok(b) => b,
        // A bad header at a split point is reported by the sequential scan
        // with its exact position.
        Err(_) => return parse_chunk(trace, 0, trace.len()),
    };
    let spans: Vec<(usize, usize)> = bounds
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let end = bounds.get(i + 1).map_or(trace.len(), |n| n.byte_offset);
            (b.byte_offset, end)
        })
        .collect();
    let parts = parse_chunks(trace, &spans, workers);
    let total = parts.iter().map(|p| p.as_ref().map_or(0, Vec::len)).sum();
    let mut out: Vec<TraceInstruction> = Vec::with_capacity(total);
    for part in parts {
        let Ok(part) = part else {
            // Re-scan sequentially so the reported error is the first one
            // in file order, exactly as a single worker would see it.
            return parse_chunk(trace, 0, trace.len());
        };
        if let (Some(prev), Some(first)) = (out.last(), part.first()) {
            if first.dyn_id <= prev.dyn_id {
                return parse_chunk(trace, 0, trace.len());
            }
        }
        out.extend(part);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BLOCKS: &str = "I|215|foo|6:1|11|27\nO|1|32|1|p|0x7ffd1000\nO|r|64|1|8|3\n\n\
I|216|foo|6:1|11|Mul\nO|1|32|1|8|3\nO|2|32|0||4\nO|r|32|1|9|12\n\n";

    #[test]
    fn two_blocks_parse_in_order() {
        let seq = parse_trace(TWO_BLOCKS.as_bytes(), 1).unwrap();
        assert_eq!(seq.len(), 2);
        let load = &seq[0];
        assert_eq!(
            (load.function.as_str(), load.line, load.column, load.bb_label.as_str()),
            ("foo", 6, 1, "11")
        );
        assert_eq!(load.opcode, Opcode::Load);
        assert_eq!(load.dyn_id, 215);
        assert_eq!(load.operands[0].slot, Slot::Input(1));
        assert_eq!(load.operands[0].name, "p");
        assert!(load.operands[0].is_named());
        assert_eq!(load.result().unwrap().name, "8");
        assert!(load.result().unwrap().is_temp());
        let mul = &seq[1];
        assert_eq!(mul.opcode, Opcode::Mul);
        assert_eq!(mul.result().unwrap().name, "9");
        assert_eq!(mul.input(2).unwrap().value, Scalar::Int(4));
    }

    #[test]
    fn unknown_opcode_is_preserved() {
        let b = parse_block("I|1|main|3:2|entry|ICmp\nO|1|32|1|4|0\n").unwrap();
        assert_eq!(b.opcode, Opcode::Other("ICmp".into()));
        let b = parse_block("I|1|main|3:2|entry|53\n").unwrap();
        assert_eq!(b.opcode, Opcode::Other("53".into()));
    }

    #[test]
    fn numeric_codes_map_to_mnemonics() {
        for (code, op) in [("27", Opcode::Load), ("28", Opcode::Store), ("49", Opcode::Call), ("12", Opcode::Mul)] {
            assert_eq!(Opcode::from_token(code), op);
        }
        assert_eq!(Opcode::from_token("getelementptr"), Opcode::GetElementPtr);
    }

    #[test]
    fn canonical_form_normalizes_numeric_opcode() {
        let b = parse_block("I|215|foo|6:1|11|27\nO|1|32|1|p|0x10\n").unwrap();
        assert_eq!(b.to_string(), "I|215|foo|6:1|11|Load\nO|1|32|1|p|0x10\n");
    }

    #[test]
    fn scalar_forms() {
        assert_eq!("0x1f".parse::<Scalar>().unwrap(), Scalar::Hex(31));
        assert_eq!("-3".parse::<Scalar>().unwrap(), Scalar::Int(-3));
        assert_eq!("2.5".parse::<Scalar>().unwrap(), Scalar::float(2.5));
        assert_eq!(Scalar::float(1.0).to_string(), "1.0");
        assert!("zz".parse::<Scalar>().is_err());
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let err = parse_trace(b"I|1|main|1:1|e|Load\nO|1|64|1|x\n", 1).unwrap_err();
        assert_eq!(
            err,
            TraceError::MalformedBlock {
                reason: "operand needs 6 fields, found 5".into(),
                offset: 20
            }
        );
        let err = parse_trace(b"I|1|main|1:1|e|Load\nO|1|64|0|x|5\n", 1).unwrap_err();
        assert!(matches!(err, TraceError::MalformedBlock { offset: 20, .. }));
        let err = parse_trace(b"O|1|64|0||5\n", 1).unwrap_err();
        assert!(matches!(err, TraceError::MalformedBlock { offset: 0, .. }));
        let err = parse_trace(b"I|2|m|1:1|e|Br\n\nI|2|m|1:1|e|Br\n\n", 1).unwrap_err();
        assert!(matches!(err, TraceError::MalformedBlock { offset: 16, .. }));
        let err = parse_block("I|1|m|1:1|e|Load\nO|r|64|1|1|0\nO|r|64|1|2|0\n").unwrap_err();
        assert!(matches!(err, TraceError::MalformedBlock { .. }));
    }

    #[test]
    fn empty_trace() {
        assert_eq!(parse_trace(b"", 4).unwrap(), vec![]);
        assert_eq!(partition_stream(b"", 2), Err(TraceError::EmptyTrace));
    }

    #[test]
    fn single_chunk_and_capped_partition() {
        let b = partition_stream(TWO_BLOCKS.as_bytes(), 1).unwrap();
        assert_eq!(b, vec![ChunkBoundary { byte_offset: 0, first_dyn_id: 215 }]);
        let b = partition_stream(TWO_BLOCKS.as_bytes(), 50).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].first_dyn_id, 216);
        assert_eq!(&TWO_BLOCKS.as_bytes()[b[1].byte_offset..b[1].byte_offset + 6], b"I|216|");
    }

    #[test]
    fn parallel_matches_sequential_small() {
        let mut text = String::new();
        for i in 0..500u64 {
            text.push_str(&format!("I|{i}|main|{}:1|bb|FAdd\nO|1|64|1|{}|0\nO|2|64|0||1.5\nO|r|64|1|{}|0\n\n", i % 40 + 1, i, i + 1));
        }
        let seq = parse_trace(text.as_bytes(), 1).unwrap();
        for w in [2, 3, 8, 64] {
            assert_eq!(parse_trace(text.as_bytes(), w).unwrap(), seq);
        }
    }

    #[test]
    fn trailing_block_without_blank_line() {
        let seq = parse_trace(b"I|1|m|1:1|e|Br\n\nI|2|m|1:1|e|Ret", 2).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq[1].opcode, Opcode::Ret);
    }
}
