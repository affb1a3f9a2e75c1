//! The mini loop-program model and its validity rules.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::SynthError;

/// Functions the emitter treats as opaque library calls.
pub const BUILTINS: &[&str] = &["sqrt", "pow", "exp", "fabs", "print"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniProgram {
    #[serde(default)]
    pub functions: Vec<Function>,
    /// Line of `main`'s header.
    #[serde(default)]
    pub main_line: Option<u32>,
    pub declarations: Vec<Decl>,
    #[serde(default)]
    pub pre_loop: Vec<Stmt>,
    #[serde(rename = "loop")]
    pub main_loop: Loop,
    #[serde(default)]
    pub post_loop: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Fixed-size local array.
    Stack,
    /// Heap block whose size is a visible constant.
    Heap,
    /// Heap block whose size is only known at run time.
    Opaque,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Scalar,
    Array { len: u32, storage: Storage },
    /// Set once by a pointer assignment before the loop.
    Pointer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decl {
    pub name: String,
    pub shape: Shape,
    #[serde(default)]
    pub initialized: bool,
    #[serde(default)]
    pub line: Option<u32>,
}

impl Decl {
    pub fn scalar(name: &str) -> Self {
        Decl {
            name: name.into(),
            shape: Shape::Scalar,
            initialized: false,
            line: None,
        }
    }

    pub fn array(name: &str, len: u32, storage: Storage) -> Self {
        Decl {
            name: name.into(),
            shape: Shape::Array { len, storage },
            initialized: false,
            line: None,
        }
    }

    pub fn pointer(name: &str) -> Self {
        Decl {
            name: name.into(),
            shape: Shape::Pointer,
            initialized: false,
            line: None,
        }
    }

    pub fn init(mut self) -> Self {
        self.initialized = true;
        self
    }

    pub fn at(mut self, line: u32) -> Self {
        self.line = Some(line);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loop {
    pub induction: String,
    pub iterations: u32,
    #[serde(default)]
    pub start_line: Option<u32>,
    #[serde(default)]
    pub end_line: Option<u32>,
    #[serde(default)]
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Passed by value; read-only in the callee.
    Scalar,
    /// Passed by reference; the callee may index up to `len`.
    Array { len: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    #[serde(default)]
    pub line: Option<u32>,
    pub params: Vec<Param>,
    /// Scalars and stack arrays only.
    #[serde(default)]
    pub locals: Vec<Decl>,
    #[serde(default)]
    pub body: Vec<Stmt>,
    #[serde(default)]
    pub ret: Option<Expr>,
    #[serde(default)]
    pub ret_line: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Add,
    FAdd,
    Sub,
    FSub,
    Mul,
    FMul,
    UDiv,
    SDiv,
    FDiv,
}

impl BinOp {
    pub const ALL: [BinOp; 9] = [
        BinOp::Add,
        BinOp::FAdd,
        BinOp::Sub,
        BinOp::FSub,
        BinOp::Mul,
        BinOp::FMul,
        BinOp::UDiv,
        BinOp::SDiv,
        BinOp::FDiv,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "Add",
            BinOp::FAdd => "FAdd",
            BinOp::Sub => "Sub",
            BinOp::FSub => "FSub",
            BinOp::Mul => "Mul",
            BinOp::FMul => "FMul",
            BinOp::UDiv => "UDiv",
            BinOp::SDiv => "SDiv",
            BinOp::FDiv => "FDiv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(String),
    Elem(String, u32),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Call of a mini-function with a return value.
    Call(String, Vec<Arg>),
    /// Call of a library function from [`BUILTINS`].
    Builtin(String, Vec<Expr>),
    Cast(Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.into())
    }

    pub fn elem(name: &str, i: u32) -> Expr {
        Expr::Elem(name.into(), i)
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arg {
    /// A scalar variable, or a whole array for an array parameter.
    Var(String),
    Elem(String, u32),
    Const(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Var(String),
    Elem(String, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Stmt {
    Assign {
        target: Place,
        value: Expr,
        #[serde(default)]
        line: Option<u32>,
    },
    /// Call whose return value, if any, is discarded.
    Call {
        func: String,
        args: Vec<Arg>,
        #[serde(default)]
        line: Option<u32>,
    },
    /// Expression evaluated for its side effects, e.g. printing.
    Eval {
        value: Expr,
        #[serde(default)]
        line: Option<u32>,
    },
    PointerAssign {
        pointer: String,
        target: String,
        #[serde(default)]
        line: Option<u32>,
    },
}

impl Stmt {
    pub fn assign(target: Place, value: Expr) -> Stmt {
        Stmt::Assign {
            target,
            value,
            line: None,
        }
    }

    pub fn at(mut self, l: u32) -> Stmt {
        match &mut self {
            Stmt::Assign { line, .. }
            | Stmt::Call { line, .. }
            | Stmt::Eval { line, .. }
            | Stmt::PointerAssign { line, .. } => *line = Some(l),
        }
        self
    }

    pub fn line(&self) -> Option<u32> {
        match self {
            Stmt::Assign { line, .. }
            | Stmt::Call { line, .. }
            | Stmt::Eval { line, .. }
            | Stmt::PointerAssign { line, .. } => *line,
        }
    }
}

/// What a name denotes inside one scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Scalar,
    /// Read-only scalar parameter.
    ScalarParam,
    /// Indexable with this many elements.
    Array(u32),
    /// Declared pointer not yet assigned.
    UnsetPointer,
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidProgram(msg.into())
}

pub(crate) struct Checker<'p> {
    prog: &'p MiniProgram,
    functions: HashMap<&'p str, (usize, &'p Function)>,
}

impl<'p> Checker<'p> {
    fn check_expr(
        &self,
        scope: &HashMap<String, Kind>,
        e: &Expr,
        caller: Option<usize>,
    ) -> Result<(), SynthError> {
        match e {
            Expr::Const(_) => Ok(()),
            Expr::Var(n) => match scope.get(n) {
                Some(Kind::Scalar | Kind::ScalarParam) => Ok(()),
                _ => Err(invalid(format!("`{n}` is not a readable scalar"))),
            },
            Expr::Elem(n, i) => check_index(scope, n, *i),
            Expr::Bin(_, l, r) => {
                self.check_expr(scope, l, caller)?;
                self.check_expr(scope, r, caller)
            }
            Expr::Cast(x) => self.check_expr(scope, x, caller),
            Expr::Builtin(name, args) => {
                if !BUILTINS.contains(&name.as_str()) {
                    return Err(invalid(format!("unknown builtin `{name}`")));
                }
                args.iter().try_for_each(|a| self.check_expr(scope, a, caller))
            }
            Expr::Call(f, args) => {
                let callee = self.check_call(scope, f, args, caller)?;
                if callee.ret.is_none() {
                    return Err(invalid(format!("`{f}` returns nothing")));
                }
                Ok(())
            }
        }
    }

    fn check_call(
        &self,
        scope: &HashMap<String, Kind>,
        f: &str,
        args: &[Arg],
        caller: Option<usize>,
    ) -> Result<&'p Function, SynthError> {
        let &(idx, func) = self
            .functions
            .get(f)
            .ok_or_else(|| invalid(format!("unknown function `{f}`")))?;
        if caller.is_some_and(|c| idx >= c) {
            return Err(invalid(format!("`{f}` must be defined before its caller")));
        }
        if args.len() != func.params.len() {
            return Err(invalid(format!("`{f}` takes {} arguments", func.params.len())));
        }
        for (a, p) in args.iter().zip(&func.params) {
            match (p.kind, a) {
                (ParamKind::Scalar, Arg::Const(_)) => {}
                (ParamKind::Scalar, Arg::Var(n)) => match scope.get(n) {
                    Some(Kind::Scalar | Kind::ScalarParam) => {}
                    _ => return Err(invalid(format!("`{n}` is not a scalar argument"))),
                },
                (ParamKind::Scalar, Arg::Elem(n, i)) => check_index(scope, n, *i)?,
                (ParamKind::Array { len }, Arg::Var(n)) => match scope.get(n) {
                    Some(Kind::Array(have)) if *have >= len => {}
                    _ => return Err(invalid(format!("`{n}` is not an array of length {len}"))),
                },
                (ParamKind::Array { .. }, _) => {
                    return Err(invalid(format!("`{f}` needs a whole array for `{}`", p.name)))
                }
            }
        }
        Ok(func)
    }

    fn check_stmt(
        &self,
        scope: &mut HashMap<String, Kind>,
        s: &Stmt,
        caller: Option<usize>,
        pointers_allowed: bool,
        frozen: Option<&str>,
    ) -> Result<(), SynthError> {
        match s {
            Stmt::Assign { target, value, .. } => {
                self.check_expr(scope, value, caller)?;
                match target {
                    Place::Var(n) => {
                        if Some(n.as_str()) == frozen {
                            return Err(invalid(format!("induction variable `{n}` is assigned in the loop")));
                        }
                        match scope.get(n) {
                            Some(Kind::Scalar) => Ok(()),
                            Some(Kind::ScalarParam) => Err(invalid(format!("parameter `{n}` is read-only"))),
                            _ => Err(invalid(format!("`{n}` is not an assignable scalar"))),
                        }
                    }
                    Place::Elem(n, i) => check_index(scope, n, *i),
                }
            }
            Stmt::Call { func, args, .. } => self.check_call(scope, func, args, caller).map(|_| ()),
            Stmt::Eval { value, .. } => self.check_expr(scope, value, caller),
            Stmt::PointerAssign { pointer, target, .. } => {
                if !pointers_allowed {
                    return Err(invalid("pointer assignments are only allowed before the loop"));
                }
                if scope.get(pointer) != Some(&Kind::UnsetPointer) {
                    return Err(invalid(format!("`{pointer}` is not an unassigned pointer")));
                }
                let len = match scope.get(target) {
                    Some(Kind::Array(len)) => *len,
                    _ => return Err(invalid(format!("`{target}` is not an array"))),
                };
                scope.insert(pointer.clone(), Kind::Array(len));
                Ok(())
            }
        }
    }
}

fn check_index(scope: &HashMap<String, Kind>, n: &str, i: u32) -> Result<(), SynthError> {
    match scope.get(n) {
        Some(Kind::Array(len)) if i < *len => Ok(()),
        Some(Kind::Array(len)) => Err(invalid(format!("`{n}[{i}]` is out of range {len}"))),
        _ => Err(invalid(format!("`{n}` is not an array"))),
    }
}

fn declare(scope: &mut HashMap<String, Kind>, d: &Decl, local: bool) -> Result<(), SynthError> {
    if d.name.is_empty() || d.name.bytes().all(|b| b.is_ascii_digit()) || d.name.contains('|') {
        return Err(invalid(format!("bad variable name {:?}", d.name)));
    }
    let kind = match d.shape {
        Shape::Scalar => Kind::Scalar,
        Shape::Array { len: 0, .. } => return Err(invalid(format!("`{}` has length 0", d.name))),
        Shape::Array { len, storage } => {
            if local && storage != Storage::Stack {
                return Err(invalid("function locals must be scalars or stack arrays"));
            }
            Kind::Array(len)
        }
        Shape::Pointer if local => return Err(invalid("function locals cannot be pointers")),
        Shape::Pointer => Kind::UnsetPointer,
    };
    if scope.insert(d.name.clone(), kind).is_some() {
        return Err(invalid(format!("`{}` declared twice", d.name)));
    }
    Ok(())
}

/// Longest chain of nested mini-function calls starting in `f`.
fn call_depth(functions: &[Function], idx: usize, memo: &mut HashMap<usize, usize>) -> usize {
    if let Some(&d) = memo.get(&idx) {
        return d;
    }
    let mut callees = Vec::new();
    let f = &functions[idx];
    for s in &f.body {
        stmt_calls(s, &mut callees);
    }
    if let Some(r) = &f.ret {
        expr_calls(r, &mut callees);
    }
    let d = 1 + callees
        .iter()
        .filter_map(|c| functions.iter().position(|g| &g.name == c))
        .filter(|&j| j < idx)
        .map(|j| call_depth(functions, j, memo))
        .max()
        .unwrap_or(0);
    memo.insert(idx, d);
    d
}

pub(crate) fn stmt_calls(s: &Stmt, out: &mut Vec<String>) {
    match s {
        Stmt::Assign { value, .. } | Stmt::Eval { value, .. } => expr_calls(value, out),
        Stmt::Call { func, .. } => out.push(func.clone()),
        Stmt::PointerAssign { .. } => {}
    }
}

fn expr_calls(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Call(f, _) => out.push(f.clone()),
        Expr::Bin(_, l, r) => {
            expr_calls(l, out);
            expr_calls(r, out);
        }
        Expr::Cast(x) => expr_calls(x, out),
        Expr::Builtin(_, args) => args.iter().for_each(|a| expr_calls(a, out)),
        _ => {}
    }
}

pub const MAX_CALL_DEPTH: usize = 4;

impl MiniProgram {
    /// Checks scoping, index ranges, call structure and loop rules.
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut functions = HashMap::new();
        for (i, f) in self.functions.iter().enumerate() {
            if f.name == "main" || BUILTINS.contains(&f.name.as_str()) || f.name == "malloc" || f.name == "get_size" {
                return Err(invalid(format!("reserved function name `{}`", f.name)));
            }
            if functions.insert(f.name.as_str(), (i, f)).is_some() {
                return Err(invalid(format!("function `{}` defined twice", f.name)));
            }
        }
        let checker = Checker {
            prog: self,
            functions,
        };
        let mut memo = HashMap::new();
        for (i, f) in self.functions.iter().enumerate() {
            let mut scope = HashMap::new();
            for p in &f.params {
                let kind = match p.kind {
                    ParamKind::Scalar => Kind::ScalarParam,
                    ParamKind::Array { len: 0 } => return Err(invalid("array parameter of length 0")),
                    ParamKind::Array { len } => Kind::Array(len),
                };
                if scope.insert(p.name.clone(), kind).is_some() {
                    return Err(invalid(format!("parameter `{}` repeated", p.name)));
                }
            }
            for d in &f.locals {
                declare(&mut scope, d, true)?;
            }
            for s in &f.body {
                checker.check_stmt(&mut scope, s, Some(i), false, None)?;
            }
            if let Some(r) = &f.ret {
                checker.check_expr(&scope, r, Some(i))?;
            }
            if call_depth(&self.functions, i, &mut memo) > MAX_CALL_DEPTH {
                return Err(invalid(format!("calls nest deeper than {MAX_CALL_DEPTH} from `{}`", f.name)));
            }
        }
        let mut scope = HashMap::new();
        for d in &self.declarations {
            declare(&mut scope, d, false)?;
        }
        let it = &checker.prog.main_loop.induction;
        if scope.get(it) != Some(&Kind::Scalar) {
            return Err(invalid(format!("induction variable `{it}` must be a declared scalar")));
        }
        if self.declarations.iter().any(|d| &d.name == it && d.initialized) {
            return Err(invalid(format!("induction variable `{it}` cannot be initialized")));
        }
        if let Some(d) = self.declarations.iter().find(|d| d.shape == Shape::Pointer && d.initialized) {
            return Err(invalid(format!("pointer `{}` cannot be initialized", d.name)));
        }
        if self.main_loop.iterations == 0 {
            return Err(invalid("the loop needs at least one iteration"));
        }
        let mut used = HashSet::new();
        for s in &self.pre_loop {
            crate::oracle::stmt_names(s, &mut used);
        }
        if used.contains(it.as_str()) {
            return Err(invalid(format!("induction variable `{it}` is used before the loop")));
        }
        for s in &self.pre_loop {
            checker.check_stmt(&mut scope, s, None, true, None)?;
        }
        for s in &self.main_loop.body {
            checker.check_stmt(&mut scope, s, None, false, Some(it))?;
        }
        for s in &self.post_loop {
            checker.check_stmt(&mut scope, s, None, false, None)?;
        }
        self.check_lines()?;
        let stmts = self.pre_loop.len()
            + self.main_loop.body.len()
            + self.post_loop.len()
            + self.functions.iter().map(|f| f.body.len()).sum::<usize>();
        if stmts == 0 && self.declarations.is_empty() {
            return Err(invalid("empty program"));
        }
        Ok(())
    }

    /// Checks that explicit lines put each part of `main` on the right side
    /// of the loop. Missing lines are not checked.
    fn check_lines(&self) -> Result<(), SynthError> {
        let (Some(start), Some(end)) = (self.main_loop.start_line, self.main_loop.end_line) else {
            return Ok(());
        };
        if start > end {
            return Err(invalid(format!("loop lines {start}-{end} are reversed")));
        }
        let outside = |what: &str, l: Option<u32>, ok: &dyn Fn(u32) -> bool| match l {
            Some(l) if !ok(l) => Err(invalid(format!("{what} on line {l} is on the wrong side of loop {start}-{end}"))),
            _ => Ok(()),
        };
        outside("main", self.main_line, &|l| l < start)?;
        for d in &self.declarations {
            let executes = d.initialized || matches!(d.shape, Shape::Array { storage: Storage::Heap | Storage::Opaque, .. });
            if executes {
                outside(&d.name, d.line, &|l| l < start)?;
            }
        }
        for s in &self.pre_loop {
            outside("statement", s.line(), &|l| l < start)?;
        }
        for s in &self.main_loop.body {
            outside("loop statement", s.line(), &|l| l > start && l <= end)?;
        }
        for s in &self.post_loop {
            outside("statement", s.line(), &|l| l > end)?;
        }
        Ok(())
    }

    /// Fills in missing lines: functions first, then `main` in order, one
    /// line per statement. Explicit lines are kept and later defaults
    /// continue after them.
    pub fn layout(&mut self) {
        let mut next = 1u32;
        let mut place = |slot: &mut Option<u32>| match slot {
            Some(l) => next = next.max(*l + 1),
            None => {
                *slot = Some(next);
                next += 1;
            }
        };
        for f in &mut self.functions {
            place(&mut f.line);
            for d in &mut f.locals {
                if d.line.is_none() {
                    d.line = f.line;
                }
            }
            for s in &mut f.body {
                place(stmt_line(s));
            }
            place(&mut f.ret_line);
        }
        place(&mut self.main_line);
        for d in &mut self.declarations {
            place(&mut d.line);
        }
        for s in &mut self.pre_loop {
            place(stmt_line(s));
        }
        place(&mut self.main_loop.start_line);
        for s in &mut self.main_loop.body {
            place(stmt_line(s));
        }
        place(&mut self.main_loop.end_line);
        for s in &mut self.post_loop {
            place(stmt_line(s));
        }
    }

    /// Loads a program from its JSON fixture form.
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let p: MiniProgram = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("programs serialize");
        s.push('\n');
        s
    }

    pub fn statement_count(&self) -> usize {
        self.pre_loop.len()
            + self.main_loop.body.len()
            + self.post_loop.len()
            + self.functions.iter().map(|f| f.body.len()).sum::<usize>()
    }
}

fn stmt_line(s: &mut Stmt) -> &mut Option<u32> {
    match s {
        Stmt::Assign { line, .. }
        | Stmt::Call { line, .. }
        | Stmt::Eval { line, .. }
        | Stmt::PointerAssign { line, .. } => line,
    }
}
