//! Source-level interpreter giving the expected analysis result.
//!
//! It never looks at a trace. Loop inputs come from which names the
//! statements mention before and inside the loop; access histories come from
//! running the statements with one time step per assignment.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::program::{Arg, Expr, MiniProgram, ParamKind, Place, Shape, Stmt, Storage};
use crate::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExpectedPattern {
    War,
    Outcome,
    Rapo,
    Index,
    NotCritical,
}

impl ExpectedPattern {
    /// Same spelling as the analyzer's report.
    pub fn as_str(self) -> &'static str {
        match self {
            ExpectedPattern::War => "WAR",
            ExpectedPattern::Outcome => "Outcome",
            ExpectedPattern::Rapo => "RAPO",
            ExpectedPattern::Index => "Index",
            ExpectedPattern::NotCritical => "NotCritical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

/// Element-indexed access log of one loop input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    /// Element count, or `None` when the size is not visible in the program.
    pub len: Option<u32>,
    pub elements: BTreeMap<u32, Vec<(u64, Access)>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expected {
    pub mli: BTreeSet<String>,
    pub patterns: BTreeMap<String, ExpectedPattern>,
    pub induction: String,
    pub histories: BTreeMap<String, History>,
}

impl Expected {
    /// `(name, pattern)` pairs as the analyzer reports them: every loop
    /// input plus the induction variable as `Index`.
    pub fn report_pairs(&self) -> BTreeSet<(String, &'static str)> {
        let mut out: BTreeSet<(String, &'static str)> = self
            .patterns
            .iter()
            .filter(|(n, _)| **n != self.induction)
            .map(|(n, p)| (n.clone(), p.as_str()))
            .collect();
        out.insert((self.induction.clone(), ExpectedPattern::Index.as_str()));
        out
    }
}

/// Names a statement mentions directly, without entering callees.
pub fn stmt_names(s: &Stmt, out: &mut HashSet<String>) {
    match s {
        Stmt::Assign { target, value, .. } => {
            match target {
                Place::Var(n) | Place::Elem(n, _) => out.insert(n.clone()),
            };
            expr_names(value, out);
        }
        Stmt::Call { args, .. } => args_names(args, out),
        Stmt::Eval { value, .. } => expr_names(value, out),
        Stmt::PointerAssign { pointer, target, .. } => {
            out.insert(pointer.clone());
            out.insert(target.clone());
        }
    }
}

fn args_names(args: &[Arg], out: &mut HashSet<String>) {
    for a in args {
        match a {
            Arg::Var(n) | Arg::Elem(n, _) => {
                out.insert(n.clone());
            }
            Arg::Const(_) => {}
        }
    }
}

fn expr_names(e: &Expr, out: &mut HashSet<String>) {
    match e {
        Expr::Const(_) => {}
        Expr::Var(n) | Expr::Elem(n, _) => {
            out.insert(n.clone());
        }
        Expr::Bin(_, l, r) => {
            expr_names(l, out);
            expr_names(r, out);
        }
        Expr::Cast(x) => expr_names(x, out),
        Expr::Builtin(_, args) => args.iter().for_each(|a| expr_names(a, out)),
        Expr::Call(_, args) => args_names(args, out),
    }
}

/// A storage cell as seen from source: an element of a `main` variable, or
/// something private to a callee.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Cell {
    Main(String, u32),
    Private,
}

#[derive(Debug, Clone)]
enum Binding {
    /// Scalar storage; reading it reads this cell.
    Scalar(Cell),
    /// Array storage owned by a `main` variable, or private.
    Array(Option<String>),
    Unset,
}

struct Interp<'p> {
    prog: &'p MiniProgram,
    t: u64,
    recording: bool,
    log: BTreeMap<String, BTreeMap<u32, Vec<(u64, Access)>>>,
}

type Scope = HashMap<String, Binding>;

impl<'p> Interp<'p> {
    fn cell(scope: &Scope, name: &str, idx: Option<u32>) -> Cell {
        match (scope.get(name), idx) {
            (Some(Binding::Scalar(c)), None) => c.clone(),
            (Some(Binding::Array(Some(owner))), Some(i)) => Cell::Main(owner.clone(), i),
            _ => Cell::Private,
        }
    }

    fn eval(&mut self, scope: &Scope, e: &Expr, reads: &mut Vec<Cell>) {
        match e {
            Expr::Const(_) => {}
            Expr::Var(n) => reads.push(Self::cell(scope, n, None)),
            Expr::Elem(n, i) => reads.push(Self::cell(scope, n, Some(*i))),
            Expr::Bin(_, l, r) => {
                self.eval(scope, l, reads);
                self.eval(scope, r, reads);
            }
            Expr::Cast(x) => self.eval(scope, x, reads),
            Expr::Builtin(_, args) => args.iter().for_each(|a| self.eval(scope, a, reads)),
            Expr::Call(f, args) => reads.extend(self.call(scope, f, args)),
        }
    }

    /// Runs a callee and returns the cells its return value is computed from.
    fn call(&mut self, scope: &Scope, fname: &str, args: &[Arg]) -> Vec<Cell> {
        let func = self
            .prog
            .functions
            .iter()
            .find(|f| f.name == fname)
            .expect("validated call target");
        let mut inner = Scope::new();
        for (a, p) in args.iter().zip(&func.params) {
            let b = match (a, p.kind) {
                (Arg::Const(_), _) => Binding::Scalar(Cell::Private),
                (Arg::Var(n), ParamKind::Scalar) => Binding::Scalar(Self::cell(scope, n, None)),
                (Arg::Elem(n, i), _) => Binding::Scalar(Self::cell(scope, n, Some(*i))),
                (Arg::Var(n), ParamKind::Array { .. }) => match scope.get(n) {
                    Some(Binding::Array(owner)) => Binding::Array(owner.clone()),
                    _ => Binding::Array(None),
                },
            };
            inner.insert(p.name.clone(), b);
        }
        for d in &func.locals {
            let b = match d.shape {
                Shape::Array { .. } => Binding::Array(None),
                _ => Binding::Scalar(Cell::Private),
            };
            inner.insert(d.name.clone(), b);
        }
        for s in &func.body {
            self.exec(&mut inner, s);
        }
        let mut reads = Vec::new();
        if let Some(r) = &func.ret {
            self.eval(&inner, r, &mut reads);
        }
        reads
    }

    fn record(&mut self, c: &Cell, t: u64, a: Access) {
        if let (true, Cell::Main(v, i)) = (self.recording, c) {
            self.log
                .entry(v.clone())
                .or_default()
                .entry(*i)
                .or_default()
                .push((t, a));
        }
    }

    fn exec(&mut self, scope: &mut Scope, s: &Stmt) {
        match s {
            Stmt::Assign { target, value, .. } => {
                let mut reads = Vec::new();
                self.eval(scope, value, &mut reads);
                self.t += 1;
                let t = self.t;
                for r in &reads {
                    self.record(r, t, Access::Read);
                }
                let dest = match target {
                    Place::Var(n) => Self::cell(scope, n, None),
                    Place::Elem(n, i) => Self::cell(scope, n, Some(*i)),
                };
                self.record(&dest, t, Access::Write);
            }
            Stmt::Call { func, args, .. } => {
                self.call(scope, func, args);
            }
            Stmt::Eval { value, .. } => {
                self.eval(scope, value, &mut Vec::new());
            }
            Stmt::PointerAssign { pointer, target, .. } => {
                let owner = match scope.get(target) {
                    Some(Binding::Array(o)) => o.clone(),
                    _ => None,
                };
                scope.insert(pointer.clone(), Binding::Array(owner));
            }
        }
    }
}

fn classify(h: &History) -> ExpectedPattern {
    let has = |a: Access| h.elements.values().any(|l| l.iter().any(|(_, k)| *k == a));
    let war = h
        .elements
        .values()
        .any(|l| l.first().map(|(_, k)| *k) == Some(Access::Read) && l.iter().any(|(_, k)| *k == Access::Write));
    if war {
        return ExpectedPattern::War;
    }
    match (has(Access::Read), has(Access::Write)) {
        (false, true) => return ExpectedPattern::Outcome,
        (_, false) => return ExpectedPattern::NotCritical,
        (true, true) => {}
    }
    let Some(len) = h.len else {
        return ExpectedPattern::Rapo;
    };
    let first_read = h
        .elements
        .values()
        .flatten()
        .filter(|(_, k)| *k == Access::Read)
        .map(|(t, _)| *t)
        .min()
        .expect("reads exist");
    let written_early = |i: u32| {
        h.elements
            .get(&i)
            .is_some_and(|l| l.iter().any(|&(t, k)| k == Access::Write && t < first_read))
    };
    if (0..len).all(written_early) {
        ExpectedPattern::NotCritical
    } else {
        ExpectedPattern::Rapo
    }
}

/// Expected loop inputs, histories and patterns of a valid program.
pub fn expected(program: &MiniProgram) -> Result<Expected, SynthError> {
    program.validate()?;
    let decls: HashMap<&str, &crate::program::Decl> =
        program.declarations.iter().map(|d| (d.name.as_str(), d)).collect();

    // Pointers resolve to the array they were set to before the loop.
    let mut alias: HashMap<&str, &str> = HashMap::new();
    for s in &program.pre_loop {
        if let Stmt::PointerAssign { pointer, target, .. } = s {
            let t = alias.get(target.as_str()).copied().unwrap_or(target.as_str());
            alias.insert(pointer.as_str(), t);
        }
    }
    let resolve = |names: HashSet<String>| -> HashSet<String> {
        names
            .into_iter()
            .filter_map(|n| match decls.get(n.as_str()).map(|d| d.shape) {
                Some(Shape::Pointer) => alias.get(n.as_str()).map(|t| t.to_string()),
                Some(_) => Some(n),
                None => None,
            })
            .collect()
    };
    let mut before = HashSet::new();
    for s in &program.pre_loop {
        stmt_names(s, &mut before);
    }
    let mut before = resolve(before);
    for d in &program.declarations {
        let heap = matches!(d.shape, Shape::Array { storage: Storage::Heap | Storage::Opaque, .. });
        if d.initialized || heap {
            before.insert(d.name.clone());
        }
    }
    let mut inside = HashSet::new();
    for s in &program.main_loop.body {
        stmt_names(s, &mut inside);
    }
    let inside = resolve(inside);
    let mli: BTreeSet<String> = before.intersection(&inside).cloned().collect();

    let mut scope = Scope::new();
    for d in &program.declarations {
        let b = match d.shape {
            Shape::Scalar => Binding::Scalar(Cell::Main(d.name.clone(), 0)),
            Shape::Array { .. } => Binding::Array(Some(d.name.clone())),
            Shape::Pointer => Binding::Unset,
        };
        scope.insert(d.name.clone(), b);
    }
    let mut run = Interp {
        prog: program,
        t: 0,
        recording: false,
        log: BTreeMap::new(),
    };
    for s in &program.pre_loop {
        run.exec(&mut scope, s);
    }
    run.recording = true;
    for _ in 0..program.main_loop.iterations {
        for s in &program.main_loop.body {
            run.exec(&mut scope, s);
        }
    }

    let mut histories = BTreeMap::new();
    let mut patterns = BTreeMap::new();
    for name in &mli {
        let len = match decls[name.as_str()].shape {
            Shape::Scalar => Some(1),
            Shape::Array { storage: Storage::Opaque, .. } => None,
            Shape::Array { len, .. } => Some(len),
            Shape::Pointer => unreachable!("pointers resolve to arrays"),
        };
        let h = History {
            len,
            elements: run.log.remove(name).unwrap_or_default(),
        };
        patterns.insert(name.clone(), classify(&h));
        if !h.elements.is_empty() {
            histories.insert(name.clone(), h);
        }
    }
    Ok(Expected {
        mli,
        patterns,
        induction: program.main_loop.induction.clone(),
        histories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(len: Option<u32>, items: &[(u32, u64, Access)]) -> History {
        let mut h = History {
            len,
            ..History::default()
        };
        for &(i, t, a) in items {
            h.elements.entry(i).or_default().push((t, a));
        }
        h
    }

    #[test]
    fn rules() {
        use Access::*;
        assert_eq!(classify(&hist(Some(1), &[(0, 1, Read), (0, 1, Write)])), ExpectedPattern::War);
        assert_eq!(classify(&hist(Some(1), &[(0, 1, Write)])), ExpectedPattern::Outcome);
        assert_eq!(classify(&hist(Some(2), &[(0, 1, Write), (0, 2, Read)])), ExpectedPattern::Rapo);
        assert_eq!(
            classify(&hist(Some(2), &[(0, 1, Write), (1, 2, Write), (0, 3, Read)])),
            ExpectedPattern::NotCritical
        );
        assert_eq!(classify(&hist(None, &[(0, 1, Write), (0, 2, Read)])), ExpectedPattern::Rapo);
        assert_eq!(classify(&hist(Some(3), &[(2, 1, Read)])), ExpectedPattern::NotCritical);
    }
}
