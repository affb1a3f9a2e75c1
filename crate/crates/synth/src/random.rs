//! Seeded random mini programs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::program::{
    Arg, BinOp, Decl, Expr, Function, Loop, MiniProgram, Param, ParamKind, Place, Stmt,
    Storage,
};

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_functions: usize,
    pub max_decls: usize,
    pub max_pre_loop: usize,
    pub max_body: usize,
    pub max_iterations: u32,
    pub max_statements: usize,
    pub max_expr_depth: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_functions: 3,
            max_decls: 8,
            max_pre_loop: 4,
            max_body: 8,
            max_iterations: 3,
            max_statements: 64,
            max_expr_depth: 3,
        }
    }
}

/// Names visible while generating one function body.
#[derive(Default, Clone)]
struct Names {
    readable: Vec<String>,
    writable: Vec<String>,
    arrays: Vec<(String, u32)>,
}

struct Gen<'c> {
    rng: ChaCha8Rng,
    cfg: &'c GenConfig,
    /// Functions generated so far; callers only call earlier ones.
    funcs: Vec<Function>,
}

const BUILTINS: &[&str] = &["sqrt", "fabs", "exp", "pow"];

impl Gen<'_> {
    fn expr(&mut self, names: &Names, depth: u32, callable: usize) -> Expr {
        let leaf = depth == 0 || self.rng.gen_bool(0.35);
        if leaf {
            let mut choices = vec![0u8];
            if !names.readable.is_empty() {
                choices.extend([1, 1]);
            }
            if !names.arrays.is_empty() {
                choices.extend([2, 2]);
            }
            return match *choices.choose(&mut self.rng).expect("non-empty") {
                1 => Expr::Var(names.readable.choose(&mut self.rng).expect("non-empty").clone()),
                2 => {
                    let (a, len) = names.arrays.choose(&mut self.rng).expect("non-empty").clone();
                    Expr::Elem(a, self.rng.gen_range(0..len))
                }
                _ => Expr::Const(f64::from(self.rng.gen_range(1..10u8))),
            };
        }
        let roll = self.rng.gen_range(0..100);
        if roll < 8 {
            return Expr::Cast(Box::new(self.expr(names, depth - 1, callable)));
        }
        if roll < 16 {
            let name = *BUILTINS.choose(&mut self.rng).expect("non-empty");
            let n = if name == "pow" { 2 } else { 1 };
            let args = (0..n).map(|_| self.expr(names, depth - 1, callable)).collect();
            return Expr::Builtin(name.into(), args);
        }
        if roll < 28 {
            let returning: Vec<usize> = (0..callable).filter(|&i| self.funcs[i].ret.is_some()).collect();
            if let Some(&f) = returning.choose(&mut self.rng) {
                if let Some(args) = self.args(names, f) {
                    return Expr::Call(self.funcs[f].name.clone(), args);
                }
            }
        }
        let op = *BinOp::ALL.choose(&mut self.rng).expect("non-empty");
        Expr::bin(op, self.expr(names, depth - 1, callable), self.expr(names, depth - 1, callable))
    }

    fn args(&mut self, names: &Names, f: usize) -> Option<Vec<Arg>> {
        let params = self.funcs[f].params.clone();
        params
            .iter()
            .map(|p| match p.kind {
                ParamKind::Scalar => {
                    let roll = self.rng.gen_range(0..4);
                    Some(if roll < 2 && !names.readable.is_empty() {
                        Arg::Var(names.readable.choose(&mut self.rng)?.clone())
                    } else if roll == 2 && !names.arrays.is_empty() {
                        let (a, len) = names.arrays.choose(&mut self.rng)?.clone();
                        Arg::Elem(a, self.rng.gen_range(0..len))
                    } else {
                        Arg::Const(f64::from(self.rng.gen_range(1..5u8)))
                    })
                }
                ParamKind::Array { len } => {
                    let fits: Vec<&(String, u32)> = names.arrays.iter().filter(|(_, l)| *l >= len).collect();
                    fits.choose(&mut self.rng).map(|(a, _)| Arg::Var(a.clone()))
                }
            })
            .collect()
    }

    /// One to a few statements; a fill sequence writes a whole array.
    fn stmts(&mut self, names: &Names, callable: usize, out: &mut Vec<Stmt>) {
        let depth = self.cfg.max_expr_depth;
        let roll = self.rng.gen_range(0..100);
        if roll < 15 && !names.arrays.is_empty() {
            let (a, len) = names.arrays.choose(&mut self.rng).expect("non-empty").clone();
            for i in 0..len {
                let value = self.expr(names, 1, callable);
                out.push(Stmt::assign(Place::Elem(a.clone(), i), value));
            }
            return;
        }
        if roll < 30 && callable > 0 {
            let f = self.rng.gen_range(0..callable);
            if let Some(args) = self.args(names, f) {
                out.push(Stmt::Call {
                    func: self.funcs[f].name.clone(),
                    args,
                    line: None,
                });
                return;
            }
        }
        let value = self.expr(names, depth, callable);
        let to_scalar = !names.writable.is_empty() && (names.arrays.is_empty() || self.rng.gen_bool(0.5));
        let target = if to_scalar {
            Place::Var(names.writable.choose(&mut self.rng).expect("non-empty").clone())
        } else if let Some((a, len)) = names.arrays.choose(&mut self.rng).cloned() {
            Place::Elem(a, self.rng.gen_range(0..len))
        } else {
            return;
        };
        out.push(Stmt::assign(target, value));
    }

    fn function(&mut self, idx: usize) -> Function {
        let mut names = Names::default();
        let params: Vec<Param> = (0..self.rng.gen_range(1..=3))
            .map(|k| {
                let name = format!("p{k}");
                let kind = if self.rng.gen_bool(0.6) {
                    names.readable.push(name.clone());
                    ParamKind::Scalar
                } else {
                    let len = self.rng.gen_range(1..=3);
                    names.arrays.push((name.clone(), len));
                    ParamKind::Array { len }
                };
                Param { name, kind }
            })
            .collect();
        let locals: Vec<Decl> = (0..self.rng.gen_range(0..=2))
            .map(|k| {
                let name = format!("tmp{k}");
                if self.rng.gen_bool(0.7) {
                    names.readable.push(name.clone());
                    names.writable.push(name.clone());
                    Decl::scalar(&name)
                } else {
                    let len = self.rng.gen_range(1..=3);
                    names.arrays.push((name.clone(), len));
                    Decl::array(&name, len, Storage::Stack)
                }
            })
            .collect();
        let mut body = Vec::new();
        for _ in 0..self.rng.gen_range(0..=3) {
            self.stmts(&names, idx, &mut body);
        }
        let ret = self.rng.gen_bool(0.7).then(|| self.expr(&names, 2, idx));
        Function {
            name: format!("fn{idx}"),
            line: None,
            params,
            locals,
            body,
            ret,
            ret_line: None,
        }
    }

    fn program(&mut self) -> MiniProgram {
        let nf = self.rng.gen_range(0..=self.cfg.max_functions);
        for i in 0..nf {
            let f = self.function(i);
            self.funcs.push(f);
        }
        let mut decls = Vec::new();
        let mut main = Names::default();
        for k in 0..self.rng.gen_range(3..=self.cfg.max_decls.max(3)) {
            let name = format!("v{k}");
            let init = self.rng.gen_bool(0.4);
            let d = if self.rng.gen_bool(0.5) {
                main.readable.push(name.clone());
                main.writable.push(name.clone());
                Decl::scalar(&name)
            } else {
                let len = self.rng.gen_range(1..=4);
                let storage = match self.rng.gen_range(0..4) {
                    0 => Storage::Heap,
                    1 => Storage::Opaque,
                    _ => Storage::Stack,
                };
                main.arrays.push((name.clone(), len));
                Decl::array(&name, len, storage)
            };
            decls.push(if init { d.init() } else { d });
        }
        let mut pre = Vec::new();
        if !main.arrays.is_empty() && self.rng.gen_bool(0.3) {
            let (target, len) = main.arrays.choose(&mut self.rng).expect("non-empty").clone();
            decls.push(Decl::pointer("ptr0"));
            pre.push(Stmt::PointerAssign {
                pointer: "ptr0".into(),
                target,
                line: None,
            });
            main.arrays.push(("ptr0".into(), len));
        }
        decls.push(Decl::scalar("it"));
        for _ in 0..self.rng.gen_range(0..=self.cfg.max_pre_loop) {
            self.stmts(&main, nf, &mut pre);
        }
        let mut in_loop = main.clone();
        in_loop.readable.push("it".into());
        let mut body = Vec::new();
        for _ in 0..self.rng.gen_range(1..=self.cfg.max_body) {
            self.stmts(&in_loop, nf, &mut body);
        }
        let mut post = Vec::new();
        if self.rng.gen_bool(0.5) {
            let value = self.expr(&main, 2, nf);
            post.push(Stmt::Eval {
                value: Expr::Builtin("print".into(), vec![value]),
                line: None,
            });
        }
        MiniProgram {
            functions: std::mem::take(&mut self.funcs),
            main_line: None,
            declarations: decls,
            pre_loop: pre,
            main_loop: Loop {
                induction: "it".into(),
                iterations: self.rng.gen_range(1..=self.cfg.max_iterations.max(1)),
                start_line: None,
                end_line: None,
                body,
            },
            post_loop: post,
        }
    }
}

/// A valid random program; the same seed and config give the same program.
pub fn generate(seed: u64, cfg: &GenConfig) -> MiniProgram {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        cfg,
        funcs: Vec::new(),
    };
    loop {
        let p = g.program();
        if p.statement_count() <= cfg.max_statements && p.validate().is_ok() {
            return p;
        }
    }
}
