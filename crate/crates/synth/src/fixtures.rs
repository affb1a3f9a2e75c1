//! Hand-written programs with known answers.
//!
//! The JSON copies under `fixtures/` hold the same programs in the fixture format;
//! the `fixture_files_match_builders` test keeps them in sync (set
//! `UPDATE_FIXTURES=1` to rewrite them).

use crate::program::{
    Arg, BinOp, Decl, Expr, Function, Loop, MiniProgram, Param, ParamKind, Place, Stmt, Storage,
};

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn v(n: &str) -> Expr {
    Expr::var(n)
}

fn e(n: &str, i: u32) -> Expr {
    Expr::elem(n, i)
}

fn set(n: &str, value: Expr, line: u32) -> Stmt {
    Stmt::assign(Place::Var(n.into()), value).at(line)
}

fn set_elem(n: &str, i: u32, value: Expr, line: u32) -> Stmt {
    Stmt::assign(Place::Elem(n.into(), i), value).at(line)
}

fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms
        .into_iter()
        .reduce(|a, b| Expr::bin(BinOp::FAdd, a, b))
        .unwrap_or(Expr::Const(0.0))
}

fn dot(a: &str, b: &str, n: u32) -> Expr {
    sum((0..n).map(|i| Expr::bin(BinOp::FMul, e(a, i), e(b, i))))
}

/// The small example loop: `foo` on lines 1-5, `main` from line 6, loop on
/// lines 13-21 over `it`.
pub fn small_loop() -> MiniProgram {
    let foo = Function {
        name: "foo".into(),
        line: Some(1),
        params: vec![
            Param { name: "p".into(), kind: ParamKind::Scalar },
            Param { name: "q".into(), kind: ParamKind::Scalar },
        ],
        locals: vec![Decl::scalar("t").at(2)],
        body: vec![set("t", Expr::bin(BinOp::Mul, v("p"), v("q")), 3)],
        ret: Some(v("t")),
        ret_line: Some(4),
    };
    let mut pre = Vec::new();
    for i in 0..4 {
        pre.push(set_elem("a", i, c(f64::from(i)), 9));
    }
    for i in 0..4 {
        pre.push(set_elem("b", i, c(f64::from(i) * 2.0), 10));
    }
    pre.push(set("s", Expr::bin(BinOp::Add, c(1.0), c(1.0)), 11));
    pre.push(set("r", Expr::bin(BinOp::Mul, c(2.0), c(1.0)), 11));
    pre.push(set("sum", Expr::bin(BinOp::Mul, v("s"), v("r")), 12));

    let mut body = vec![
        set("s", Expr::bin(BinOp::Add, v("it"), c(1.0)), 15),
        set_elem("a", 0, Expr::Call("foo".into(), vec![Arg::Var("r".into()), Arg::Var("s".into())]), 16),
    ];
    for i in 0..4 {
        body.push(set_elem("b", i, Expr::bin(BinOp::Mul, v("s"), c(2.0)), 17));
    }
    body.push(set("r", Expr::bin(BinOp::Add, v("r"), c(1.0)), 18));
    body.push(set("m", Expr::bin(BinOp::FAdd, e("a", 1), e("b", 1)), 19));
    body.push(set("sum", v("m"), 20));

    MiniProgram {
        functions: vec![foo],
        main_line: Some(6),
        declarations: vec![
            Decl::array("a", 4, Storage::Stack).at(7),
            Decl::array("b", 4, Storage::Stack).at(7),
            Decl::scalar("sum").at(8),
            Decl::scalar("s").at(8),
            Decl::scalar("r").at(8),
            Decl::scalar("it").at(8),
            Decl::scalar("m").at(19),
        ],
        pre_loop: pre,
        main_loop: Loop {
            induction: "it".into(),
            iterations: 3,
            start_line: Some(13),
            end_line: Some(21),
            body,
        },
        post_loop: vec![Stmt::Eval {
            value: Expr::Builtin("print".into(), vec![v("sum")]),
            line: Some(22),
        }],
    }
}

/// Conjugate-gradient style kernel: `conj_grad` on lines 1-15 with two
/// unrolled inner iterations on lines 7-14, `main` from line 16 with the
/// loop on lines 17-21 over `iter`.
pub fn cg() -> MiniProgram {
    const N: u32 = 3;
    let arr = |n: &str, len: u32| Param {
        name: n.into(),
        kind: ParamKind::Array { len },
    };
    let each = |line: u32, f: &dyn Fn(u32) -> (String, Expr)| -> Vec<Stmt> {
        (0..N)
            .map(|i| {
                let (n, value) = f(i);
                set_elem(&n, i, value, line)
            })
            .collect()
    };
    let a_row = |i: u32, x: &str| sum((0..N).map(|j| Expr::bin(BinOp::FMul, e("A", i * N + j), e(x, j))));

    let mut body = Vec::new();
    body.extend(each(2, &|_| ("z".into(), c(0.0))));
    body.extend(each(3, &|i| ("r".into(), e("x", i))));
    body.push(set("rho", dot("r", "r", N), 4));
    body.extend(each(5, &|i| ("p".into(), e("r", i))));
    for _ in 0..2 {
        body.extend(each(7, &|i| ("q".into(), a_row(i, "p"))));
        body.push(set("alpha", Expr::bin(BinOp::FDiv, v("rho"), dot("p", "q", N)), 8));
        body.extend(each(9, &|i| {
            ("z".into(), Expr::bin(BinOp::FAdd, e("z", i), Expr::bin(BinOp::FMul, v("alpha"), e("p", i))))
        }));
        body.push(set("rho0", v("rho"), 10));
        body.extend(each(11, &|i| {
            ("r".into(), Expr::bin(BinOp::FSub, e("r", i), Expr::bin(BinOp::FMul, v("alpha"), e("q", i))))
        }));
        body.push(set("rho", dot("r", "r", N), 12));
        body.push(set("beta", Expr::bin(BinOp::FDiv, v("rho"), v("rho0")), 13));
        body.extend(each(14, &|i| {
            ("p".into(), Expr::bin(BinOp::FAdd, e("r", i), Expr::bin(BinOp::FMul, v("beta"), e("p", i))))
        }));
    }
    let residual = sum((0..N).map(|i| {
        let d = || Expr::bin(BinOp::FSub, e("x", i), a_row(i, "z"));
        Expr::bin(BinOp::FMul, d(), d())
    }));
    let conj_grad = Function {
        name: "conj_grad".into(),
        line: Some(1),
        params: vec![arr("x", N), arr("z", N), arr("p", N), arr("q", N), arr("r", N), arr("A", N * N)],
        locals: ["rho", "rho0", "alpha", "beta"].iter().map(|n| Decl::scalar(n).at(1)).collect(),
        body,
        ret: Some(Expr::Builtin("sqrt".into(), vec![residual])),
        ret_line: Some(15),
    };

    let args = ["x", "z", "p", "q", "r", "A"].iter().map(|n| Arg::Var((*n).into())).collect();
    let mut loop_body = vec![set("rnorm", Expr::Call("conj_grad".into(), args), 18)];
    let norm = Expr::Builtin("sqrt".into(), vec![dot("z", "z", N)]);
    for i in 0..N {
        loop_body.push(set_elem("x", i, Expr::bin(BinOp::FDiv, e("z", i), norm.clone()), 19));
    }
    loop_body.push(set(
        "zeta",
        Expr::bin(BinOp::FAdd, c(10.0), Expr::bin(BinOp::FDiv, c(1.0), dot("x", "z", N))),
        20,
    ));

    let mut decls: Vec<Decl> = ["x", "z", "p", "q", "r"]
        .iter()
        .map(|n| Decl::array(n, N, Storage::Stack).init().at(16))
        .collect();
    decls.push(Decl::array("A", N * N, Storage::Stack).init().at(16));
    for n in ["rnorm", "zeta", "iter"] {
        decls.push(Decl::scalar(n).at(16));
    }
    MiniProgram {
        functions: vec![conj_grad],
        main_line: Some(16),
        declarations: decls,
        pre_loop: Vec::new(),
        main_loop: Loop {
            induction: "iter".into(),
            iterations: 2,
            start_line: Some(17),
            end_line: Some(21),
            body: loop_body,
        },
        post_loop: vec![Stmt::Eval {
            value: Expr::Builtin("print".into(), vec![v("zeta")]),
            line: Some(22),
        }],
    }
}

/// Fixture name and builder, for tests that iterate over all of them.
pub fn all() -> Vec<(&'static str, MiniProgram)> {
    vec![("small_loop", small_loop()), ("cg", cg())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn fixture_files_match_builders() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        for (name, prog) in all() {
            let path = dir.join(format!("{name}.json"));
            if std::env::var_os("UPDATE_FIXTURES").is_some() {
                std::fs::create_dir_all(&dir).unwrap();
                std::fs::write(&path, prog.to_json()).unwrap();
            }
            let text = std::fs::read_to_string(&path).unwrap();
            assert_eq!(MiniProgram::from_json(&text).unwrap(), prog, "{name}.json is stale");
        }
    }

    #[test]
    fn fixtures_are_valid() {
        for (_, p) in all() {
            p.validate().unwrap();
        }
    }
}
