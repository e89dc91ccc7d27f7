use std::collections::HashMap;

use geoforms_core::expr::{differentiate, evaluate, parse, BinOp, Expr, Func};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::var("x")),
        Just(Expr::var("y")),
        (-3.0..3.0f64).prop_map(|c| Expr::constant((c * 100.0).round() / 100.0)),
    ]
}

/// Smooth expressions without poles or domain restrictions near the sample box.
fn smooth() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::raw_binary(BinOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::raw_binary(BinOp::Sub, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::raw_binary(BinOp::Mul, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::raw_binary(
                BinOp::Div,
                a,
                Expr::add(&Expr::constant(2.0), &Expr::apply(Func::Sin, &b))
            )),
            (inner.clone(), 0..4i32).prop_map(|(a, n)| Expr::raw_binary(BinOp::Pow, a, Expr::constant(n as f64))),
            inner.clone().prop_map(|a| Expr::raw_unary(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::raw_unary(Func::Cos, a)),
            inner.clone().prop_map(|a| Expr::raw_unary(Func::Tanh, a)),
            inner
                .clone()
                .prop_map(|a| Expr::raw_unary(Func::Exp, Expr::raw_unary(Func::Sin, a))),
            inner.clone().prop_map(|a| Expr::raw_unary(Func::Neg, a)),
        ]
    })
}

fn at(e: &Expr, x: f64, y: f64) -> Result<f64, geoforms_core::expr::ExprError> {
    let b: HashMap<&str, f64> = [("x", x), ("y", y)].into_iter().collect();
    evaluate(e, &b)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_parse_round_trip(e in smooth(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(back.to_string(), text.clone());
        let (a, b) = (at(&e, x, y).unwrap(), at(&back, x, y).unwrap());
        prop_assert!(close(a, b, 1e-12), "{} vs {} for {}", a, b, text);
    }

    #[test]
    fn derivative_matches_central_difference(e in smooth(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let d = differentiate(&e, "x");
        let h = 1e-5;
        let fd = (at(&e, x + h, y).unwrap() - at(&e, x - h, y).unwrap()) / (2.0 * h);
        let v = at(&d, x, y).unwrap();
        prop_assert!((fd - v).abs() <= 1e-6 * (1.0 + v.abs()), "{} vs {} for {}", v, fd, e);
    }

    #[test]
    fn derivative_is_linear(a in smooth(), b in smooth(), c in -2.0..2.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let comb = Expr::add(&Expr::mul(&Expr::constant(c), &a), &b);
        let lhs = at(&differentiate(&comb, "y"), x, y).unwrap();
        let rhs = c * at(&differentiate(&a, "y"), x, y).unwrap() + at(&differentiate(&b, "y"), x, y).unwrap();
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn derivative_obeys_leibniz(a in smooth(), b in smooth(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let lhs = at(&differentiate(&Expr::mul(&a, &b), "x"), x, y).unwrap();
        let rhs = at(&differentiate(&a, "x"), x, y).unwrap() * at(&b, x, y).unwrap()
            + at(&a, x, y).unwrap() * at(&differentiate(&b, "x"), x, y).unwrap();
        prop_assert!(close(lhs, rhs, 1e-12));
    }
}
