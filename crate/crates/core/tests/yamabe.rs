use geoforms_core::expr::{parse, Expr, Tape};
use geoforms_core::geometry::MetricField;
use geoforms_core::yamabe::{
    ambient_j, closed_form_sigma, constant_rational, default_truncation, pe_residual, product_traceless_schouten,
    solve_series, yamabe_residual, Branch, SeriesInS, SigmaOperators,
};
use num_rational::Ratio;

fn e(s: &str) -> Expr {
    parse(s).unwrap()
}

fn sphere(n: usize) -> MetricField {
    let names: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut diag = Vec::new();
    let mut acc = String::from("1");
    for name in &names {
        diag.push(e(&acc));
        acc = format!("{acc}*sin({name})^2");
    }
    MetricField::diagonal(&refs, diag).unwrap()
}

fn hyperbolic3() -> MetricField {
    MetricField::diagonal(&["x", "y", "z"], vec![e("1"), e("exp(2*x)"), e("exp(2*x)")]).unwrap()
}

fn flat(n: usize) -> MetricField {
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    MetricField::diagonal(&refs, vec![Expr::one(); n]).unwrap()
}

/// `Ω² δ` with `Ω = 1 + 0.1 sin x0` in `n` dimensions.
fn conformally_flat(n: usize) -> MetricField {
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    MetricField::diagonal(&refs, vec![e("(1 + 0.1*sin(x0))^2"); n]).unwrap()
}

fn points(n: usize) -> Vec<Vec<f64>> {
    let seeds = [0.37, 0.81, 1.13, 0.52, 1.29, 0.66, 0.94];
    (0..5)
        .map(|p| {
            (0..n)
                .map(|i| seeds[(p + 2 * i) % seeds.len()] + 0.05 * p as f64)
                .collect()
        })
        .collect()
}

fn eval(e: &Expr, vars: &[&str], x: &[f64]) -> f64 {
    Tape::compile(std::slice::from_ref(e), vars).unwrap().eval(x).unwrap()[0]
}

fn rational(e: &Expr, g: &MetricField) -> Option<Ratio<i64>> {
    constant_rational(e, &g.coord_refs(), &points(g.dim())).unwrap()
}

#[test]
fn flat_fiber_linear_sigma_has_zero_residual() {
    let mut ops = SigmaOperators::new(&flat(3)).unwrap();
    let sigma = SeriesInS::monomial(7, 1, Expr::one());
    let r = yamabe_residual(&sigma, &mut ops).unwrap();
    assert!(r.coeffs().iter().all(|c| c.is_zero()));
}

#[test]
fn sphere_linear_sigma_residual() {
    let g = sphere(3);
    let mut ops = SigmaOperators::new(&g).unwrap();
    let r = yamabe_residual(&SeriesInS::monomial(5, 1, Expr::one()), &mut ops).unwrap();
    let v = r.eval_coeffs(&g.coord_refs(), &points(3)[0]).unwrap();
    assert!(v[0].abs() < 1e-14 && v[1].abs() < 1e-14 && v[3].abs() < 1e-14);
    assert!((v[2] + 0.5).abs() < 1e-12);
}

#[test]
fn sphere_sinh_residual_vanishes_through_cubic() {
    let g = sphere(3);
    let mut ops = SigmaOperators::new(&g).unwrap();
    let sinh = closed_form_sigma(6.0, 4).series(5);
    let r = yamabe_residual(&sinh, &mut ops).unwrap();
    let v = r.eval_coeffs(&g.coord_refs(), &points(3)[1]).unwrap();
    for c in &v[..4] {
        assert!(c.abs() < 1e-12, "{v:?}");
    }
}

#[test]
fn s3_fiber() {
    let g = sphere(3);
    let sol = solve_series(&g, default_truncation(4)).unwrap();
    assert_eq!(rational(sol.phi(3).unwrap(), &g), Some(Ratio::new(1, 6)));
    assert_eq!(rational(sol.willmore.as_ref().unwrap(), &g), Some(Ratio::new(0, 1)));
    assert!(sol.phi(5).unwrap().is_zero());
}

#[test]
fn s5_fiber() {
    let g = sphere(5);
    let sol = solve_series(&g, default_truncation(6)).unwrap();
    assert_eq!(rational(sol.phi(3).unwrap(), &g), Some(Ratio::new(1, 6)));
    assert_eq!(rational(sol.phi(5).unwrap(), &g), Some(Ratio::new(1, 120)));
    for x in points(5) {
        assert!(eval(sol.willmore.as_ref().unwrap(), &g.coord_refs(), &x).abs() < 1e-10);
    }
}

#[test]
fn h3_fiber() {
    let g = hyperbolic3();
    let sol = solve_series(&g, default_truncation(4)).unwrap();
    assert_eq!(rational(sol.phi(3).unwrap(), &g), Some(Ratio::new(-1, 6)));
}

#[test]
fn solutions_are_odd() {
    for g in [sphere(3), conformally_flat(3), conformally_flat(4)] {
        let sol = solve_series(&g, default_truncation(g.dim() + 1)).unwrap();
        for (j, c) in sol.sigma.coeffs().iter().enumerate() {
            if j % 2 == 0 {
                assert!(c.is_zero(), "s^{j}");
            }
        }
        for (j, c) in sol.residual.coeffs().iter().enumerate() {
            if j % 2 == 1 {
                assert!(c.is_zero(), "residual s^{j}");
            }
        }
    }
}

/// Constant scalar curvature: the recursion reproduces the sin / sinh
/// expansions coefficient by coefficient.
#[test]
fn recursion_matches_closed_forms() {
    for (g, sc) in [
        (sphere(3), 6.0),
        (hyperbolic3(), -6.0),
        (sphere(4), 12.0),
        (flat(4), 0.0),
    ] {
        let d = g.dim() + 1;
        let sol = solve_series(&g, 9).unwrap();
        let closed = closed_form_sigma(sc, d).series(9);
        let want = closed.eval_coeffs(&[], &[]).unwrap();
        let top = if d % 2 == 0 { d - 1 } else { 9 };
        for x in points(g.dim()) {
            let got = sol.sigma.eval_coeffs(&g.coord_refs(), &x).unwrap();
            for j in 0..=top {
                assert!(
                    (got[j] - want[j]).abs() < 1e-10,
                    "d = {d}, s^{j}: {} vs {}",
                    got[j],
                    want[j]
                );
            }
        }
    }
}

#[test]
fn residual_vanishes_through_determined_order() {
    for g in [conformally_flat(3), conformally_flat(4)] {
        let d = g.dim() + 1;
        let sol = solve_series(&g, default_truncation(d)).unwrap();
        let last = if d % 2 == 0 { d - 1 } else { sol.residual.order() };
        for x in points(g.dim()) {
            let r = sol.residual.eval_coeffs(&g.coord_refs(), &x).unwrap();
            for (j, v) in r.iter().enumerate().take(last + 1) {
                assert!(v.abs() < 1e-9, "d = {d}, s^{j}: {v}");
            }
            if let Some(w) = &sol.willmore {
                assert!((r[d] - eval(w, &g.coord_refs(), &x)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn willmore_d4_is_minus_laplacian_of_j_over_12() {
    let g = conformally_flat(3);
    let sol = solve_series(&g, default_truncation(4)).unwrap();
    let mut ops = SigmaOperators::new(&g).unwrap();
    let j = ambient_j(&ops, 4);
    let lap = ops.laplacian(&j).unwrap();
    let vars = g.coord_refs();
    let mut seen = 0.0f64;
    for x in points(3) {
        let want = -eval(&lap, &vars, &x) / 12.0;
        let got = eval(sol.willmore.as_ref().unwrap(), &vars, &x);
        seen = seen.max(want.abs());
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-3), "{got} vs {want}");
    }
    assert!(seen > 1e-4, "test metric too close to constant curvature");
}

/// `φ₃ = J/(3(d−2))` and `φ₅ = [J²/(2(d−2)) + ΔJ/(d−4)] / (15(d−2))`.
#[test]
fn low_coefficients_match_closed_expressions() {
    for g in [conformally_flat(4), conformally_flat(5)] {
        let d = (g.dim() + 1) as f64;
        let sol = solve_series(&g, 7).unwrap();
        let mut ops = SigmaOperators::new(&g).unwrap();
        let j = ambient_j(&ops, g.dim() + 1);
        let lap = ops.laplacian(&j).unwrap();
        let vars = g.coord_refs();
        for x in points(g.dim()) {
            let (jv, lv) = (eval(&j, &vars, &x), eval(&lap, &vars, &x));
            let phi3 = jv / (3.0 * (d - 2.0));
            let phi5 = (jv * jv / (2.0 * (d - 2.0)) + lv / (d - 4.0)) / (15.0 * (d - 2.0));
            assert!((eval(sol.phi(3).unwrap(), &vars, &x) - phi3).abs() < 1e-10);
            assert!((eval(sol.phi(5).unwrap(), &vars, &x) - phi5).abs() < 1e-10 * phi5.abs().max(1.0));
        }
    }
}

#[test]
fn willmore_d6_formula() {
    let g = conformally_flat(5);
    let sol = solve_series(&g, default_truncation(6)).unwrap();
    let mut ops = SigmaOperators::new(&g).unwrap();
    let j = ambient_j(&ops, 6);
    let lap = ops.laplacian(&j).unwrap();
    let lap2 = ops.laplacian(&lap).unwrap();
    let grad2 = ops.grad_dot(&j, &j).unwrap();
    let vars = g.coord_refs();
    for x in points(5) {
        let (jv, lv, l2, g2) = (
            eval(&j, &vars, &x),
            eval(&lap, &vars, &x),
            eval(&lap2, &vars, &x),
            eval(&grad2, &vars, &x),
        );
        let want = (jv * lv + g2 - 0.5 * l2) / 180.0;
        let got = eval(sol.willmore.as_ref().unwrap(), &vars, &x);
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-6), "{got} vs {want}");
    }
}

#[test]
fn truncation_too_small() {
    assert!(solve_series(&sphere(3), 4).is_err());
}

#[test]
fn pe_residuals() {
    let x = [0.7, 1.1, 0.4];
    let r = pe_residual("s", &flat(3), &e("s"), &[0.1, 0.3, -0.2, 0.5]).unwrap();
    assert_eq!(r.max_abs(), 0.0);

    let s3 = sphere(3);
    let sinh = closed_form_sigma(6.0, 4);
    assert_eq!(sinh.branch, Branch::Sinh);
    for s in [0.1, 0.3] {
        let p: Vec<f64> = std::iter::once(s).chain(x).collect();
        let r = pe_residual("s", &s3, &sinh.expr("s"), &p).unwrap();
        assert!(r.max_abs() < 1e-9, "s = {s}: {}", r.max_abs());
    }
}

#[test]
fn traceless_schouten_of_constant_curvature_product() {
    use geoforms_core::geometry::curvature_stack;
    use geoforms_core::tensor::{invert, symmetrize_tf};
    for (g, sc) in [(sphere(3), 6.0), (hyperbolic3(), -6.0)] {
        let x = [0.7, 1.1, 0.4];
        let amb = geoforms_core::yamabe::product_metric("s", &g).unwrap();
        let st = curvature_stack(&amb, &[0.2, 0.7, 1.1, 0.4]).unwrap();
        let p_tf = symmetrize_tf(&st.schouten, &invert(&st.metric).unwrap()).unwrap();
        let want = product_traceless_schouten(&g, sc, &x).unwrap();
        assert!(p_tf.max_diff(&want).unwrap() < 1e-12);
    }
}

#[test]
fn non_einstein_fiber_obstructs_pe() {
    let g = MetricField::diagonal(&["th", "ph", "w"], vec![e("1"), e("sin(th)^2"), e("1")]).unwrap();
    let sol = solve_series(&g, default_truncation(4)).unwrap();
    let sigma = sol.sigma.to_expr("s");
    let r = pe_residual("s", &g, &sigma, &[0.1, 1.0, 0.3, 0.2]).unwrap();
    assert!(r.max_abs() >= 1e-3, "{}", r.max_abs());
}
