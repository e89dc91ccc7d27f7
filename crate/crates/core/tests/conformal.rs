use geoforms_core::conformal::{
    extended_third_ff, gauss_schouten_residual, intrinsic_traceless_schouten, jacobi_operator, measured_weight,
    product_third_form_prediction, rescale, rescale_metric, second_conformal_ff, third_conformal_ff, ConformalError,
};
use geoforms_core::expr::{parse, Expr};
use geoforms_core::geometry::{curvature_stack, MetricField};
use geoforms_core::hypersurface::{induced_metric, NormalFormMetric};
use geoforms_core::tensor::invert;
use geoforms_core::yamabe::{closed_form_sigma, product_metric};

fn e(s: &str) -> Expr {
    parse(s).unwrap()
}

fn diag_nf(xs: &[&str], entries: &[&str]) -> NormalFormMetric {
    NormalFormMetric::new("t", xs, |i, j| if i == j { e(entries[i]) } else { Expr::zero() }).unwrap()
}

fn cylinder_s3() -> NormalFormMetric {
    diag_nf(
        &["chi", "theta", "phi"],
        &["1", "sin(chi)^2", "sin(chi)^2*sin(theta)^2"],
    )
}

/// ℝ × (S²(1) × S¹) in coordinates (t, th, ph, w).
fn cylinder_s2s1() -> NormalFormMetric {
    diag_nf(&["th", "ph", "w"], &["1", "sin(th)^2", "1"])
}

fn generic() -> NormalFormMetric {
    NormalFormMetric::new("t", &["x", "y", "z"], |i, j| match (i, j) {
        (0, 0) => e("exp(t*x) + 0.1*t^2"),
        (0, 1) => e("0.2*t*y"),
        (1, 1) => e("1 + sin(t)*z"),
        (1, 2) => e("0.1*t^2*x"),
        (2, 2) => e("cosh(t) + 0.1*x*t"),
        _ => Expr::zero(),
    })
    .unwrap()
}

const X: [f64; 3] = [0.7, 1.1, 0.4];

#[test]
fn unit_factor_is_identity() {
    let m = generic();
    let r = rescale(&m, &Expr::one(), &[X.to_vec()]).unwrap();
    assert!(r.is_normal_form());
    let a = second_conformal_ff(&m, &X).unwrap();
    let b = second_conformal_ff(&r, &X).unwrap();
    assert_eq!(a.tensor, b.tensor);
}

#[test]
fn constant_scaling_of_scalar_curvature() {
    let g = MetricField::diagonal(&["a", "b", "c"], vec![e("1"), e("sin(a)^2"), e("sin(a)^2*sin(b)^2")]).unwrap();
    let g4 = rescale_metric(&g, &e("2")).unwrap();
    for p in [[0.4, 0.9, 0.1], [1.2, 0.3, 2.0]] {
        let (s1, s4) = (
            curvature_stack(&g, &p).unwrap().scalar,
            curvature_stack(&g4, &p).unwrap().scalar,
        );
        assert!((s4 - s1 / 4.0).abs() < 1e-12);
    }
}

#[test]
fn nonpositive_factor_is_rejected() {
    assert!(matches!(
        rescale(&generic(), &e("x - 1"), &[X.to_vec()]),
        Err(ConformalError::NonPositiveFactor { .. })
    ));
}

#[test]
fn weight_law_under_exponential_factor() {
    let m = generic();
    let omega = e("exp(x)");
    let r = rescale(&m, &omega, &[X.to_vec()]).unwrap();
    for x in [X, [-0.3, 0.5, 0.9]] {
        let om = x[0].exp();
        let (a, b) = (
            second_conformal_ff(&m, &x).unwrap(),
            second_conformal_ff(&r, &x).unwrap(),
        );
        assert!(a.tensor.max_abs() > 1e-2);
        assert!(b.tensor.max_diff(&a.tensor.scale(om)).unwrap() < 1e-8);
        let (a, b) = (third_conformal_ff(&m, &x).unwrap(), third_conformal_ff(&r, &x).unwrap());
        assert!(a.tensor.max_abs() > 1e-2);
        assert!(b.tensor.max_diff(&a.tensor).unwrap() < 1e-8);
    }
}

#[test]
fn weights_measured_under_constant_factor() {
    let m = generic();
    let lambda = 1.7;
    let r = rescale(&m, &Expr::constant(lambda), &[X.to_vec()]).unwrap();
    let (a, b) = (
        second_conformal_ff(&m, &X).unwrap(),
        second_conformal_ff(&r, &X).unwrap(),
    );
    assert!((measured_weight(&a.tensor, &b.tensor, lambda) - 1.0).abs() < 1e-10);
    assert_eq!(a.weight, num_rational::Ratio::from_integer(1));
    assert!(b.tensor.max_diff(&a.tensor.scale(lambda)).unwrap() < 1e-10);
    let (a, b) = (third_conformal_ff(&m, &X).unwrap(), third_conformal_ff(&r, &X).unwrap());
    assert!(measured_weight(&a.tensor, &b.tensor, lambda).abs() < 1e-10);
    assert!(b.tensor.max_diff(&a.tensor).unwrap() < 1e-10);
}

#[test]
fn third_form_is_trace_free() {
    for m in [generic(), cylinder_s2s1()] {
        let f = third_conformal_ff(&m, &X).unwrap();
        assert!(f.trace(&induced_metric(&m, &X).unwrap()).unwrap().abs() < 1e-10);
    }
}

#[test]
fn third_form_needs_dimension_four() {
    let m = diag_nf(&["x", "y"], &["exp(t)", "1"]);
    assert!(matches!(
        third_conformal_ff(&m, &[0.1, 0.2]),
        Err(ConformalError::Dimension { .. })
    ));
    assert!(matches!(
        jacobi_operator(&m, &e("1"), &[0.1, 0.2]),
        Err(ConformalError::Dimension { .. })
    ));
}

#[test]
fn products() {
    for m in [
        cylinder_s3(),
        cylinder_s2s1(),
        diag_nf(&["x", "y", "z"], &["1", "1", "1"]),
    ] {
        let ii = second_conformal_ff(&m, &X).unwrap();
        assert!(ii.tensor.max_abs() < 1e-14);
        let iii = third_conformal_ff(&m, &X).unwrap().tensor;
        let pred = product_third_form_prediction(&m, &X).unwrap();
        assert!(iii.max_diff(&pred).unwrap() < 1e-8);
    }
    assert!(third_conformal_ff(&cylinder_s3(), &X).unwrap().tensor.max_abs() < 1e-10);
}

/// S²(1) × S¹ in the orthonormal frame: P̊̄ = diag(1/3, 1/3, −2/3), III̊ = ½ P̊̄.
#[test]
fn s2_s1_values() {
    let m = cylinder_s2s1();
    let scale = [1.0, X[0].sin(), 1.0];
    let pb = intrinsic_traceless_schouten(&m, &X).unwrap();
    let iii = third_conformal_ff(&m, &X).unwrap().tensor;
    let want_p = [1.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0];
    for a in 0..3 {
        for b in 0..3 {
            let frame = scale[a] * scale[b];
            let wp = if a == b { want_p[a] } else { 0.0 };
            assert!((pb.get(&[a, b]) / frame - wp).abs() < 1e-12);
            assert!((iii.get(&[a, b]) / frame - 0.5 * wp).abs() < 1e-8);
        }
    }
}

#[test]
fn gauss_schouten_identity() {
    let fiber = diag_nf(&["x", "y", "z"], &["exp(2*t)"; 3]);
    for m in [diag_nf(&["x", "y", "z"], &["1"; 3]), cylinder_s2s1(), fiber, generic()] {
        for x in [X, [0.2, 0.9, 1.3]] {
            let r = gauss_schouten_residual(&m, &x).unwrap();
            assert!(r.max_abs() < 1e-8, "{:?}", r.entries());
        }
    }
}

#[test]
fn jacobi_operator_values() {
    for m in [cylinder_s3(), cylinder_s2s1()] {
        let out = jacobi_operator(&m, &e("1"), &X).unwrap();
        assert!(out.max_abs() < 1e-10);
    }
    let m = cylinder_s2s1();
    let out = jacobi_operator(&m, &e("exp(w)"), &X).unwrap();
    assert!(out.max_abs() > 1e-2);
    let gi = invert(&induced_metric(&m, &X).unwrap()).unwrap();
    assert!(out.is_symmetric(1e-12));
    assert!(out.metric_trace(0, 1, &gi).unwrap().entries()[0].abs() < 1e-10);
}

fn sphere5_product() -> MetricField {
    let g = MetricField::diagonal(
        &["a", "b", "c", "e", "f"],
        vec![
            e("1"),
            e("sin(a)^2"),
            e("sin(a)^2*sin(b)^2"),
            e("sin(a)^2*sin(b)^2*sin(c)^2"),
            e("sin(a)^2*sin(b)^2*sin(c)^2*sin(e)^2"),
        ],
    )
    .unwrap();
    product_metric("s", &g).unwrap()
}

#[test]
fn extended_third_form() {
    let g = sphere5_product();
    let sigma = closed_form_sigma(20.0, 6).expr("s");
    for s in [0.0, 0.05, 0.2] {
        let f = extended_third_ff(&g, &sigma, &[s, 0.7, 1.1, 0.4, 0.9, 0.3]).unwrap();
        assert!(f.tensor.max_abs() < 1e-10, "s = {s}");
    }

    // S² × S³ is not Einstein: on Σ the extension equals III̊
    let m = diag_nf(
        &["a", "b", "c", "e", "f"],
        &["1", "sin(a)^2", "1", "sin(c)^2", "sin(c)^2*sin(e)^2"],
    );
    let x = [0.7, 1.1, 0.4, 0.9, 0.3];
    let iii = third_conformal_ff(&m, &x).unwrap().tensor;
    assert!(iii.max_abs() > 1e-2);
    let ext = extended_third_ff(&m.full_metric(), &e("t + 0.3*t^3"), &m.ambient_point(&x)).unwrap();
    assert!(ext.tensor.max_diff(&iii).unwrap() < 1e-12);

    let flat = MetricField::diagonal(&["s", "a", "b", "c", "e", "f"], vec![Expr::one(); 6]).unwrap();
    let f = extended_third_ff(&flat, &e("s + 0.1*a*s^3"), &[0.2, 0.1, 0.3, 0.4, 0.5, 0.6]).unwrap();
    assert_eq!(f.tensor.max_abs(), 0.0);

    assert!(matches!(
        extended_third_ff(&cylinder_s3().full_metric(), &e("t"), &[0.0, 0.7, 1.1, 0.4]),
        Err(ConformalError::Dimension { .. })
    ));
}
