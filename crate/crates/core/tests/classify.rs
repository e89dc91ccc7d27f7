use geoforms_core::classify::{
    check_base_like, check_fiber_like, check_product, fiber_reference, ClassifyError, Grid, Verdict, DEFAULT_TOLERANCE,
};
use geoforms_core::expr::{parse, Expr};
use geoforms_core::geometry::MetricField;
use geoforms_core::hypersurface::{base_like_normal_form, NormalFormMetric};

const TOL: f64 = DEFAULT_TOLERANCE;

fn e(s: &str) -> Expr {
    parse(s).unwrap()
}

fn diag_nf(xs: &[&str], entries: &[&str]) -> NormalFormMetric {
    NormalFormMetric::new("t", xs, |i, j| if i == j { e(entries[i]) } else { Expr::zero() }).unwrap()
}

fn fiber_e2t() -> NormalFormMetric {
    diag_nf(&["x", "y", "z"], &["exp(2*t)"; 3])
}

fn cylinder_s3() -> NormalFormMetric {
    diag_nf(
        &["chi", "theta", "phi"],
        &["1", "sin(chi)^2", "sin(chi)^2*sin(theta)^2"],
    )
}

fn flat_plane() -> MetricField {
    MetricField::diagonal(&["x", "y"], vec![Expr::one(), Expr::one()]).unwrap()
}

fn grid(n: usize) -> Vec<Vec<f64>> {
    Grid::default_for(n).points()
}

#[test]
fn product_checks() {
    let r = check_product(&cylinder_s3(), 5, &grid(3), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::Product);
    assert!(r.residuals.iter().all(|r| r.value < 1e-12));

    let r = check_product(&fiber_e2t(), 5, &grid(3), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::RejectedAtOrder(2));
    let fail = r.failure.unwrap();
    assert_eq!(fail.order, 2);
    assert!((fail.value - 1.0).abs() < 1e-12);

    let polar = base_like_normal_form("t", &e("x"), &flat_plane()).unwrap();
    let r = check_product(&polar, 5, &grid(2), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::Product);
}

#[test]
fn fiber_like_checks() {
    let r = check_fiber_like(&fiber_e2t(), &e("exp(2*t)"), 5, &grid(3), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::FiberLike);
    assert_eq!(r.sub_verdict, None);
    let hint = r.diagnostics.iter().find(|d| d.name.starts_with("h'(0)")).unwrap();
    assert!((hint.value - 2.0).abs() < 1e-12);

    let r = check_fiber_like(&fiber_e2t(), &e("1"), 5, &grid(3), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::RejectedAtOrder(2));

    let r = check_fiber_like(&cylinder_s3(), &e("1"), 5, &grid(3), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::FiberLike);
    assert_eq!(r.sub_verdict, Some(Verdict::Product));
}

#[test]
fn fiber_warp_is_normalized_by_its_value_at_zero() {
    let r = check_fiber_like(&fiber_e2t(), &e("3*exp(2*t)"), 4, &grid(3), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::FiberLike);
    assert!(matches!(
        check_fiber_like(&fiber_e2t(), &e("t"), 4, &grid(3), TOL),
        Err(ClassifyError::NonPositiveWarp { .. })
    ));
}

#[test]
fn product_check_equals_constant_fiber_check() {
    for m in [
        cylinder_s3(),
        fiber_e2t(),
        diag_nf(&["x", "y", "z"], &["1 + t*x", "1", "exp(t^3)"]),
    ] {
        let a = check_product(&m, 5, &grid(3), TOL).unwrap();
        let b = check_fiber_like(&m, &e("1"), 5, &grid(3), TOL).unwrap();
        assert_eq!(a.passed(), b.passed());
        for (ra, rb) in a.residuals.iter().zip(&b.residuals) {
            assert_eq!(ra.order, rb.order);
            assert!((ra.value - rb.value).abs() <= 1e-12);
        }
    }
}

#[test]
fn fiber_reference_is_reflexive() {
    let m = diag_nf(&["x", "y", "z"], &["1 + x^2", "exp(y)", "1"]);
    for h in ["exp(2*t)", "1 + t + t^2", "cosh(t)^2"] {
        let r = fiber_reference(&m, &e(h)).unwrap();
        let rep = check_fiber_like(&r, &e(h), 5, &grid(3), TOL).unwrap();
        assert_eq!(rep.verdict, Verdict::FiberLike, "{h}");
        assert!(rep.residuals.iter().all(|r| r.value == 0.0));
    }
}

#[test]
fn base_like_checks() {
    let f = e("exp(x^2)");
    let m = base_like_normal_form("t", &f, &flat_plane()).unwrap();
    let pts: Vec<Vec<f64>> = [-0.8, -0.3, 0.0, 0.4, 0.9].iter().map(|&x| vec![x, 0.25]).collect();
    let r = check_base_like(&m, &f, 6, &pts, TOL).unwrap();
    assert_eq!(r.verdict, Verdict::BaseLike);
    assert_eq!(r.sub_verdict, None);
    for stage in ["even-vanishing", "hessian", "odd-reference"] {
        assert!(r.residuals.iter().any(|x| x.stage == stage));
    }
    let negated = r.diagnostics.iter().find(|d| d.name.contains("negated")).unwrap();
    assert!(negated.value < 1e-8);

    let r = check_base_like(&fiber_e2t(), &e("exp(x)"), 5, &grid(3), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::RejectedAtOrder(2));
    assert_eq!(r.failure.unwrap().stage, "even-vanishing");

    let f = e("x");
    let m = base_like_normal_form("t", &f, &flat_plane()).unwrap();
    let r = check_base_like(&m, &f, 6, &grid(2), TOL).unwrap();
    assert_eq!(r.verdict, Verdict::BaseLike);
    assert_eq!(r.sub_verdict, Some(Verdict::Product));
}

#[test]
fn base_warp_must_be_positive() {
    let f = e("x");
    let m = base_like_normal_form("t", &f, &flat_plane()).unwrap();
    let pts = vec![vec![-0.5, 0.0]];
    assert!(matches!(
        check_base_like(&m, &f, 5, &pts, TOL),
        Err(ClassifyError::NonPositiveWarp { .. })
    ));
}

#[test]
fn wrong_base_warp_fails_the_hessian_stage() {
    let m = base_like_normal_form("t", &e("exp(x^2)"), &flat_plane()).unwrap();
    let r = check_base_like(&m, &e("exp(x)"), 5, &grid(2), TOL).unwrap();
    let fail = r.failure.unwrap();
    assert_eq!((fail.stage, fail.order), ("hessian", 3));
}

/// A fiber warp with h'(0) ≠ 0 and a base-like chart exclude each other.
#[test]
fn fiber_and_base_like_are_exclusive() {
    let fiber = fiber_e2t();
    assert!(check_fiber_like(&fiber, &e("exp(2*t)"), 3, &grid(3), TOL)
        .unwrap()
        .passed());
    assert!(!check_base_like(&fiber, &e("exp(x)"), 3, &grid(3), TOL)
        .unwrap()
        .passed());

    let f = e("exp(x^2)");
    let base = base_like_normal_form("t", &f, &flat_plane()).unwrap();
    assert!(check_base_like(&base, &f, 3, &grid(2), TOL).unwrap().passed());
    assert!(!check_fiber_like(&base, &e("exp(2*t)"), 3, &grid(2), TOL)
        .unwrap()
        .passed());
}
