use super::*;
use crate::expr::parse;

fn e(s: &str) -> Expr {
    parse(s).unwrap()
}

#[test]
fn flat_space_has_no_curvature() {
    let g = MetricField::diagonal(&["x", "y", "z", "w"], vec![Expr::one(); 4]).unwrap();
    let s = curvature_stack(&g, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(s.riemann.max_abs(), 0.0);
    assert_eq!(s.scalar, 0.0);
    assert_eq!(s.bach.unwrap().max_abs(), 0.0);
}

#[test]
fn symbolic_inverse_of_coupled_block() {
    let g = MetricField::new(&["x", "y", "z"], |i, j| match (i, j) {
        (0, 0) => e("2 + x^2"),
        (0, 1) => e("0.3*y"),
        (1, 1) => e("1 + y^2"),
        (2, 2) => e("exp(x)"),
        _ => Expr::zero(),
    })
    .unwrap();
    let s = curvature_stack(&g, &[0.4, -0.7, 0.2]).unwrap();
    let prod = s.metric.to_matrix() * s.metric_inv.to_matrix();
    assert!((prod - nalgebra::DMatrix::identity(3, 3)).abs().max() < 1e-14);
}

#[test]
fn singular_point_is_reported() {
    let g = MetricField::diagonal(&["x", "y", "z"], vec![Expr::one(), e("x^2"), Expr::one()]).unwrap();
    let engine = CurvatureEngine::new(&g, CurvatureOptions::default()).unwrap();
    assert!(matches!(
        engine.eval(&[0.0, 0.1, 0.1]),
        Err(GeometryError::Singular { .. })
    ));
}

#[test]
fn bach_in_dimension_three_is_off_unless_forced() {
    let g = crate::conventions::unit_sphere3();
    let auto = CurvatureEngine::new(&g, CurvatureOptions::default()).unwrap();
    assert!(auto.eval(&[1.0, 1.0, 0.0]).unwrap().bach.is_none());
    let forced = CurvatureEngine::new(
        &g,
        CurvatureOptions {
            bach: BachMode::Force,
            ..CurvatureOptions::default()
        },
    )
    .unwrap();
    assert!(forced.eval(&[1.0, 1.0, 0.0]).unwrap().bach.is_some());
}

#[test]
fn fornberg_weights_match_textbook_stencils() {
    let w = stencil_weights(&[-1.0, 0.0, 1.0], 2);
    assert_eq!(w, vec![1.0, -2.0, 1.0]);
    let w = stencil_weights(&[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
    let want = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
    for (a, b) in w.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}
