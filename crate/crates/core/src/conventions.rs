//! Sign conventions pinned by numerical checks on reference geometries.
//!
//! The lowering of the Riemann tensor is fixed so that the unit round
//! 3-sphere has `g^ac g^bd R_abcd = +6`. The sign of the fundamental forms of
//! order ≥ 3 is fixed so that the fiber warp `h = e^{2t}` over a flat fiber has
//! third form `[½h''(0) − ¼h'(0)²] ḡ = +ḡ`. Both checks run once per process.

use std::sync::OnceLock;

use serde::Serialize;

use crate::expr::{parse, Expr, DEFAULT_NODE_BUDGET};
use crate::geometry::{BachMode, CurvatureEngine, CurvatureOptions, MetricField};
use crate::hypersurface::{FormEngine, FormOptions, NormalFormMetric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conventions {
    pub riemann_lowering_sign: f64,
    pub ff_sign: f64,
}

static CONVENTIONS: OnceLock<Conventions> = OnceLock::new();

pub fn conventions() -> Conventions {
    *CONVENTIONS.get_or_init(|| {
        let riemann_lowering_sign = lowering_sign();
        let ff_sign = ff_sign(riemann_lowering_sign);
        Conventions {
            riemann_lowering_sign,
            ff_sign,
        }
    })
}

pub(crate) fn unit_sphere3() -> MetricField {
    let e = |s: &str| parse(s).expect("static expression");
    MetricField::diagonal(
        &["chi", "theta", "phi"],
        vec![Expr::one(), e("sin(chi)^2"), e("sin(chi)^2*sin(theta)^2")],
    )
    .expect("static metric")
}

fn lowering_sign() -> f64 {
    let opts = CurvatureOptions {
        bach: BachMode::Off,
        budget: DEFAULT_NODE_BUDGET,
        lowering_sign: 1.0,
    };
    let stack = CurvatureEngine::new(&unit_sphere3(), opts)
        .and_then(|e| e.eval(&[1.1, 0.9, 0.3]))
        .expect("round sphere curvature");
    let gi = &stack.metric_inv;
    let mut full = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    full += gi.get(&[a, c]) * gi.get(&[b, d]) * stack.riemann.get(&[a, b, c, d]);
                }
            }
        }
    }
    if full > 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn ff_sign(lowering_sign: f64) -> f64 {
    let m = NormalFormMetric::new("t", &["x", "y", "z"], |i, j| {
        if i == j {
            parse("exp(2*t)").expect("static expression")
        } else {
            Expr::zero()
        }
    })
    .expect("static metric");
    let opts = FormOptions {
        lowering_sign,
        ff_sign: 1.0,
        ..FormOptions::unsigned()
    };
    let mut engine = FormEngine::new(&m, opts).expect("form engine");
    let iii = engine.evaluate(3, &[0.2, -0.1, 0.4]).expect("third form");
    // the expected value is +ḡ = identity at t = 0
    if *iii.get(&[0, 0]) > 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_conventions_are_positive() {
        let c = conventions();
        assert_eq!(c.riemann_lowering_sign, 1.0);
        assert_eq!(c.ff_sign, 1.0);
    }
}
