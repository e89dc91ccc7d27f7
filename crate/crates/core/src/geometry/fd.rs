//! Finite-difference oracle for the curvature stack.
//!
//! Taylor coefficients of the metric at the point are estimated with central
//! difference stencils, then pushed through the same curvature pipeline in jet
//! arithmetic. A derivative of total order `o` is taken with step `h^(1/o)`,
//! which keeps the rounding error near `ε/h` for every order.

use crate::expr::Tape;
use crate::tensor::{MultiIndex, Slot, Tensor, TensorValue};

use super::jet::{Jet, JetCalculus, JetLayout};
use super::{pipeline, BachMode, CurvatureEngine, CurvatureOptions, GeometryError, MetricField, Quantity};

/// Formal accuracy order of the one-dimensional stencils.
const ACCURACY: usize = 8;

/// Fornberg weights for the `m`-th derivative at 0 on the given nodes.
pub fn stencil_weights(nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Central stencil for derivative order `m`: `(offset, weight)` pairs on the
/// unit grid with zero weights dropped.
fn central_stencil(m: usize) -> Vec<(i32, f64)> {
    if m == 0 {
        return vec![(0, 1.0)];
    }
    let half = (m + ACCURACY).div_ceil(2) as i32;
    let nodes: Vec<f64> = (-half..=half).map(|k| k as f64).collect();
    stencil_weights(&nodes, m)
        .into_iter()
        .zip(-half..=half)
        .filter(|(w, _)| w.abs() > 1e-14)
        .map(|(w, k)| (k, w))
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Estimated Taylor coefficients of every metric component at `point`.
fn metric_jets(metric: &MetricField, layout: &JetLayout, point: &[f64], h: f64) -> Result<Tensor<Jet>, GeometryError> {
    let d = metric.dim();
    let exprs: Vec<_> = (0..d)
        .flat_map(|i| (i..d).map(move |j| (i, j)))
        .map(|(i, j)| metric.component(i, j).clone())
        .collect();
    let tape = Tape::compile(&exprs, &metric.coord_refs())?;
    let ncomp = exprs.len();
    let mut coeffs = vec![vec![0.0; layout.exponents().len()]; ncomp];
    let mut x = point.to_vec();
    // stencil weights of a derivative sum to zero; differencing against the
    // center value makes constants cancel exactly
    let center = tape.eval(point)?;

    for (mi, alpha) in layout.exponents().iter().enumerate() {
        let total: usize = alpha.iter().map(|&a| a as usize).sum();
        let step = if total == 0 { 0.0 } else { h.powf(1.0 / total as f64) };
        let stencils: Vec<Vec<(i32, f64)>> = alpha.iter().map(|&a| central_stencil(a as usize)).collect();
        let norm = alpha.iter().map(|&a| factorial(a as usize)).product::<f64>() * step.powi(total as i32);
        let sizes: Vec<usize> = stencils.iter().map(|s| s.len()).collect();
        let mut pick = vec![0usize; d];
        loop {
            let mut w = 1.0;
            for v in 0..d {
                let (k, wk) = stencils[v][pick[v]];
                x[v] = point[v] + k as f64 * step;
                w *= wk;
            }
            let vals = tape.eval(&x)?;
            for ((c, v), v0) in coeffs.iter_mut().zip(vals).zip(&center) {
                c[mi] += w * if total == 0 { v } else { v - v0 };
            }
            // odometer over stencil points
            let mut v = 0;
            while v < d {
                pick[v] += 1;
                if pick[v] < sizes[v] {
                    break;
                }
                pick[v] = 0;
                v += 1;
            }
            if v == d {
                break;
            }
        }
        for c in &mut coeffs {
            c[mi] /= if total == 0 { 1.0 } else { norm };
        }
    }

    let mut k = 0;
    let mut out = Tensor::from_fn(d, vec![Slot::Down, Slot::Down], |_| {
        Jet::from_coeffs(layout, 0, vec![0.0; layout.exponents().len()])
    });
    for i in 0..d {
        for j in i..d {
            let jet = Jet::from_coeffs(layout, layout.order(), coeffs[k].clone());
            out.set(&[i, j], jet.clone());
            out.set(&[j, i], jet);
            k += 1;
        }
    }
    Ok(out)
}

fn value_tensor(t: &Tensor<Jet>) -> TensorValue {
    t.map(|j| j.value())
}

/// Recompute `quantity` at `point` from finite differences of the metric and
/// return the largest entrywise deviation from the symbolic value, relative
/// to `max(1, max |entry|)`.
pub fn fd_check(metric: &MetricField, quantity: Quantity, point: &[f64], h: f64) -> Result<f64, GeometryError> {
    let d = metric.dim();
    // the pipeline always builds Cotton, which needs third derivatives
    let order = quantity.derivative_order().max(3);
    let bach = quantity == Quantity::Bach;
    let opts = CurvatureOptions {
        bach: if bach { BachMode::Force } else { BachMode::Off },
        ..CurvatureOptions::default()
    };
    let exact = CurvatureEngine::new(metric, opts)?.eval(point)?;
    let exact = exact.quantity(quantity).expect("quantity computed");

    let layout = JetLayout::new(d, order);
    let g = metric_jets(metric, &layout, point, h)?;
    let mut calc = JetCalculus::new(layout);
    let cur = pipeline::curvature(&mut calc, g, opts.lowering_sign, bach)?;
    let approx = match quantity {
        Quantity::Christoffel => value_tensor(&cur.gamma),
        Quantity::Riemann => value_tensor(&cur.riemann),
        Quantity::Ricci => value_tensor(&cur.ricci),
        Quantity::Scalar => Tensor::from_entries(d, vec![], vec![cur.scalar.value()]),
        Quantity::Schouten => value_tensor(&cur.schouten),
        Quantity::J => Tensor::from_entries(d, vec![], vec![cur.j.value()]),
        Quantity::Weyl => value_tensor(&cur.weyl),
        Quantity::Cotton => value_tensor(&cur.cotton),
        Quantity::Bach => value_tensor(cur.bach.as_ref().expect("bach requested")),
    };
    let scale = exact.max_abs().max(1.0);
    let dev = MultiIndex::new(d, exact.rank())
        .map(|i| (exact.get(&i) - approx.get(&i)).abs())
        .fold(0.0, f64::max);
    Ok(dev / scale)
}
