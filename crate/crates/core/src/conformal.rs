//! Conformally weighted hypersurface forms.
//!
//! Forms are evaluated at points of `Σ = {t = 0}` in a chart
//! `N² dt² + ḡ(t, x)` with unit conormal `n = N^{-1} ∂_t`. Because `g_ti = 0`,
//! coordinate components along `x` are already tangential.

use num_rational::Ratio;
use serde::Serialize;

use crate::expr::{evaluate, Expr};
use crate::geometry::{
    covariant_derivative, eval_tensor, BachMode, CurvatureEngine, CurvatureOptions, CurvatureStack, GeometryError,
    MetricField,
};
use crate::hypersurface::{induced_metric, FormEngine, FormOptions, HypersurfaceError, NormalFormMetric};
use crate::tensor::{invert, symmetrize_tf, Slot, Tensor, TensorValue};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConformalError {
    #[error(transparent)]
    Hypersurface(#[from] HypersurfaceError),
    #[error("{what} needs ambient dimension ≥ {need}, got {got}")]
    Dimension {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("conformal factor must be positive but is {value} at {point:?}")]
    NonPositiveFactor { value: f64, point: Vec<f64> },
}

impl From<GeometryError> for ConformalError {
    fn from(e: GeometryError) -> Self {
        ConformalError::Hypersurface(e.into())
    }
}

impl From<crate::tensor::TensorError> for ConformalError {
    fn from(e: crate::tensor::TensorError) -> Self {
        ConformalError::Hypersurface(e.into())
    }
}

impl From<crate::expr::ExprError> for ConformalError {
    fn from(e: crate::expr::ExprError) -> Self {
        ConformalError::Hypersurface(e.into())
    }
}

/// A symmetric 2-tensor on `Σ` with its conformal weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedForm {
    #[serde(skip)]
    pub tensor: TensorValue,
    #[serde(serialize_with = "ratio_str")]
    pub weight: Ratio<i64>,
    pub trace_free: bool,
    /// Lapse of the chart the form was evaluated in.
    pub representative: String,
}

fn ratio_str<S: serde::Serializer>(r: &Ratio<i64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(r)
}

impl WeightedForm {
    /// `ḡ^ab F_ab`.
    pub fn trace(&self, gbar: &TensorValue) -> Result<f64, ConformalError> {
        Ok(self.tensor.metric_trace(0, 1, &invert(gbar)?)?.entries()[0])
    }
}

/// The weight a `k`-th conformal fundamental form carries: `3 − k`.
pub fn form_weight(k: usize) -> Ratio<i64> {
    Ratio::from_integer(3 - k as i64)
}

/// `log(|b| / |a|) / log λ`: the weight seen between two evaluations whose
/// metrics differ by the constant factor `λ²`.
pub fn measured_weight(a: &TensorValue, b: &TensorValue, lambda: f64) -> f64 {
    (b.max_abs() / a.max_abs()).ln() / lambda.ln()
}

/// `Ω² g`: lapse `Ω N` and tangential block `Ω² ḡ`. The result is a
/// generalized chart unless `Ω ≡ 1`. Positivity is checked at `samples`.
pub fn rescale(m: &NormalFormMetric, omega: &Expr, samples: &[Vec<f64>]) -> Result<NormalFormMetric, ConformalError> {
    let coords = m.coord_refs();
    for x in samples {
        let p = m.ambient_point(x);
        let v = evaluate(omega, &coords.iter().copied().zip(p.iter().copied()).collect())?;
        if v <= 0.0 {
            return Err(ConformalError::NonPositiveFactor {
                value: v,
                point: x.clone(),
            });
        }
    }
    if omega.is_one() {
        return Ok(m.clone());
    }
    let sq = Expr::mul(omega, omega);
    let xs: Vec<&str> = m.sigma_coords().iter().map(|s| s.as_str()).collect();
    let out = NormalFormMetric::new(m.transverse(), &xs, |i, j| Expr::mul(&sq, m.gbar(i, j)))?;
    Ok(out.with_lapse(Expr::mul(omega, &m.lapse()))?)
}

/// `Ω² g` for a metric given as a field.
pub fn rescale_metric(g: &MetricField, omega: &Expr) -> Result<MetricField, ConformalError> {
    let sq = Expr::mul(omega, omega);
    Ok(MetricField::new(&g.coord_refs(), |i, j| {
        Expr::mul(&sq, g.component(i, j))
    })?)
}

fn representative(m: &NormalFormMetric) -> String {
    format!("lapse {}", m.lapse())
}

fn ambient_stack(m: &NormalFormMetric, x: &[f64], bach: BachMode) -> Result<CurvatureStack, ConformalError> {
    m.check_sample(x)?;
    let opts = CurvatureOptions {
        bach,
        ..CurvatureOptions::default()
    };
    Ok(CurvatureEngine::new(&m.full_metric(), opts)?.eval(&m.ambient_point(x))?)
}

fn lapse_at(m: &NormalFormMetric, x: &[f64]) -> Result<f64, ConformalError> {
    let coords = m.coord_refs();
    let p = m.ambient_point(x);
    Ok(evaluate(
        &m.lapse(),
        &coords.iter().copied().zip(p.iter().copied()).collect(),
    )?)
}

fn tangential(t: &TensorValue, f: impl Fn(usize, usize) -> f64) -> TensorValue {
    let n = t.dim() - 1;
    Tensor::from_fn(n, vec![Slot::Down, Slot::Down], |i| f(i[0] + 1, i[1] + 1))
}

fn check_dim(m: &NormalFormMetric, what: &'static str, need: usize) -> Result<(), ConformalError> {
    if m.dim() < need {
        return Err(ConformalError::Dimension {
            what,
            need,
            got: m.dim(),
        });
    }
    Ok(())
}

/// Trace-free second fundamental form `II̊`, weight 1.
pub fn second_conformal_ff(m: &NormalFormMetric, x: &[f64]) -> Result<WeightedForm, ConformalError> {
    m.check_sample(x)?;
    let ii = FormEngine::new(m, FormOptions::default())?.evaluate(2, x)?;
    let gbar = induced_metric(m, x)?;
    Ok(WeightedForm {
        tensor: symmetrize_tf(&ii, &invert(&gbar)?)?,
        weight: form_weight(2),
        trace_free: true,
        representative: representative(m),
    })
}

/// `W_nabn` at a point of `Σ`, from a stack evaluated there.
fn weyl_nn(stack: &CurvatureStack, lapse: f64) -> TensorValue {
    let w = &stack.weyl;
    tangential(w, |a, b| w.get(&[0, a, b, 0]) / (lapse * lapse))
}

/// `III̊ = W(n, ·, ·, n)|_Σ`, weight 0. Refused in dimension 3, where the
/// Weyl tensor vanishes identically.
pub fn third_conformal_ff(m: &NormalFormMetric, x: &[f64]) -> Result<WeightedForm, ConformalError> {
    check_dim(m, "III̊ (Weyl vanishes identically in dimension 3)", 4)?;
    let stack = ambient_stack(m, x, BachMode::Off)?;
    Ok(WeightedForm {
        tensor: weyl_nn(&stack, lapse_at(m, x)?),
        weight: form_weight(3),
        trace_free: true,
        representative: representative(m),
    })
}

/// Trace-free Schouten tensor `P̊̄` of the induced metric at `x`.
pub fn intrinsic_traceless_schouten(m: &NormalFormMetric, x: &[f64]) -> Result<TensorValue, ConformalError> {
    check_dim(m, "intrinsic Schouten tensor", 4)?;
    let opts = CurvatureOptions {
        bach: BachMode::Off,
        ..CurvatureOptions::default()
    };
    let st = CurvatureEngine::new(&m.sigma_metric(), opts)?.eval(x)?;
    Ok(symmetrize_tf(&st.schouten, &st.metric_inv)?)
}

/// `(d − 3)/(d − 2) · P̊̄`, the value `III̊` takes on a product.
pub fn product_third_form_prediction(m: &NormalFormMetric, x: &[f64]) -> Result<TensorValue, ConformalError> {
    let d = m.dim() as f64;
    Ok(intrinsic_traceless_schouten(m, x)?.scale((d - 3.0) / (d - 2.0)))
}

/// `III̊ᵉ_ab = W_{n̂abn̂} + 2σ C_{n̂(ab)} − σ²/(d−4) B_ab` with `n̂^a = g^ab ∂_b σ`,
/// on an ambient metric with coordinates `(s, x)` at an ambient point `p`.
/// Tangential components along `x` are returned.
pub fn extended_third_ff(g: &MetricField, sigma: &Expr, p: &[f64]) -> Result<WeightedForm, ConformalError> {
    let d = g.dim();
    if d < 6 {
        return Err(ConformalError::Dimension {
            what: "extended III̊",
            need: 6,
            got: d,
        });
    }
    let opts = CurvatureOptions {
        bach: BachMode::Force,
        ..CurvatureOptions::default()
    };
    let st = CurvatureEngine::new(g, opts)?.eval(p)?;
    let coords = g.coord_refs();
    let scalar = Tensor::from_entries(d, vec![], vec![sigma.clone()]);
    let dsigma = eval_tensor(&covariant_derivative(g, &scalar, 1)?, &coords, p)?;
    let sv = eval_tensor(&scalar, &coords, p)?.entries()[0];
    let nhat = dsigma.raise(0, &st.metric_inv)?;
    let nh = |c: usize| *nhat.get(&[c]);
    let bach = st.bach.as_ref().expect("bach forced");
    let tensor = tangential(&st.metric, |a, b| {
        let mut w = 0.0;
        let mut c_sym = 0.0;
        for c in 0..d {
            c_sym += 0.5 * nh(c) * (st.cotton.get(&[c, a, b]) + st.cotton.get(&[c, b, a]));
            for e in 0..d {
                w += nh(c) * nh(e) * st.weyl.get(&[c, a, b, e]);
            }
        }
        w + 2.0 * sv * c_sym - sv * sv / (d as f64 - 4.0) * bach.get(&[a, b])
    });
    Ok(WeightedForm {
        tensor,
        weight: form_weight(3),
        trace_free: false,
        representative: "ambient".into(),
    })
}

/// `II̊²_(ab)∘ − W_nabn − (d − 3)(P̊^⊤ − P̊̄ + H II̊)_ab`; zero for any chart.
pub fn gauss_schouten_residual(m: &NormalFormMetric, x: &[f64]) -> Result<TensorValue, ConformalError> {
    check_dim(m, "Gauss-Schouten identity", 4)?;
    let d = m.dim() as f64;
    let stack = ambient_stack(m, x, BachMode::Off)?;
    let gbar = induced_metric(m, x)?;
    let gi = invert(&gbar)?;
    let ii = FormEngine::new(m, FormOptions::default())?.evaluate(2, x)?;
    let h = ii.metric_trace(0, 1, &gi)?.entries()[0] / (d - 1.0);
    let iio = symmetrize_tf(&ii, &gi)?;
    // II̊_ac ḡ^cd II̊_db
    let sq = iio.contract(&gi, &[(1, 0)])?.contract(&iio, &[(1, 0)])?;
    let sq = symmetrize_tf(&sq, &gi)?;
    let wnn = weyl_nn(&stack, lapse_at(m, x)?);
    let p_top = symmetrize_tf(&tangential(&stack.schouten, |a, b| *stack.schouten.get(&[a, b])), &gi)?;
    let p_bar = intrinsic_traceless_schouten(m, x)?;
    let bracket = p_top.sub(&p_bar)?.add(&iio.scale(h))?;
    Ok(sq.sub(&wnn)?.sub(&bracket.scale(d - 3.0))?)
}

/// `(∇̄_(a∇̄_b)∘ + P̊̄_ab − (d−2)/(d−3) III̊_ab) τ` at `x ∈ Σ`.
pub fn jacobi_operator(m: &NormalFormMetric, tau: &Expr, x: &[f64]) -> Result<TensorValue, ConformalError> {
    check_dim(m, "Jacobi operator (divides by d − 3)", 4)?;
    let d = m.dim() as f64;
    let sigma = m.sigma_metric();
    let coords = sigma.coord_refs();
    let scalar = Tensor::from_entries(sigma.dim(), vec![], vec![tau.clone()]);
    let hess = eval_tensor(&covariant_derivative(&sigma, &scalar, 2)?, &coords, x)?;
    let tv = eval_tensor(&scalar, &coords, x)?.entries()[0];
    let gi = invert(&induced_metric(m, x)?)?;
    let hess_tf = symmetrize_tf(&hess, &gi)?;
    let p_bar = intrinsic_traceless_schouten(m, x)?;
    let iii = third_conformal_ff(m, x)?.tensor;
    let zeroth = p_bar.sub(&iii.scale((d - 2.0) / (d - 3.0)))?;
    Ok(hess_tf.add(&zeroth.scale(tv))?)
}
