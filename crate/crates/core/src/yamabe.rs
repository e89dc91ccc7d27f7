//! Singular Yamabe expansions on products `ds² + ḡ₀`.
//!
//! A defining function is a truncated power series in `s` whose coefficients
//! are expressions on `Σ`. On a product, `|dσ|² = (∂_s σ)² + |∇̄σ|²`,
//! `Δσ = ∂_s²σ + Δ̄σ` and the ambient `J = S̄c / (2(d − 1))`, so the Yamabe
//! functional `|dσ|² − (2σ/d)(Δσ + Jσ)` is again such a series.

use num_rational::Ratio;
use serde::Serialize;

use crate::expr::{Expr, ExprError, Tape};
use crate::geometry::{pipeline, Calculus, CurvatureEngine, CurvatureOptions, GeometryError, MetricField, Symbolic};
use crate::tensor::{symmetrize_tf, Slot, Tensor, TensorValue};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum YamabeError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("series known through s^{valid} cannot supply s^{requested}")]
    Truncation { requested: usize, valid: usize },
    #[error("ambient dimension must be at least 3, got {0}")]
    Dimension(usize),
    #[error("transverse coordinate `{0}` clashes with a coordinate of Σ")]
    CoordinateClash(String),
}

impl From<ExprError> for YamabeError {
    fn from(e: ExprError) -> Self {
        YamabeError::Geometry(e.into())
    }
}

/// `Σ_j c_j s^j`, known through `s^order`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesInS {
    order: usize,
    coeffs: Vec<Expr>,
}

impl SeriesInS {
    pub fn zero(order: usize) -> Self {
        SeriesInS {
            order,
            coeffs: vec![Expr::zero(); order + 1],
        }
    }

    /// Coefficients beyond `order` are dropped, missing ones are zero.
    pub fn from_coeffs(order: usize, mut coeffs: Vec<Expr>) -> Self {
        coeffs.resize(order + 1, Expr::zero());
        SeriesInS { order, coeffs }
    }

    pub fn monomial(order: usize, power: usize, c: Expr) -> Self {
        let mut s = Self::zero(order);
        if power <= order {
            s.coeffs[power] = c;
        }
        s
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Expr] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> Result<&Expr, YamabeError> {
        self.coeffs.get(j).ok_or(YamabeError::Truncation {
            requested: j,
            valid: self.order,
        })
    }

    /// Lowest power with a coefficient that is not the literal zero.
    pub fn valuation(&self) -> usize {
        self.coeffs.iter().position(|c| !c.is_zero()).unwrap_or(self.order + 1)
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::from_coeffs(order.min(self.order), self.coeffs.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let coeffs = (0..=order)
            .map(|j| Expr::add(&self.coeffs[j], &other.coeffs[j]))
            .collect();
        SeriesInS { order, coeffs }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let coeffs = (0..=order)
            .map(|j| Expr::sub(&self.coeffs[j], &other.coeffs[j]))
            .collect();
        SeriesInS { order, coeffs }
    }

    /// Product truncated where either factor stops being known.
    pub fn mul(&self, other: &Self) -> Self {
        let order = (self.order + other.valuation()).min(other.order + self.valuation());
        let coeffs = (0..=order)
            .map(|j| {
                Expr::sum((0..=j).filter_map(|i| {
                    let (a, b) = (self.coeffs.get(i)?, other.coeffs.get(j - i)?);
                    (!a.is_zero() && !b.is_zero()).then(|| Expr::mul(a, b))
                }))
            })
            .collect();
        SeriesInS { order, coeffs }
    }

    pub fn scale(&self, c: &Expr) -> Self {
        self.map(|e| Expr::mul(c, e))
    }

    pub fn map(&self, mut f: impl FnMut(&Expr) -> Expr) -> Self {
        SeriesInS {
            order: self.order,
            coeffs: self.coeffs.iter().map(&mut f).collect(),
        }
    }

    pub fn try_map<E>(&self, mut f: impl FnMut(&Expr) -> Result<Expr, E>) -> Result<Self, E> {
        Ok(SeriesInS {
            order: self.order,
            coeffs: self.coeffs.iter().map(&mut f).collect::<Result<_, _>>()?,
        })
    }

    /// `∂_s`; known one order less.
    pub fn ds(&self) -> Self {
        if self.order == 0 {
            return SeriesInS {
                order: 0,
                coeffs: vec![Expr::zero()],
            };
        }
        let coeffs = (1..=self.order)
            .map(|j| Expr::mul(&Expr::constant(j as f64), &self.coeffs[j]))
            .collect();
        SeriesInS {
            order: self.order - 1,
            coeffs,
        }
    }

    /// `s · self`; known one order more.
    pub fn times_s(&self) -> Self {
        let mut coeffs = vec![Expr::zero()];
        coeffs.extend(self.coeffs.iter().cloned());
        SeriesInS {
            order: self.order + 1,
            coeffs,
        }
    }

    /// The polynomial `Σ c_j s^j` as an expression in `s` and the coefficient variables.
    pub fn to_expr(&self, s: &str) -> Expr {
        let sv = Expr::var(s);
        Expr::sum(
            self.coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(j, c)| Expr::mul(c, &Expr::powi(&sv, j as i32))),
        )
    }

    /// Numeric coefficients at a point of `Σ`.
    pub fn eval_coeffs(&self, vars: &[&str], x: &[f64]) -> Result<Vec<f64>, ExprError> {
        Tape::compile(&self.coeffs, vars)?.eval(x)
    }
}

/// Intrinsic operators of `(Σ, ḡ₀)` acting on expressions.
pub struct SigmaOperators {
    metric: MetricField,
    calc: Symbolic,
    g_inv: Tensor<Expr>,
    gamma: Tensor<Expr>,
    scalar: Expr,
}

impl SigmaOperators {
    pub fn new(metric: &MetricField) -> Result<Self, GeometryError> {
        let mut calc = Symbolic::new(metric.coords());
        let g = metric.tensor();
        let g_inv = pipeline::inverse(&calc, &g)?;
        let gamma = pipeline::christoffel(&mut calc, &g, &g_inv)?;
        let mixed = pipeline::riemann_mixed(&mut calc, &gamma)?;
        let ric = pipeline::ricci(&calc, &mixed);
        let scalar = pipeline::trace(&calc, &g_inv, &ric);
        Ok(SigmaOperators {
            metric: metric.clone(),
            calc,
            g_inv,
            gamma,
            scalar,
        })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    /// Scalar curvature `S̄c` of `ḡ₀`.
    pub fn scalar_curvature(&self) -> &Expr {
        &self.scalar
    }

    pub fn gradient(&mut self, u: &Expr) -> Result<Vec<Expr>, GeometryError> {
        (0..self.metric.dim()).map(|i| self.calc.partial(u, i)).collect()
    }

    /// `ḡ^ij ∂_i u ∂_j v`.
    pub fn grad_dot(&mut self, u: &Expr, v: &Expr) -> Result<Expr, GeometryError> {
        let du = self.gradient(u)?;
        let dv = if u.ptr_eq(v) { du.clone() } else { self.gradient(v)? };
        let n = self.metric.dim();
        let mut acc = Expr::zero();
        for i in 0..n {
            for j in 0..n {
                acc = self.calc.fma(acc, self.g_inv.get(&[i, j]), &Expr::mul(&du[i], &dv[j]));
            }
        }
        Ok(acc)
    }

    /// `Δ̄u = ḡ^ij (∂_i ∂_j u − Γ^k_ij ∂_k u)`.
    pub fn laplacian(&mut self, u: &Expr) -> Result<Expr, GeometryError> {
        if u.as_const().is_some() {
            return Ok(Expr::zero());
        }
        let n = self.metric.dim();
        let du = self.gradient(u)?;
        let mut acc = Expr::zero();
        for i in 0..n {
            for j in 0..n {
                let gij = self.g_inv.get(&[i, j]).clone();
                if gij.is_zero() {
                    continue;
                }
                let mut h = self.calc.partial(&du[i], j)?;
                for (k, duk) in du.iter().enumerate() {
                    let gk = self.gamma.get(&[k, i, j]);
                    if !gk.is_zero() && !duk.is_zero() {
                        h = Expr::sub(&h, &Expr::mul(gk, duk));
                    }
                }
                acc = self.calc.fma(acc, &gij, &h);
            }
        }
        Ok(acc)
    }
}

/// Ambient `J = S̄c / (2(d − 1))` of `ds² + ḡ₀`.
pub fn ambient_j(ops: &SigmaOperators, d: usize) -> Expr {
    Expr::mul(&Expr::constant(1.0 / (2.0 * (d as f64 - 1.0))), ops.scalar_curvature())
}

/// `|I_σ|² − 1` for `σ` on `ds² + ḡ₀` with `d = dim Σ + 1`.
pub fn yamabe_residual(sigma: &SeriesInS, ops: &mut SigmaOperators) -> Result<SeriesInS, YamabeError> {
    let d = ops.metric().dim() + 1;
    let j = ambient_j(ops, d);
    let ds = sigma.ds();
    let mut grad_sq = ds.mul(&ds);
    // |∇̄σ|² couples coefficient pairs
    let tangential = {
        let order = (sigma.order + sigma.valuation()).min(2 * sigma.order);
        let mut coeffs = vec![Expr::zero(); order + 1];
        for (a, ca) in sigma.coeffs.iter().enumerate() {
            if ca.is_zero() || ca.as_const().is_some() {
                continue;
            }
            for (b, cb) in sigma.coeffs.iter().enumerate().skip(a) {
                if cb.is_zero() || cb.as_const().is_some() || a + b > order {
                    continue;
                }
                let t = ops.grad_dot(ca, cb)?;
                let t = if a == b { t } else { Expr::mul(&Expr::constant(2.0), &t) };
                coeffs[a + b] = Expr::add(&coeffs[a + b], &t);
            }
        }
        SeriesInS { order, coeffs }
    };
    grad_sq = grad_sq.add(&tangential);
    let lap = sigma.ds().ds().add(&sigma.try_map(|c| ops.laplacian(c))?);
    let inner = lap.add(&sigma.scale(&j));
    let term = sigma.mul(&inner).scale(&Expr::constant(2.0 / d as f64));
    let one = SeriesInS::monomial(grad_sq.order, 0, Expr::one());
    Ok(grad_sq.sub(&term).sub(&one))
}

/// Output of [`solve_series`].
#[derive(Debug, Clone)]
pub struct YamabeSolution {
    pub d: usize,
    pub sigma: SeriesInS,
    /// Residual `|I_σ|² − 1` of the final `σ`.
    pub residual: SeriesInS,
    /// `ψ_d` for even `d`; `None` for odd `d`, where no obstruction arises.
    pub willmore: Option<Expr>,
    /// `ψ_{2ℓ+2}` met at each step, starting with `ψ₂`.
    pub psi: Vec<Expr>,
}

impl YamabeSolution {
    /// `φ_j`, the coefficient of `s^j`.
    pub fn phi(&self, j: usize) -> Option<&Expr> {
        self.sigma.coeffs.get(j)
    }
}

/// Truncation used when none is requested: `d + 2` for even `d`, 9 for odd.
pub fn default_truncation(d: usize) -> usize {
    if d % 2 == 0 {
        d + 2
    } else {
        9
    }
}

/// Solve `|I_σ|² = 1` order by order from `σ = s`. The odd coefficient
/// `φ_{2ℓ+3} = −d ψ_{2ℓ+2} / (2(2ℓ+3)(d − 2ℓ − 2))`; for even `d` the step
/// that would divide by zero yields the obstruction `ψ_d` instead.
pub fn solve_series(gbar0: &MetricField, truncation: usize) -> Result<YamabeSolution, YamabeError> {
    let d = gbar0.dim() + 1;
    if d < 3 {
        return Err(YamabeError::Dimension(d));
    }
    // the residual of a series known through s^N is known through s^(N−1)
    let needed = if d % 2 == 0 { d + 1 } else { 4 };
    if truncation < needed {
        return Err(YamabeError::Truncation {
            requested: needed,
            valid: truncation,
        });
    }
    let mut ops = SigmaOperators::new(gbar0)?;
    let mut sigma = SeriesInS::monomial(truncation, 1, Expr::one());
    let mut psi = Vec::new();
    let mut willmore = None;
    let mut ell = 0usize;
    loop {
        let power = 2 * ell + 3;
        if power > truncation {
            break;
        }
        let residual = yamabe_residual(&sigma, &mut ops)?;
        let p = residual.coeff(2 * ell + 2)?.clone();
        psi.push(p.clone());
        if d % 2 == 0 && 2 * ell + 2 == d {
            willmore = Some(p);
            break;
        }
        let k = -(d as f64) / (2.0 * power as f64 * (d as f64 - 2.0 * ell as f64 - 2.0));
        sigma.coeffs[power] = Expr::mul(&Expr::constant(k), &p);
        ell += 1;
    }
    let residual = yamabe_residual(&sigma, &mut ops)?;
    Ok(YamabeSolution {
        d,
        sigma,
        residual,
        willmore,
        psi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Sin,
    Linear,
    Sinh,
}

/// `σ = A sin(rs)`, `s` or `A sinh(rs)` for constant `S̄c`, with
/// `r² = S̄c/((d−1)(2−d))` resp. `S̄c/((d−1)(d−2))` and `A = 1/r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedForm {
    pub branch: Branch,
    pub amplitude: f64,
    pub rate: f64,
}

impl ClosedForm {
    pub fn expr(&self, s: &str) -> Expr {
        let sv = Expr::var(s);
        match self.branch {
            Branch::Linear => sv,
            Branch::Sin | Branch::Sinh => {
                let f = if self.branch == Branch::Sin {
                    crate::expr::Func::Sin
                } else {
                    crate::expr::Func::Sinh
                };
                let arg = Expr::mul(&Expr::constant(self.rate), &sv);
                Expr::mul(&Expr::constant(self.amplitude), &Expr::apply(f, &arg))
            }
        }
    }

    /// Taylor coefficients through `s^order`.
    pub fn series(&self, order: usize) -> SeriesInS {
        let mut coeffs = vec![Expr::zero(); order + 1];
        match self.branch {
            Branch::Linear => {
                if order >= 1 {
                    coeffs[1] = Expr::one();
                }
            }
            Branch::Sin | Branch::Sinh => {
                let mut fact = 1.0;
                for j in 1..=order {
                    fact *= j as f64;
                    if j % 2 == 1 {
                        let sign = if self.branch == Branch::Sin && j % 4 == 3 {
                            -1.0
                        } else {
                            1.0
                        };
                        coeffs[j] = Expr::constant(sign * self.amplitude * self.rate.powi(j as i32) / fact);
                    }
                }
            }
        }
        SeriesInS { order, coeffs }
    }
}

pub fn closed_form_sigma(sc: f64, d: usize) -> ClosedForm {
    let (d1, d2) = (d as f64 - 1.0, d as f64 - 2.0);
    if sc == 0.0 {
        return ClosedForm {
            branch: Branch::Linear,
            amplitude: 1.0,
            rate: 0.0,
        };
    }
    let (branch, r2) = if sc < 0.0 {
        (Branch::Sin, sc / (d1 * -d2))
    } else {
        (Branch::Sinh, sc / (d1 * d2))
    };
    let rate = r2.sqrt();
    ClosedForm {
        branch,
        amplitude: 1.0 / rate,
        rate,
    }
}

/// Product metric `ds² + ḡ₀` on `(s, x)`.
pub fn product_metric(s: &str, gbar0: &MetricField) -> Result<MetricField, YamabeError> {
    if gbar0.coords().iter().any(|c| c == s) {
        return Err(YamabeError::CoordinateClash(s.to_string()));
    }
    let mut coords = vec![s];
    coords.extend(gbar0.coord_refs());
    Ok(MetricField::new(&coords, |i, j| match (i, j) {
        (0, 0) => Expr::one(),
        (0, _) | (_, 0) => Expr::zero(),
        _ => gbar0.component(i - 1, j - 1).clone(),
    })?)
}

/// `∇_(a∇_b)∘σ + σ P̊_ab` of `ds² + ḡ₀` at an ambient point `p = (s, x)`.
pub fn pe_residual(s: &str, gbar0: &MetricField, sigma: &Expr, p: &[f64]) -> Result<TensorValue, YamabeError> {
    let g = product_metric(s, gbar0)?;
    let d = g.dim();
    let scalar = Tensor::from_entries(d, vec![], vec![sigma.clone()]);
    let hess = crate::geometry::covariant_derivative(&g, &scalar, 2)?;
    let coords = g.coord_refs();
    let hess = crate::geometry::eval_tensor(&hess, &coords, p)?;
    let sv = crate::geometry::eval_tensor(&scalar, &coords, p)?.entries()[0];
    let opts = CurvatureOptions {
        bach: crate::geometry::BachMode::Off,
        ..CurvatureOptions::default()
    };
    let stack = CurvatureEngine::new(&g, opts)?.eval(p)?;
    let gi = &stack.metric_inv;
    let hess_tf = symmetrize_tf(&hess, gi).map_err(GeometryError::from)?;
    let p_tf = symmetrize_tf(&stack.schouten, gi).map_err(GeometryError::from)?;
    Ok(hess_tf.add(&p_tf.scale(sv)).map_err(GeometryError::from)?)
}

/// `P̊ = (ḡ/(d−1) − n⊗n) S̄c / (d(d−2))` on `ds² + ḡ₀` with constant `S̄c`,
/// as a `d × d` tensor at `x ∈ Σ`.
pub fn product_traceless_schouten(gbar0: &MetricField, sc: f64, x: &[f64]) -> Result<TensorValue, YamabeError> {
    let n = gbar0.dim();
    let d = n + 1;
    let gb = gbar0.eval_matrix(x)?;
    let k = sc / (d as f64 * (d as f64 - 2.0));
    Ok(Tensor::from_fn(d, vec![Slot::Down, Slot::Down], |i| {
        match (i[0], i[1]) {
            (0, 0) => -k,
            (0, _) | (_, 0) => 0.0,
            (a, b) => k * gb[(a - 1, b - 1)] / (d as f64 - 1.0),
        }
    }))
}

/// Closest fraction with denominator at most `max_den` by continued
/// fractions, accepted if within `tol` of `v`.
pub fn recognize_rational(v: f64, tol: f64, max_den: i64) -> Option<Ratio<i64>> {
    if !v.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut x = v;
    for _ in 0..64 {
        let a = x.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - v).abs() <= tol {
            return Some(Ratio::new(h1, k1));
        }
        let frac = x - a as f64;
        if frac == 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

/// A coefficient recognized as the same rational at every sample point.
pub fn constant_rational(e: &Expr, vars: &[&str], points: &[Vec<f64>]) -> Result<Option<Ratio<i64>>, ExprError> {
    let tape = Tape::compile(std::slice::from_ref(e), vars)?;
    let mut found: Option<Ratio<i64>> = None;
    for x in points {
        let v = tape.eval(x)?[0];
        match (recognize_rational(v, 1e-12, 1_000_000), found) {
            (None, _) => return Ok(None),
            (Some(r), None) => found = Some(r),
            (Some(r), Some(f)) if r != f => return Ok(None),
            _ => {}
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals() {
        assert_eq!(recognize_rational(1.0 / 6.0, 1e-12, 1_000_000), Some(Ratio::new(1, 6)));
        assert_eq!(
            recognize_rational(-1.0 / 6.0, 1e-12, 1_000_000),
            Some(Ratio::new(-1, 6))
        );
        assert_eq!(
            recognize_rational(1.0 / 120.0, 1e-12, 1_000_000),
            Some(Ratio::new(1, 120))
        );
        assert_eq!(recognize_rational(0.0, 1e-12, 10), Some(Ratio::new(0, 1)));
        assert_eq!(recognize_rational(std::f64::consts::PI, 1e-12, 1000), None);
    }

    #[test]
    fn series_arithmetic() {
        let x = Expr::var("x");
        let a = SeriesInS::from_coeffs(4, vec![Expr::zero(), Expr::one(), x.clone()]);
        let sq = a.mul(&a);
        assert_eq!(sq.order(), 5);
        assert!(sq.coeffs()[0].is_zero() && sq.coeffs()[1].is_zero());
        let v = sq.eval_coeffs(&["x"], &[3.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 1.0, 6.0, 9.0, 0.0]);
        assert_eq!(a.ds().order(), 3);
        assert_eq!(a.ds().eval_coeffs(&["x"], &[3.0]).unwrap(), vec![1.0, 6.0, 0.0, 0.0]);
        assert_eq!(a.times_s().valuation(), 2);
    }

    #[test]
    fn closed_form_branches() {
        let c = closed_form_sigma(6.0, 4);
        assert_eq!(c.branch, Branch::Sinh);
        assert!((c.rate - 1.0).abs() < 1e-15 && (c.amplitude - 1.0).abs() < 1e-15);
        let c = closed_form_sigma(-6.0, 4);
        assert_eq!(c.branch, Branch::Sin);
        let v = c.series(5).eval_coeffs(&[], &[]).unwrap();
        assert!((v[3] + 1.0 / 6.0).abs() < 1e-15 && (v[5] - 1.0 / 120.0).abs() < 1e-15);
        assert_eq!(closed_form_sigma(0.0, 5).branch, Branch::Linear);
    }
}
