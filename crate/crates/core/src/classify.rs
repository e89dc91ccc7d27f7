//! Product / warped-product classification of a hypersurface at finite order.
//!
//! Each check synthesizes a reference metric of the claimed shape that shares
//! the induced metric of `Σ`, then compares fundamental forms of both metrics
//! order by order at sample points. Residuals are entrywise maxima divided by
//! `max |ḡ(0, x)|` at the same point.

use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::expr::{evaluate, Differentiator, Expr, ExprError};
use crate::geometry::{covariant_derivative, eval_tensor, GeometryError};
use crate::hypersurface::{
    base_like_fifth_form, induced_metric, FormEngine, FormOptions, HypersurfaceError, NormalFormMetric,
};
use crate::tensor::{Tensor, TensorValue};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Hypersurface(#[from] HypersurfaceError),
    #[error("{what} must be positive but is {value} at {point:?}")]
    NonPositiveWarp {
        what: &'static str,
        value: f64,
        point: Vec<f64>,
    },
    #[error("no sample points")]
    NoPoints,
    #[error("warp `{0}` depends on coordinates it may not use")]
    WarpVariables(String),
}

impl From<ExprError> for ClassifyError {
    fn from(e: ExprError) -> Self {
        ClassifyError::Hypersurface(e.into())
    }
}

impl From<GeometryError> for ClassifyError {
    fn from(e: GeometryError) -> Self {
        ClassifyError::Hypersurface(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Product,
    FiberLike,
    BaseLike,
    Inconclusive,
    RejectedAtOrder(usize),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Product => f.write_str("product"),
            Verdict::FiberLike => f.write_str("fiber-like"),
            Verdict::BaseLike => f.write_str("base-like"),
            Verdict::Inconclusive => f.write_str("inconclusive"),
            Verdict::RejectedAtOrder(k) => write!(f, "rejected-at-order-{k}"),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Largest residual of one stage at one order over all points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub stage: &'static str,
    pub order: usize,
    pub value: f64,
}

/// Diagnostic that does not enter the verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub name: &'static str,
    pub value: f64,
    pub note: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WarpData {
    None,
    /// `h` and its derivatives `h^(j)(0)` for `j = 0..K`.
    Fiber {
        h: String,
        jet: Vec<f64>,
    },
    /// `f` at each sample point.
    Base {
        f: String,
        samples: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub sub_verdict: Option<Verdict>,
    pub checked_order: usize,
    pub tolerance: f64,
    pub residuals: Vec<Residual>,
    pub failure: Option<Residual>,
    pub warp: WarpData,
    pub points: Vec<Vec<f64>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ClassificationReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.verdict != Verdict::Inconclusive
    }

    /// Largest residual recorded for an order, over all stages.
    pub fn residual(&self, order: usize) -> Option<f64> {
        self.residuals
            .iter()
            .filter(|r| r.order == order)
            .map(|r| r.value)
            .reduce(f64::max)
    }
}

/// Regular sample grid on `Σ`. Each axis range is shrunk by `margin` (a
/// fraction of its length) at both ends before placing `count` points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub ranges: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
    pub margin: f64,
}

impl Grid {
    pub const DEFAULT_RANGE: (f64, f64) = (0.2, 1.4);
    pub const DEFAULT_MARGIN: f64 = 0.1;

    /// `3^n` points in the default box.
    pub fn default_for(n: usize) -> Grid {
        Grid {
            ranges: vec![Self::DEFAULT_RANGE; n],
            counts: vec![3; n],
            margin: Self::DEFAULT_MARGIN,
        }
    }

    /// Points in lexicographic order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .ranges
            .iter()
            .zip(&self.counts)
            .map(|(&(lo, hi), &n)| {
                let pad = self.margin * (hi - lo);
                let (a, b) = (lo + pad, hi - pad);
                match n {
                    0 => vec![],
                    1 => vec![0.5 * (a + b)],
                    _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
                }
            })
            .collect();
        let mut out = vec![vec![]];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

fn sorted(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClassifyError> {
    if points.is_empty() {
        return Err(ClassifyError::NoPoints);
    }
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(p)
}

/// `values[p][o]` for the listed orders at every point, definition route.
fn forms_at(
    m: &NormalFormMetric,
    orders: &[usize],
    points: &[Vec<f64>],
) -> Result<Vec<Vec<TensorValue>>, ClassifyError> {
    let opts = FormOptions {
        k_max: orders.iter().copied().max().unwrap_or(2).max(2),
        ..FormOptions::default()
    };
    let mut engine = FormEngine::new(m, opts)?;
    let tape = engine.compile(orders)?;
    Ok(points.par_iter().map(|x| tape.eval(x)).collect::<Result<_, _>>()?)
}

fn scales(m: &NormalFormMetric, points: &[Vec<f64>]) -> Result<Vec<f64>, ClassifyError> {
    points
        .iter()
        .map(|x| {
            m.check_sample(x)?;
            Ok(induced_metric(m, x)?.max_abs())
        })
        .collect()
}

/// Max over points of `|a − b| / scale`, with `b = 0` when absent.
fn order_residual(a: &[&TensorValue], b: Option<&[&TensorValue]>, scales: &[f64]) -> f64 {
    a.iter()
        .enumerate()
        .map(|(p, t)| {
            let d = match b {
                Some(b) => t.max_diff(b[p]).expect("same shape"),
                None => t.max_abs(),
            };
            d / scales[p]
        })
        .fold(0.0, f64::max)
}

fn column(values: &[Vec<TensorValue>], o: usize) -> Vec<&TensorValue> {
    values.iter().map(|v| &v[o]).collect()
}

fn first_failure(residuals: &[Residual], tol: f64) -> Option<Residual> {
    residuals
        .iter()
        .filter(|r| r.value > tol || r.value.is_nan())
        .min_by_key(|r| r.order)
        .cloned()
}

fn finish(
    pass: Verdict,
    k: usize,
    tol: f64,
    residuals: Vec<Residual>,
    warp: WarpData,
    points: Vec<Vec<f64>>,
) -> ClassificationReport {
    let failure = first_failure(&residuals, tol);
    let verdict = match &failure {
        Some(r) => Verdict::RejectedAtOrder(r.order),
        None => pass,
    };
    ClassificationReport {
        verdict,
        sub_verdict: None,
        checked_order: k,
        tolerance: tol,
        residuals,
        failure,
        warp,
        points,
        diagnostics: Vec::new(),
    }
}

/// Passes iff every form of order `2..=K` vanishes at every point.
pub fn check_product(
    m: &NormalFormMetric,
    k: usize,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ClassificationReport, ClassifyError> {
    let points = sorted(points)?;
    let scale = scales(m, &points)?;
    let orders: Vec<usize> = (2..=k).collect();
    let values = forms_at(m, &orders, &points)?;
    let residuals = orders
        .iter()
        .enumerate()
        .map(|(o, &order)| Residual {
            stage: "vanishing",
            order,
            value: order_residual(&column(&values, o), None, &scale),
        })
        .collect();
    let verdict = if k < 2 { Verdict::Inconclusive } else { Verdict::Product };
    Ok(finish(verdict, k, tol, residuals, WarpData::None, points))
}

/// Reference metric `dt² + (h(t)/h(0)) ḡ(0, x)` sharing the induced metric of `m`.
pub fn fiber_reference(m: &NormalFormMetric, h: &Expr) -> Result<NormalFormMetric, ClassifyError> {
    let t = m.transverse();
    if h.variables().iter().any(|v| v != t) {
        return Err(ClassifyError::WarpVariables(h.to_string()));
    }
    let h0 = h.substitute(t, &Expr::zero());
    let h0v = evaluate(&h0, &Default::default())?;
    if h0v <= 0.0 {
        return Err(ClassifyError::NonPositiveWarp {
            what: "h(0)",
            value: h0v,
            point: vec![0.0],
        });
    }
    let ratio = Expr::div(h, &Expr::constant(h0v));
    let zero = Expr::zero();
    let xs: Vec<&str> = m.sigma_coords().iter().map(|s| s.as_str()).collect();
    let r = NormalFormMetric::new(t, &xs, |i, j| Expr::mul(&ratio, &m.gbar(i, j).substitute(t, &zero)))?;
    Ok(r.with_fiber_warp(h.clone())?)
}

fn warp_jet(h: &Expr, t: &str, k: usize) -> Result<Vec<f64>, ClassifyError> {
    let mut d = Differentiator::new(t);
    let mut e = h.clone();
    let mut jet = Vec::with_capacity(k + 1);
    let at0 = |e: &Expr| evaluate(e, &[(t, 0.0)].into_iter().collect());
    jet.push(at0(&e)?);
    for _ in 0..k {
        e = d.diff(&e)?;
        jet.push(at0(&e)?);
    }
    Ok(jet)
}

/// Compare `m` against the fiber-like reference built from the declared `h`.
pub fn check_fiber_like(
    m: &NormalFormMetric,
    h: &Expr,
    k: usize,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ClassificationReport, ClassifyError> {
    let points = sorted(points)?;
    let reference = fiber_reference(m, h)?;
    let scale = scales(m, &points)?;
    let orders: Vec<usize> = (2..=k).collect();
    let ours = forms_at(m, &orders, &points)?;
    let theirs = forms_at(&reference, &orders, &points)?;
    let residuals = orders
        .iter()
        .enumerate()
        .map(|(o, &order)| Residual {
            stage: "reference",
            order,
            value: order_residual(&column(&ours, o), Some(&column(&theirs, o)), &scale),
        })
        .collect();
    let jet = warp_jet(h, m.transverse(), k)?;
    let verdict = if k < 2 {
        Verdict::Inconclusive
    } else {
        Verdict::FiberLike
    };
    let mut report = finish(
        verdict,
        k,
        tol,
        residuals,
        WarpData::Fiber {
            h: h.to_string(),
            jet: jet.clone(),
        },
        points,
    );
    if report.passed() && jet[1..].iter().all(|&v| v == 0.0) {
        report.sub_verdict = Some(Verdict::Product);
    }
    if let Some(rate) = log_warp_rate_hint(m, &report.points)? {
        report.diagnostics.push(Diagnostic {
            name: "h'(0)/h(0) hint",
            value: rate,
            note: "mean of 2 tr FF2 / (d - 1) over the points; non-authoritative, h is a declared input",
        });
    }
    Ok(report)
}

/// `2 ḡ^ab FF2_ab / (d − 1)` averaged over the points: the value of
/// `h'(0)/h(0)` a fiber-like warp would need.
pub fn log_warp_rate_hint(m: &NormalFormMetric, points: &[Vec<f64>]) -> Result<Option<f64>, ClassifyError> {
    if points.is_empty() {
        return Ok(None);
    }
    let values = forms_at(m, &[2], points)?;
    let mut sum = 0.0;
    for (x, v) in points.iter().zip(&values) {
        let gi = crate::tensor::invert(&induced_metric(m, x)?).map_err(HypersurfaceError::from)?;
        let tr = v[0].metric_trace(0, 1, &gi).map_err(HypersurfaceError::from)?.entries()[0];
        sum += 2.0 * tr / (m.dim() - 1) as f64;
    }
    Ok(Some(sum / points.len() as f64))
}

/// Generalized chart `f² dt² + ḡ(0, x)` sharing the induced metric of `m`.
pub fn base_reference(m: &NormalFormMetric, f: &Expr) -> Result<NormalFormMetric, ClassifyError> {
    let sigma = m.sigma_metric();
    if f.variables().iter().any(|v| !sigma.coords().contains(v)) {
        return Err(ClassifyError::WarpVariables(f.to_string()));
    }
    Ok(crate::hypersurface::base_like_normal_form(m.transverse(), f, &sigma)?)
}

/// Three-stage base-like check: even forms vanish, `∇̄²f = f III`, and odd
/// forms from order 5 match the reference `f² dt² + ḡ(0, x)`.
pub fn check_base_like(
    m: &NormalFormMetric,
    f: &Expr,
    k: usize,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ClassificationReport, ClassifyError> {
    let points = sorted(points)?;
    let reference = base_reference(m, f)?;
    let sigma = m.sigma_metric();
    let xs = sigma.coord_refs();
    let f_tape = crate::expr::Tape::compile(std::slice::from_ref(f), &xs)?;
    let mut samples = Vec::with_capacity(points.len());
    for x in &points {
        let v = f_tape.eval(x)?[0];
        if v <= 0.0 {
            return Err(ClassifyError::NonPositiveWarp {
                what: "f",
                value: v,
                point: x.clone(),
            });
        }
        samples.push(v);
    }
    let scale = scales(m, &points)?;
    let orders: Vec<usize> = (2..=k.max(3)).collect();
    let ours = forms_at(m, &orders, &points)?;
    let idx = |order: usize| orders.iter().position(|&o| o == order).expect("order compiled");
    let mut residuals = Vec::new();

    for order in (2..=k).step_by(2) {
        residuals.push(Residual {
            stage: "even-vanishing",
            order,
            value: order_residual(&column(&ours, idx(order)), None, &scale),
        });
    }

    // ∇̄²f − f·III, relative to max(1, |∇̄²f|)
    let scalar = Tensor::from_entries(sigma.dim(), vec![], vec![f.clone()]);
    let hess = covariant_derivative(&sigma, &scalar, 2)?;
    let mut hessian_residual: f64 = 0.0;
    let mut iii_max: f64 = 0.0;
    for (p, x) in points.iter().enumerate() {
        let hv = eval_tensor(&hess, &xs, x)?;
        let iii = &ours[p][idx(3)];
        iii_max = iii_max.max(iii.max_abs() / scale[p]);
        let d = hv.max_diff(&iii.scale(samples[p])).expect("same shape");
        hessian_residual = hessian_residual.max(d / hv.max_abs().max(1.0));
    }
    if k >= 3 {
        residuals.push(Residual {
            stage: "hessian",
            order: 3,
            value: hessian_residual,
        });
    }

    let odd: Vec<usize> = (5..=k).step_by(2).collect();
    let mut diagnostics = Vec::new();
    if !odd.is_empty() {
        let theirs = forms_at(&reference, &odd, &points)?;
        for (o, &order) in odd.iter().enumerate() {
            residuals.push(Residual {
                stage: "odd-reference",
                order,
                value: order_residual(&column(&ours, idx(order)), Some(&column(&theirs, o)), &scale),
            });
        }
        let v = base_like_fifth_form(f, &sigma)?;
        let (mut as_given, mut negated): (f64, f64) = (0.0, 0.0);
        for (p, x) in points.iter().enumerate() {
            let vv = eval_tensor(&v, &xs, x)?;
            let ff5 = &ours[p][idx(5)];
            as_given = as_given.max(ff5.max_diff(&vv).expect("same shape") / scale[p]);
            negated = negated.max(ff5.max_diff(&vv.scale(-1.0)).expect("same shape") / scale[p]);
        }
        diagnostics.push(Diagnostic {
            name: "order-5 vs first-order operator",
            value: as_given,
            note: "FF5 - V with V = f^-1 (grad f)^c (-3 D_c III_ab + 2 D_(a III_b)c)",
        });
        diagnostics.push(Diagnostic {
            name: "order-5 vs negated first-order operator",
            value: negated,
            note: "FF5 + V; the definition route agrees with -V",
        });
    }

    let verdict = if k < 3 {
        Verdict::Inconclusive
    } else {
        Verdict::BaseLike
    };
    let mut report = finish(
        verdict,
        k,
        tol,
        residuals,
        WarpData::Base {
            f: f.to_string(),
            samples,
        },
        points,
    );
    report.diagnostics = diagnostics;
    if report.passed() && iii_max <= tol {
        report.sub_verdict = Some(Verdict::Product);
    }
    Ok(report)
}
