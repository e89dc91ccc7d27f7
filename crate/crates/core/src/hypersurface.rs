//! Hypersurfaces `Σ = {t = 0}` in charts `g = N² dt² + ḡ(t, x)` and their
//! fundamental forms.
//!
//! A strict normal form has lapse `N = 1`. A generalized chart carries an
//! arbitrary positive lapse; the unit conormal is then `n = N^{-1} ∂_t` and
//! every form is obtained by contracting with it pointwise, so no extension of
//! `n` off `Σ` is ever needed.
//!
//! The k-th fundamental form for k ≥ 3 is
//! `FF^k_ab = n^{a_1}…n^{a_{k−3}} n^c n^d ∇_{a_1}…∇_{a_{k−3}} R_cabd` restricted to
//! tangential slots; the second form is `II_ab = (2N)^{-1} ∂_t ḡ_ab`.

use rayon::prelude::*;

use crate::expr::{Differentiator, Expr, ExprError, Tape, DEFAULT_NODE_BUDGET};
use crate::geometry::{pipeline, GeometryError, MetricField, Symbolic, Tower};
use crate::tensor::{symmetrize_tf, Slot, Tensor, TensorError, TensorValue};

pub const DEFAULT_K_MAX: usize = 7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HypersurfaceError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("fundamental form of order {k} requested but the maximum order is {k_max}")]
    OrderTooLarge { k: usize, k_max: usize },
    #[error("fundamental forms start at order 2, got {0}")]
    OrderTooSmall(usize),
    #[error("operation needs a strict normal form (unit lapse)")]
    NotNormalForm,
    #[error("{what} must be positive but is {value} at {point:?}")]
    NonPositive { what: String, value: f64, point: Vec<f64> },
    #[error("induced metric is not positive definite at {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("ḡ must not depend on `{0}` in a base-like chart")]
    TransverseDependence(String),
}

impl From<ExprError> for HypersurfaceError {
    fn from(e: ExprError) -> Self {
        HypersurfaceError::Geometry(e.into())
    }
}

impl From<TensorError> for HypersurfaceError {
    fn from(e: TensorError) -> Self {
        HypersurfaceError::Geometry(e.into())
    }
}

/// `g = N² dt² + ḡ_ij(t, x) dx^i dx^j`, with `N = 1` unless a lapse is set.
#[derive(Debug, Clone)]
pub struct NormalFormMetric {
    t: String,
    xs: Vec<String>,
    gbar: Vec<Expr>,
    lapse: Option<Expr>,
    fiber_warp: Option<Expr>,
    base_warp: Option<Expr>,
}

impl NormalFormMetric {
    /// Strict normal form from the tangential block; only `i ≤ j` is queried.
    pub fn new(t: &str, xs: &[&str], mut gbar: impl FnMut(usize, usize) -> Expr) -> Result<Self, HypersurfaceError> {
        let n = xs.len();
        if n + 1 < 3 {
            return Err(
                GeometryError::Dimension(format!("ambient dimension must be at least 3, got {}", n + 1)).into(),
            );
        }
        let mut coords = vec![t];
        coords.extend_from_slice(xs);
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let e = gbar(i, j);
                check_vars(&e, &coords)?;
                upper.push(e);
            }
        }
        Ok(NormalFormMetric {
            t: t.to_string(),
            xs: xs.iter().map(|s| s.to_string()).collect(),
            gbar: upper,
            lapse: None,
            fiber_warp: None,
            base_warp: None,
        })
    }

    /// Set a lapse `N`, turning the record into a generalized chart.
    pub fn with_lapse(mut self, lapse: Expr) -> Result<Self, HypersurfaceError> {
        let coords = self.coord_refs();
        check_vars(&lapse, &coords)?;
        self.lapse = if lapse.is_one() { None } else { Some(lapse) };
        Ok(self)
    }

    pub fn with_fiber_warp(mut self, h: Expr) -> Result<Self, HypersurfaceError> {
        check_vars(&h, &[self.t.as_str()])?;
        self.fiber_warp = Some(h);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.xs.len() + 1
    }

    pub fn transverse(&self) -> &str {
        &self.t
    }

    pub fn sigma_coords(&self) -> &[String] {
        &self.xs
    }

    pub fn coord_refs(&self) -> Vec<&str> {
        std::iter::once(self.t.as_str())
            .chain(self.xs.iter().map(|s| s.as_str()))
            .collect()
    }

    pub fn is_normal_form(&self) -> bool {
        self.lapse.is_none()
    }

    pub fn lapse(&self) -> Expr {
        self.lapse.clone().unwrap_or_else(Expr::one)
    }

    pub fn fiber_warp(&self) -> Option<&Expr> {
        self.fiber_warp.as_ref()
    }

    pub fn base_warp(&self) -> Option<&Expr> {
        self.base_warp.as_ref()
    }

    pub fn gbar(&self, i: usize, j: usize) -> &Expr {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.xs.len();
        &self.gbar[i * n - i * (i + 1) / 2 + j]
    }

    /// The ambient metric on `(t, x)`.
    pub fn full_metric(&self) -> MetricField {
        let lapse = self.lapse();
        MetricField::new(&self.coord_refs(), |i, j| match (i, j) {
            (0, 0) => Expr::mul(&lapse, &lapse),
            (0, _) => Expr::zero(),
            _ => self.gbar(i - 1, j - 1).clone(),
        })
        .expect("coordinates already validated")
    }

    /// The induced metric `ḡ(0, x)` as a metric on `Σ`.
    pub fn sigma_metric(&self) -> MetricField {
        let xs: Vec<&str> = self.xs.iter().map(|s| s.as_str()).collect();
        let zero = Expr::zero();
        MetricField::new(&xs, |i, j| self.gbar(i, j).substitute(&self.t, &zero)).expect("t was substituted")
    }

    /// Same chart with every component passed through `f`.
    pub fn map_components(&self, mut f: impl FnMut(&Expr) -> Expr) -> NormalFormMetric {
        NormalFormMetric {
            t: self.t.clone(),
            xs: self.xs.clone(),
            gbar: self.gbar.iter().map(&mut f).collect(),
            lapse: self.lapse.as_ref().map(&mut f),
            fiber_warp: self.fiber_warp.clone(),
            base_warp: self.base_warp.clone(),
        }
    }

    /// Check lapse positivity and definiteness of `ḡ(0, x)` at a point of `Σ`.
    pub fn check_sample(&self, x: &[f64]) -> Result<(), HypersurfaceError> {
        let point = self.ambient_point(x);
        let lapse = self.lapse();
        let n = crate::expr::evaluate(&lapse, &bindings(&self.coord_refs(), &point))?;
        if n <= 0.0 {
            let what = if self.base_warp.is_some() {
                "base warp f"
            } else {
                "lapse"
            };
            return Err(HypersurfaceError::NonPositive {
                what: what.into(),
                value: n,
                point: x.to_vec(),
            });
        }
        let m = self.sigma_metric().eval_matrix(x)?;
        if m.cholesky().is_none() {
            return Err(HypersurfaceError::NotPositiveDefinite(x.to_vec()));
        }
        Ok(())
    }

    pub fn ambient_point(&self, x: &[f64]) -> Vec<f64> {
        std::iter::once(0.0).chain(x.iter().copied()).collect()
    }
}

fn check_vars(e: &Expr, coords: &[&str]) -> Result<(), HypersurfaceError> {
    match e.variables().into_iter().find(|v| !coords.contains(&v.as_str())) {
        Some(v) => Err(GeometryError::UnknownCoordinate(v).into()),
        None => Ok(()),
    }
}

fn bindings<'a>(names: &[&'a str], point: &[f64]) -> std::collections::HashMap<&'a str, f64> {
    names.iter().copied().zip(point.iter().copied()).collect()
}

/// Generalized chart `f(x)² dt² + ḡ₀(x)` for a base-like warped product.
pub fn base_like_normal_form(t: &str, f: &Expr, gbar0: &MetricField) -> Result<NormalFormMetric, HypersurfaceError> {
    let xs = gbar0.coord_refs();
    if xs.contains(&t) {
        return Err(HypersurfaceError::TransverseDependence(t.to_string()));
    }
    check_vars(f, &xs)?;
    let mut m = NormalFormMetric::new(t, &xs, |i, j| gbar0.component(i, j).clone())?.with_lapse(f.clone())?;
    m.base_warp = Some(f.clone());
    Ok(m)
}

#[derive(Debug, Clone, Copy)]
pub struct FormOptions {
    pub k_max: usize,
    pub budget: usize,
    pub lowering_sign: f64,
    pub ff_sign: f64,
}

impl FormOptions {
    /// Options with both convention signs fixed to +1.
    pub fn unsigned() -> Self {
        FormOptions {
            k_max: DEFAULT_K_MAX,
            budget: DEFAULT_NODE_BUDGET,
            lowering_sign: 1.0,
            ff_sign: 1.0,
        }
    }
}

impl Default for FormOptions {
    fn default() -> Self {
        let c = crate::conventions::conventions();
        FormOptions {
            lowering_sign: c.riemann_lowering_sign,
            ff_sign: c.ff_sign,
            ..FormOptions::unsigned()
        }
    }
}

/// Symbolic fundamental forms of one chart, built lazily order by order.
pub struct FormEngine {
    metric: NormalFormMetric,
    opts: FormOptions,
    calc: Symbolic,
    tower: Tower<Expr>,
    mixed: Tensor<Expr>,
    fields: Vec<Option<Tensor<Expr>>>,
}

impl FormEngine {
    pub fn new(metric: &NormalFormMetric, opts: FormOptions) -> Result<Self, HypersurfaceError> {
        let full = metric.full_metric();
        let mut calc = Symbolic::with_budget(full.coords(), opts.budget);
        let g = full.tensor();
        let g_inv = pipeline::inverse(&calc, &g).map_err(HypersurfaceError::from)?;
        let gamma = pipeline::christoffel(&mut calc, &g, &g_inv)?;
        let mixed = pipeline::riemann_mixed(&mut calc, &gamma)?;
        let riemann = pipeline::riemann_lowered(&calc, &g, &mixed, opts.lowering_sign);
        Ok(FormEngine {
            metric: metric.clone(),
            opts,
            calc,
            tower: Tower::new(gamma, riemann),
            mixed,
            fields: Vec::new(),
        })
    }

    pub fn metric(&self) -> &NormalFormMetric {
        &self.metric
    }

    pub fn options(&self) -> FormOptions {
        self.opts
    }

    fn check_order(&self, k: usize) -> Result<(), HypersurfaceError> {
        if k < 2 {
            return Err(HypersurfaceError::OrderTooSmall(k));
        }
        if k > self.opts.k_max {
            return Err(HypersurfaceError::OrderTooLarge {
                k,
                k_max: self.opts.k_max,
            });
        }
        Ok(())
    }

    /// `FF^k` as a symbolic field on `(t, x)`; restrict to `t = 0` to read it.
    pub fn field(&mut self, k: usize) -> Result<Tensor<Expr>, HypersurfaceError> {
        self.check_order(k)?;
        if let Some(Some(f)) = self.fields.get(k) {
            return Ok(f.clone());
        }
        let n = self.metric.xs.len();
        let lapse = self.metric.lapse();
        let f = if k == 2 {
            // II = (2N)^{-1} ∂_t ḡ
            let mut dt = Differentiator::with_budget(&self.metric.t, self.opts.budget);
            let half_inv = Expr::div(&Expr::constant(0.5), &lapse);
            Tensor::try_from_fn(n, vec![Slot::Down, Slot::Down], |i| {
                let d = dt.diff(self.metric.gbar(i[0], i[1]))?;
                Ok::<_, HypersurfaceError>(Expr::mul(&half_inv, &d))
            })?
        } else {
            let m = k - 3;
            let weight = Expr::div(&Expr::constant(self.opts.ff_sign), &Expr::powi(&lapse, (k - 1) as i32));
            Tensor::try_from_fn(n, vec![Slot::Down, Slot::Down], |i| {
                let mut idx = vec![0; m];
                idx.extend_from_slice(&[0, i[0] + 1, i[1] + 1, 0]);
                let c = self.tower.comp(&mut self.calc, m, &idx)?;
                Ok::<_, HypersurfaceError>(Expr::mul(&weight, &c))
            })?
        };
        if self.fields.len() <= k {
            self.fields.resize(k + 1, None);
        }
        self.fields[k] = Some(f.clone());
        Ok(f)
    }

    /// `ι*g(R(n,·)n,·)` from the mixed Riemann tensor, independent of the
    /// lowering step: `n^p n^d R_pa^c_d g_cb`.
    pub fn third_form_from_operator(&self) -> Tensor<Expr> {
        let n = self.metric.xs.len();
        let lapse = self.metric.lapse();
        let w = Expr::div(&Expr::constant(self.opts.ff_sign), &Expr::powi(&lapse, 2));
        Tensor::from_fn(n, vec![Slot::Down, Slot::Down], |i| {
            let (a, b) = (i[0] + 1, i[1] + 1);
            let terms = (1..=n).map(|c| Expr::mul(self.mixed.get(&[0, a, c, 0]), self.metric.gbar(c - 1, b - 1)));
            Expr::mul(&w, &Expr::sum(terms))
        })
    }

    /// Compile the listed orders for evaluation on `Σ`.
    pub fn compile(&mut self, orders: &[usize]) -> Result<FormTape, HypersurfaceError> {
        let mut fields = Vec::with_capacity(orders.len());
        for &k in orders {
            fields.push(self.field(k)?);
        }
        FormTape::new(&self.metric, orders, &fields)
    }

    /// `FF^k` at a point of `Σ`.
    pub fn evaluate(&mut self, k: usize, x: &[f64]) -> Result<TensorValue, HypersurfaceError> {
        let tape = self.compile(&[k])?;
        Ok(tape.eval(x)?.remove(0))
    }
}

/// Compiled form fields, evaluated at `t = 0`.
pub struct FormTape {
    orders: Vec<usize>,
    n: usize,
    tape: Tape,
}

impl FormTape {
    fn new(metric: &NormalFormMetric, orders: &[usize], fields: &[Tensor<Expr>]) -> Result<Self, HypersurfaceError> {
        let exprs: Vec<Expr> = fields.iter().flat_map(|f| f.entries().iter().cloned()).collect();
        let tape = Tape::compile(&exprs, &metric.coord_refs())?;
        Ok(FormTape {
            orders: orders.to_vec(),
            n: metric.xs.len(),
            tape,
        })
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    /// One tensor per compiled order at the point `x` of `Σ`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<TensorValue>, HypersurfaceError> {
        let point: Vec<f64> = std::iter::once(0.0).chain(x.iter().copied()).collect();
        let vals = self.tape.eval(&point)?;
        let sz = self.n * self.n;
        Ok(vals
            .chunks(sz)
            .map(|c| Tensor::from_entries(self.n, vec![Slot::Down, Slot::Down], c.to_vec()))
            .collect())
    }
}

/// How a form in a [`FundamentalFormSet`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Definition,
    Lie,
    Reference,
}

/// Fundamental forms of orders `2..=K` at a list of sample points.
#[derive(Debug, Clone)]
pub struct FundamentalFormSet {
    pub points: Vec<Vec<f64>>,
    pub orders: Vec<usize>,
    /// `values[o][p]` is the form of order `orders[o]` at `points[p]`.
    pub values: Vec<Vec<TensorValue>>,
    pub provenance: Vec<Provenance>,
}

impl FundamentalFormSet {
    pub fn order(&self, k: usize) -> Option<&[TensorValue]> {
        self.orders
            .iter()
            .position(|&o| o == k)
            .map(|i| self.values[i].as_slice())
    }
}

/// Evaluate forms of orders `2..=k_max` by the definition route at every
/// point, in parallel over points.
pub fn fundamental_forms(
    engine: &mut FormEngine,
    k_max: usize,
    points: &[Vec<f64>],
) -> Result<FundamentalFormSet, HypersurfaceError> {
    for x in points {
        engine.metric.check_sample(x)?;
    }
    let orders: Vec<usize> = (2..=k_max).collect();
    let tape = engine.compile(&orders)?;
    let per_point: Vec<Vec<TensorValue>> = points.par_iter().map(|x| tape.eval(x)).collect::<Result<_, _>>()?;
    let mut values = vec![Vec::with_capacity(points.len()); orders.len()];
    for forms in per_point {
        for (o, f) in forms.into_iter().enumerate() {
            values[o].push(f);
        }
    }
    Ok(FundamentalFormSet {
        points: points.to_vec(),
        provenance: vec![Provenance::Definition; orders.len()],
        orders,
        values,
    })
}

/// `ι*g = ḡ(0, x)`.
pub fn induced_metric(m: &NormalFormMetric, x: &[f64]) -> Result<TensorValue, HypersurfaceError> {
    let mat = m.sigma_metric().eval_matrix(x)?;
    Ok(TensorValue::from_matrix(&mat, [Slot::Down, Slot::Down]))
}

/// Second fundamental form and mean curvature `H = ḡ^ab II_ab / (d − 1)`.
pub fn second_ff(m: &NormalFormMetric, x: &[f64]) -> Result<(TensorValue, f64), HypersurfaceError> {
    let mut engine = FormEngine::new(m, FormOptions::default())?;
    let ii = engine.evaluate(2, x)?;
    let h = mean_curvature(&ii, &induced_metric(m, x)?)?;
    Ok((ii, h))
}

pub fn mean_curvature(ii: &TensorValue, gbar: &TensorValue) -> Result<f64, HypersurfaceError> {
    let gi = crate::tensor::invert(gbar)?;
    let tr = ii.metric_trace(0, 1, &gi)?.entries()[0];
    Ok(tr / ii.dim() as f64)
}

/// Trace-free part of a tangential form with respect to `ḡ`.
pub fn trace_free(form: &TensorValue, gbar: &TensorValue) -> Result<TensorValue, HypersurfaceError> {
    Ok(symmetrize_tf(form, &crate::tensor::invert(gbar)?)?)
}

/// `FF^k` at a point by the definition route.
pub fn fundamental_form(m: &NormalFormMetric, k: usize, x: &[f64]) -> Result<TensorValue, HypersurfaceError> {
    m.check_sample(x)?;
    FormEngine::new(m, FormOptions::default())?.evaluate(k, x)
}

/// `ι* L_n^j g = ∂_t^j ḡ(0, x)`; strict normal form only.
pub fn lie_pullback(m: &NormalFormMetric, j: usize, x: &[f64]) -> Result<TensorValue, HypersurfaceError> {
    if !m.is_normal_form() {
        return Err(HypersurfaceError::NotNormalForm);
    }
    let n = m.xs.len();
    let mut dt = Differentiator::new(&m.t);
    let field = Tensor::try_from_fn(n, vec![Slot::Down, Slot::Down], |i| {
        let mut e = m.gbar(i[0], i[1]).clone();
        for _ in 0..j {
            e = dt.diff(&e)?;
        }
        Ok::<_, ExprError>(e)
    })?;
    let point = m.ambient_point(x);
    Ok(crate::geometry::eval_tensor(&field, &m.coord_refs(), &point)?)
}

/// Fifth form predicted for a base-like chart by the first-order operator
/// `V̄_ab = f^{-1} (∇̄^c f)(−3 ∇̄_c III_ab + 2 ∇̄_(a III_b)c)` with
/// `III = f^{-1} ∇̄² f`. Symbolic in the coordinates of `Σ`.
pub fn base_like_fifth_form(f: &Expr, gbar0: &MetricField) -> Result<Tensor<Expr>, HypersurfaceError> {
    let n = gbar0.dim();
    let scalar = Tensor::from_entries(n, vec![], vec![f.clone()]);
    let df = crate::geometry::covariant_derivative(gbar0, &scalar, 1)?;
    let hess = crate::geometry::covariant_derivative(gbar0, &scalar, 2)?;
    let iii = hess.map(|e| Expr::div(e, f));
    let diii = crate::geometry::covariant_derivative(gbar0, &iii, 1)?;
    let calc = Symbolic::new(gbar0.coords());
    let g_inv = pipeline::inverse(&calc, &gbar0.tensor())?;
    let grad_up: Vec<Expr> = (0..n)
        .map(|c| Expr::sum((0..n).map(|d| Expr::mul(g_inv.get(&[c, d]), df.get(&[d])))))
        .collect();
    Ok(Tensor::from_fn(n, vec![Slot::Down, Slot::Down], |i| {
        let (a, b) = (i[0], i[1]);
        let terms = (0..n).map(|c| {
            let inner = Expr::add(
                &Expr::mul(&Expr::constant(-3.0), diii.get(&[c, a, b])),
                &Expr::add(diii.get(&[a, b, c]), diii.get(&[b, a, c])),
            );
            Expr::mul(&grad_up[c], &inner)
        });
        Expr::div(&Expr::sum(terms), f)
    }))
}

/// `III = f^{-1} ∇̄² f` for a base warp `f` over `ḡ₀`.
pub fn base_like_third_form(f: &Expr, gbar0: &MetricField) -> Result<Tensor<Expr>, HypersurfaceError> {
    let scalar = Tensor::from_entries(gbar0.dim(), vec![], vec![f.clone()]);
    let hess = crate::geometry::covariant_derivative(gbar0, &scalar, 2)?;
    Ok(hess.map(|e| Expr::div(e, f)))
}
