//! Riemannian curvature of symbolic metrics, evaluated exactly at points.

mod calculus;
mod fd;
pub mod jet;
pub mod pipeline;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::expr::{Expr, ExprError, Tape, DEFAULT_NODE_BUDGET};
use crate::tensor::{condition_number, Slot, Tensor, TensorError, TensorValue};

pub use calculus::{Calculus, Symbolic};
pub use fd::{fd_check, stencil_weights};
pub use pipeline::{Curvature, Tower};

/// Points whose metric has a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("metric is singular at the point (condition number {cond:e})")]
    Singular { cond: f64 },
    #[error("{0}")]
    Dimension(String),
    #[error("Bach tensor requested in dimension 3; pass an explicit override to compute it")]
    BachInDimensionThree,
    #[error("expression uses undeclared coordinate `{0}`")]
    UnknownCoordinate(String),
}

/// A symmetric metric whose components are expressions in named coordinates.
#[derive(Debug, Clone)]
pub struct MetricField {
    coords: Vec<String>,
    upper: Vec<Expr>,
}

impl MetricField {
    /// Build from a component function; only `i ≤ j` is queried.
    pub fn new(coords: &[&str], mut comp: impl FnMut(usize, usize) -> Expr) -> Result<Self, GeometryError> {
        let d = coords.len();
        if d < 2 {
            return Err(GeometryError::Dimension(format!(
                "metric dimension must be at least 2, got {d}"
            )));
        }
        let mut upper = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                let e = comp(i, j);
                if let Some(v) = e.variables().into_iter().find(|v| !coords.contains(&v.as_str())) {
                    return Err(GeometryError::UnknownCoordinate(v));
                }
                upper.push(e);
            }
        }
        Ok(MetricField {
            coords: coords.iter().map(|s| s.to_string()).collect(),
            upper,
        })
    }

    pub fn diagonal(coords: &[&str], diag: Vec<Expr>) -> Result<Self, GeometryError> {
        assert_eq!(coords.len(), diag.len());
        Self::new(coords, |i, j| if i == j { diag[i].clone() } else { Expr::zero() })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord_refs(&self) -> Vec<&str> {
        self.coords.iter().map(|s| s.as_str()).collect()
    }

    pub fn component(&self, i: usize, j: usize) -> &Expr {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let d = self.dim();
        &self.upper[i * d - i * (i + 1) / 2 + j]
    }

    pub fn tensor(&self) -> Tensor<Expr> {
        Tensor::from_fn(self.dim(), vec![Slot::Down, Slot::Down], |i| {
            self.component(i[0], i[1]).clone()
        })
    }

    /// Component matrix at a point.
    pub fn eval_matrix(&self, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let d = self.dim();
        let tape = Tape::compile(&self.upper, &self.coord_refs())?;
        let vals = tape.eval(point)?;
        let mut m = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                m[(i, j)] = vals[k];
                m[(j, i)] = vals[k];
                k += 1;
            }
        }
        Ok(m)
    }

    /// Replace a coordinate by an expression in every component.
    pub fn substitute(&self, var: &str, value: &Expr) -> MetricField {
        MetricField {
            coords: self.coords.clone(),
            upper: self.upper.iter().map(|e| e.substitute(var, value)).collect(),
        }
    }
}

/// Which curvature quantities a computation needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BachMode {
    /// Bach for dimension ≥ 4 only.
    Auto,
    Off,
    /// Compute Bach even in dimension 3.
    Force,
}

#[derive(Debug, Clone, Copy)]
pub struct CurvatureOptions {
    pub bach: BachMode,
    pub budget: usize,
    pub lowering_sign: f64,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        CurvatureOptions {
            bach: BachMode::Auto,
            budget: DEFAULT_NODE_BUDGET,
            lowering_sign: crate::conventions::conventions().riemann_lowering_sign,
        }
    }
}

/// The curvature quantities selectable for finite-difference validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Christoffel,
    Riemann,
    Ricci,
    Scalar,
    Schouten,
    J,
    Weyl,
    Cotton,
    Bach,
}

impl Quantity {
    pub const ALL: [Quantity; 9] = [
        Quantity::Christoffel,
        Quantity::Riemann,
        Quantity::Ricci,
        Quantity::Scalar,
        Quantity::Schouten,
        Quantity::J,
        Quantity::Weyl,
        Quantity::Cotton,
        Quantity::Bach,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Christoffel => "christoffel",
            Quantity::Riemann => "riemann",
            Quantity::Ricci => "ricci",
            Quantity::Scalar => "scalar",
            Quantity::Schouten => "schouten",
            Quantity::J => "j",
            Quantity::Weyl => "weyl",
            Quantity::Cotton => "cotton",
            Quantity::Bach => "bach",
        }
    }

    /// Highest metric derivative the quantity involves.
    pub fn derivative_order(self) -> usize {
        match self {
            Quantity::Christoffel => 1,
            Quantity::Cotton => 3,
            Quantity::Bach => 4,
            _ => 2,
        }
    }
}

/// Curvature quantities of one metric at one point.
#[derive(Debug, Clone)]
pub struct CurvatureStack {
    pub point: Vec<f64>,
    pub condition_number: f64,
    pub metric: TensorValue,
    pub metric_inv: TensorValue,
    pub christoffel: TensorValue,
    pub riemann_mixed: TensorValue,
    pub riemann: TensorValue,
    pub ricci: TensorValue,
    pub scalar: f64,
    pub schouten: TensorValue,
    pub j: f64,
    pub weyl: TensorValue,
    pub cotton: TensorValue,
    pub bach: Option<TensorValue>,
}

impl CurvatureStack {
    /// The selected quantity as a tensor (scalars have rank 0).
    pub fn quantity(&self, q: Quantity) -> Option<TensorValue> {
        let d = self.metric.dim();
        Some(match q {
            Quantity::Christoffel => self.christoffel.clone(),
            Quantity::Riemann => self.riemann.clone(),
            Quantity::Ricci => self.ricci.clone(),
            Quantity::Scalar => Tensor::from_entries(d, vec![], vec![self.scalar]),
            Quantity::Schouten => self.schouten.clone(),
            Quantity::J => Tensor::from_entries(d, vec![], vec![self.j]),
            Quantity::Weyl => self.weyl.clone(),
            Quantity::Cotton => self.cotton.clone(),
            Quantity::Bach => return self.bach.clone(),
        })
    }
}

/// Packs many symbolic tensors into one tape and unpacks evaluations.
#[derive(Default)]
pub(crate) struct Packer {
    exprs: Vec<Expr>,
    shapes: Vec<(usize, Vec<Slot>, usize)>,
}

impl Packer {
    pub fn push(&mut self, t: &Tensor<Expr>) -> usize {
        self.shapes.push((t.dim(), t.valence().to_vec(), self.exprs.len()));
        self.exprs.extend(t.entries().iter().cloned());
        self.shapes.len() - 1
    }

    pub fn push_scalar(&mut self, dim: usize, e: &Expr) -> usize {
        self.push(&Tensor::from_entries(dim, vec![], vec![e.clone()]))
    }

    pub fn compile(&self, vars: &[&str]) -> Result<Tape, ExprError> {
        Tape::compile(&self.exprs, vars)
    }

    pub fn unpack(&self, id: usize, vals: &[f64]) -> TensorValue {
        let (dim, valence, start) = &self.shapes[id];
        let len = dim.pow(valence.len() as u32);
        Tensor::from_entries(*dim, valence.clone(), vals[*start..start + len].to_vec())
    }
}

/// Symbolic curvature of a metric compiled for repeated evaluation.
pub struct CurvatureEngine {
    metric: MetricField,
    symbolic: Curvature<Expr>,
    packer: Packer,
    tape: Tape,
    ids: Vec<usize>,
}

impl CurvatureEngine {
    pub fn new(metric: &MetricField, opts: CurvatureOptions) -> Result<Self, GeometryError> {
        let d = metric.dim();
        if d < 3 {
            return Err(GeometryError::Dimension(format!(
                "curvature stack needs dimension ≥ 3 (Schouten divides by d − 2), got {d}"
            )));
        }
        let with_bach = match opts.bach {
            BachMode::Off => false,
            BachMode::Auto => d >= 4,
            BachMode::Force => true,
        };
        let mut calc = Symbolic::with_budget(metric.coords(), opts.budget);
        let sym = pipeline::curvature(&mut calc, metric.tensor(), opts.lowering_sign, with_bach)?;
        let mut packer = Packer::default();
        let mut ids = vec![
            packer.push(&sym.g),
            packer.push(&sym.g_inv),
            packer.push(&sym.gamma),
            packer.push(&sym.riemann_mixed),
            packer.push(&sym.riemann),
            packer.push(&sym.ricci),
            packer.push_scalar(d, &sym.scalar),
            packer.push(&sym.schouten),
            packer.push_scalar(d, &sym.j),
            packer.push(&sym.weyl),
            packer.push(&sym.cotton),
        ];
        if let Some(b) = &sym.bach {
            ids.push(packer.push(b));
        }
        let tape = packer.compile(&metric.coord_refs())?;
        Ok(CurvatureEngine {
            metric: metric.clone(),
            symbolic: sym,
            packer,
            tape,
            ids,
        })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn symbolic(&self) -> &Curvature<Expr> {
        &self.symbolic
    }

    pub fn eval(&self, point: &[f64]) -> Result<CurvatureStack, GeometryError> {
        let g = self.metric.eval_matrix(point)?;
        let cond = condition_number(&g);
        if !cond.is_finite() || cond > MAX_CONDITION {
            return Err(GeometryError::Singular { cond });
        }
        let vals = self.tape.eval(point)?;
        let t = |k: usize| self.packer.unpack(self.ids[k], &vals);
        Ok(CurvatureStack {
            point: point.to_vec(),
            condition_number: cond,
            metric: t(0),
            metric_inv: t(1),
            christoffel: t(2),
            riemann_mixed: t(3),
            riemann: t(4),
            ricci: t(5),
            scalar: t(6).entries()[0],
            schouten: t(7),
            j: t(8).entries()[0],
            weyl: t(9),
            cotton: t(10),
            bach: self.ids.get(11).map(|_| t(11)),
        })
    }
}

/// One-shot curvature stack at a point with default options.
pub fn curvature_stack(metric: &MetricField, point: &[f64]) -> Result<CurvatureStack, GeometryError> {
    CurvatureEngine::new(metric, CurvatureOptions::default())?.eval(point)
}

/// `∇^m T` as a symbolic field; each application prepends one down slot.
pub fn covariant_derivative(
    metric: &MetricField,
    field: &Tensor<Expr>,
    order: usize,
) -> Result<Tensor<Expr>, GeometryError> {
    covariant_derivative_with_budget(metric, field, order, DEFAULT_NODE_BUDGET)
}

pub fn covariant_derivative_with_budget(
    metric: &MetricField,
    field: &Tensor<Expr>,
    order: usize,
    budget: usize,
) -> Result<Tensor<Expr>, GeometryError> {
    if field.dim() != metric.dim() {
        return Err(TensorError::Dimension(field.dim(), metric.dim()).into());
    }
    let mut calc = Symbolic::with_budget(metric.coords(), budget);
    let g = metric.tensor();
    let g_inv = pipeline::inverse(&calc, &g)?;
    let gamma = pipeline::christoffel(&mut calc, &g, &g_inv)?;
    let mut t = field.clone();
    for _ in 0..order {
        t = pipeline::nabla(&mut calc, &gamma, &t)?;
    }
    Ok(t)
}

/// Evaluate a symbolic tensor at a point.
pub fn eval_tensor(t: &Tensor<Expr>, vars: &[&str], point: &[f64]) -> Result<TensorValue, ExprError> {
    let tape = Tape::compile(t.entries(), vars)?;
    let vals = tape.eval(point)?;
    Ok(Tensor::from_entries(t.dim(), t.valence().to_vec(), vals))
}

#[cfg(test)]
mod tests;
