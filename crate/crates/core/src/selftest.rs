//! Built-in acceptance checks. Each criterion is a list of clauses, each a
//! measured value against a bound; a criterion passes when every clause does.

use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use crate::classify::{self, check_base_like, check_fiber_like, fiber_reference, ClassifyError, Grid, Verdict};
use crate::conformal::{
    intrinsic_traceless_schouten, jacobi_operator, rescale, second_conformal_ff, third_conformal_ff, ConformalError,
};
use crate::expr::{parse, Expr, ExprError, Tape};
use crate::geometry::{curvature_stack, fd_check, GeometryError, MetricField, Quantity};
use crate::hypersurface::{
    base_like_fifth_form, base_like_normal_form, induced_metric, FormEngine, FormOptions, HypersurfaceError,
    NormalFormMetric,
};
use crate::tensor::TensorError;
use crate::yamabe::{
    ambient_j, closed_form_sigma, constant_rational, default_truncation, pe_residual, solve_series, SigmaOperators,
    YamabeError,
};

#[derive(Debug, thiserror::Error)]
pub enum SelftestError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Hypersurface(#[from] HypersurfaceError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Yamabe(#[from] YamabeError),
}

type Res<T> = Result<T, SelftestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Clause {
    pub label: String,
    pub value: f64,
    pub bound: Bound,
    pub limit: f64,
}

impl Clause {
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.value <= self.limit,
            Bound::AtLeast => self.value >= self.limit,
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        write!(f, "{}: {:.3e} {op} {:.0e}", self.label, self.value, self.limit)?;
        if !self.passed() {
            write!(f, " FAILED")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub clauses: Vec<Clause>,
    /// Set when the criterion could not be run to completion.
    pub error: Option<String>,
}

impl CriterionResult {
    /// The failing clauses, or the error, or a count of passing clauses.
    pub fn summary(&self) -> String {
        if let Some(e) = &self.error {
            return format!("error: {e}");
        }
        let failed: Vec<String> = self
            .clauses
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.to_string())
            .collect();
        if failed.is_empty() {
            let worst = self
                .clauses
                .iter()
                .filter(|c| c.bound == Bound::AtMost && c.limit > 0.0)
                .map(|c| c.value / c.limit)
                .fold(0.0, f64::max);
            format!("{} clauses, worst at {:.1e} of its bound", self.clauses.len(), worst)
        } else {
            failed.join("; ")
        }
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}: {}", self.id, self.name, self.summary())
    }
}

#[derive(Default)]
struct Clauses(Vec<Clause>);

impl Clauses {
    fn at_most(&mut self, label: impl Into<String>, value: f64, limit: f64) {
        // NaN must fail
        let value = if value.is_nan() { f64::INFINITY } else { value };
        self.0.push(Clause {
            label: label.into(),
            value,
            bound: Bound::AtMost,
            limit,
        });
    }

    fn at_least(&mut self, label: impl Into<String>, value: f64, limit: f64) {
        let value = if value.is_nan() { f64::NEG_INFINITY } else { value };
        self.0.push(Clause {
            label: label.into(),
            value,
            bound: Bound::AtLeast,
            limit,
        });
    }

    fn holds(&mut self, label: impl Into<String>, ok: bool) {
        self.at_most(label, if ok { 0.0 } else { 1.0 }, 0.0);
    }
}

pub type CriterionFn = fn() -> Res<Vec<Clause>>;

/// Every criterion, in order.
pub const CRITERIA: [(&str, CriterionFn); 11] = [
    ("curvature of S³ and finite-difference agreement", curvature),
    ("products have no higher fundamental forms", products),
    ("fiber-like warp e^(2t)", fiber_like),
    ("base-like warps e^(x²) and x", base_like),
    ("conformal weights under Ω = e^x", weights),
    ("third conformal form of products", product_third_form),
    ("Yamabe series for constant curvature fibers", yamabe_constant),
    ("Willmore obstruction and odd dimensions", yamabe_general),
    ("Poincaré-Einstein residual", poincare_einstein),
    ("Jacobi operator on products", jacobi),
    ("transverse-order probe", transverse_probe),
];

pub fn run_one(id: usize) -> Option<CriterionResult> {
    let (name, f) = *CRITERIA.get(id.checked_sub(1)?)?;
    Some(match f() {
        Ok(clauses) => CriterionResult {
            id,
            name,
            passed: !clauses.is_empty() && clauses.iter().all(Clause::passed),
            clauses,
            error: None,
        },
        Err(e) => CriterionResult {
            id,
            name,
            passed: false,
            clauses: Vec::new(),
            error: Some(e.to_string()),
        },
    })
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=CRITERIA.len()).filter_map(run_one).collect()
}

fn e(s: &str) -> Expr {
    parse(s).expect("built-in expression")
}

fn diag_nf(xs: &[&str], entries: &[&str]) -> Res<NormalFormMetric> {
    Ok(NormalFormMetric::new("t", xs, |i, j| {
        if i == j {
            e(entries[i])
        } else {
            Expr::zero()
        }
    })?)
}

fn sphere_entries(names: &[&str]) -> Vec<Expr> {
    let mut acc = String::from("1");
    names
        .iter()
        .map(|n| {
            let out = e(&acc);
            acc = format!("{acc}*sin({n})^2");
            out
        })
        .collect()
}

fn sphere(names: &[&str]) -> Res<MetricField> {
    Ok(MetricField::diagonal(names, sphere_entries(names))?)
}

const S3: [&str; 3] = ["chi", "theta", "phi"];
const S2S1: [&str; 3] = ["th", "ph", "w"];

fn cylinder_s3() -> Res<NormalFormMetric> {
    diag_nf(&S3, &["1", "sin(chi)^2", "sin(chi)^2*sin(theta)^2"])
}

fn cylinder_s2s1() -> Res<NormalFormMetric> {
    diag_nf(&S2S1, &["1", "sin(th)^2", "1"])
}

fn generic_nf() -> Res<NormalFormMetric> {
    Ok(NormalFormMetric::new("t", &["x", "y", "z"], |i, j| match (i, j) {
        (0, 0) => e("exp(t*x) + 0.1*t^2"),
        (0, 1) => e("0.2*t*y"),
        (1, 1) => e("1 + sin(t)*z"),
        (1, 2) => e("0.1*t^2*x"),
        (2, 2) => e("cosh(t) + 0.1*x*t"),
        _ => Expr::zero(),
    })?)
}

/// `(1 + 0.1 sin x0)² δ` on ℝⁿ.
fn conformally_flat(n: usize) -> Res<MetricField> {
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(MetricField::diagonal(&refs, vec![e("(1 + 0.1*sin(x0))^2"); n])?)
}

fn sample_points(n: usize) -> Vec<Vec<f64>> {
    let seeds = [0.37, 0.81, 1.13, 0.52, 1.29, 0.66, 0.94];
    (0..5)
        .map(|p| {
            (0..n)
                .map(|i| seeds[(p + 2 * i) % seeds.len()] + 0.05 * p as f64)
                .collect()
        })
        .collect()
}

fn eval(e: &Expr, vars: &[&str], x: &[f64]) -> Res<f64> {
    Ok(Tape::compile(std::slice::from_ref(e), vars)?.eval(x)?[0])
}

fn rational_clause(out: &mut Clauses, label: &str, e: &Expr, g: &MetricField, want: Ratio<i64>) -> Res<()> {
    let got = constant_rational(e, &g.coord_refs(), &sample_points(g.dim()))?;
    let shown = got.map_or_else(|| "not rational".to_string(), |r| r.to_string());
    out.holds(format!("{label} = {shown}, expected {want}"), got == Some(want));
    Ok(())
}

/// Unit S³ has Sc = 6 and J = 3/2; every curvature quantity agrees with an
/// independent finite-difference evaluation.
fn curvature() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let s3 = sphere(&S3)?;
    let p = [0.7, 1.1, 0.4];
    let st = curvature_stack(&s3, &p)?;
    out.at_most("S³ scalar curvature − 6", (st.scalar - 6.0).abs(), 1e-9);
    out.at_most("S³ J − 3/2", (st.j - 1.5).abs(), 1e-9);

    let generic4 = MetricField::new(&["t", "x", "y", "z"], |i, j| match (i, j) {
        (0, 0) => Expr::one(),
        (1, 1) => e("exp(t*x) + 0.1*t^2"),
        (1, 2) => e("0.2*t*y"),
        (2, 2) => e("1 + sin(t)*z"),
        (2, 3) => e("0.1*t^2*x"),
        (3, 3) => e("cosh(t) + 0.1*x*t"),
        _ => Expr::zero(),
    })?;
    let s2s1 = MetricField::diagonal(&["a", "b", "c", "d"], vec![e("1"), e("1"), e("sin(b)^2"), e("1")])?;
    let cases: [(&str, MetricField, Vec<f64>); 3] = [
        ("S³", s3, p.to_vec()),
        ("generic 4-metric", generic4, vec![0.3, 0.6, -0.2, 0.5]),
        ("ℝ×S²×S¹", s2s1, vec![0.1, 0.9, 0.4, 0.2]),
    ];
    for (name, g, x) in &cases {
        for q in Quantity::ALL {
            if q == Quantity::Bach && g.dim() < 4 {
                continue;
            }
            let dev = fd_check(g, q, x, 1e-4)?;
            out.at_most(format!("{name} {} finite-difference deviation", q.name()), dev, 1e-6);
        }
    }
    Ok(out.0)
}

/// Forms of order 2 to 7 vanish for ℝ × S³ and ℝ × (S² × S¹).
fn products() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let points = Grid::default_for(3).points();
    for (name, m) in [("ℝ×S³", cylinder_s3()?), ("ℝ×(S²×S¹)", cylinder_s2s1()?)] {
        let mut engine = FormEngine::new(&m, FormOptions::default())?;
        let tape = engine.compile(&[2, 3, 4, 5, 6, 7])?;
        let mut worst = [0.0f64; 6];
        for x in &points {
            for (w, v) in worst.iter_mut().zip(tape.eval(x)?) {
                *w = w.max(v.max_abs());
            }
        }
        for (k, w) in worst.iter().enumerate() {
            out.at_most(format!("{name} max |FF{}|", k + 2), *w, 1e-10);
        }
    }
    Ok(out.0)
}

/// `h = e^(2t)`: II = III = ḡ, the classifier accepts, and the synthesized
/// reference classifies as fiber-like against itself.
fn fiber_like() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let h = e("exp(2*t)");
    let points = Grid::default_for(3).points();
    let flat = diag_nf(&["x", "y", "z"], &["exp(2*t)"; 3])?;
    let s3 = NormalFormMetric::new("t", &S3, |i, j| {
        if i == j {
            Expr::mul(&h, &sphere_entries(&S3)[i])
        } else {
            Expr::zero()
        }
    })?;
    for (name, m) in [("flat", flat), ("S³", s3)] {
        let mut engine = FormEngine::new(&m, FormOptions::default())?;
        let (mut d2, mut d3) = (0.0f64, 0.0f64);
        for x in &points {
            let g = induced_metric(&m, x)?;
            d2 = d2.max(engine.evaluate(2, x)?.max_diff(&g)?);
            d3 = d3.max(engine.evaluate(3, x)?.max_diff(&g)?);
        }
        out.at_most(format!("{name} fiber |FF2 − ḡ|"), d2, 1e-9);
        out.at_most(format!("{name} fiber |FF3 − ḡ|"), d3, 1e-9);
        let report = check_fiber_like(&m, &h, 7, &points, classify::DEFAULT_TOLERANCE)?;
        out.holds(
            format!("{name} fiber classifies as {}", report.verdict),
            report.verdict == Verdict::FiberLike,
        );
        let reference = fiber_reference(&m, &h)?;
        let again = check_fiber_like(&reference, &h, 7, &points, classify::DEFAULT_TOLERANCE)?;
        out.holds(
            format!("{name} reference classifies as {} against itself", again.verdict),
            again.verdict == Verdict::FiberLike,
        );
    }
    Ok(out.0)
}

/// `f = e^(x²)` over the flat plane: even forms vanish, III_xx = 2 + 4x², and
/// the order-5 form is compared with the first-order operator, whose xx entry
/// is −16x². `f = x` gives flat space.
fn base_like() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let plane = MetricField::diagonal(&["x", "y"], vec![Expr::one(), Expr::one()])?;
    let f = e("exp(x^2)");
    let m = base_like_normal_form("t", &f, &plane)?;
    let mut engine = FormEngine::new(&m, FormOptions::default())?;
    let tape = engine.compile(&[3, 4, 5, 6])?;
    let operator = base_like_fifth_form(&f, &plane)?;
    let op_tape = Tape::compile(operator.entries(), &["x", "y"])?;
    let (mut even, mut iii, mut fifth, mut op) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for x in [-0.8, -0.3, 0.0, 0.4, 0.9] {
        let p = [x, 0.25];
        let forms = tape.eval(&p)?;
        even = even.max(forms[1].max_abs()).max(forms[3].max_abs());
        let mut want = crate::tensor::TensorValue::zeros(2, forms[0].valence().to_vec());
        want.set(&[0, 0], 2.0 + 4.0 * x * x);
        iii = iii.max(forms[0].max_diff(&want)?);
        let v = op_tape.eval(&p)?;
        op = op.max((v[0] + 16.0 * x * x).abs());
        fifth = fifth.max((forms[2].get(&[0, 0]) - v[0]).abs());
    }
    out.at_most("e^(x²) max |FF4|, |FF6|", even, 1e-9);
    out.at_most("e^(x²) |III − (2 + 4x²) dx²|", iii, 1e-9);
    out.at_most("e^(x²) first-order operator xx entry + 16x²", op, 1e-8);
    out.at_most("e^(x²) |FF5_xx − operator_xx|", fifth, 1e-8);

    let lin = base_like_normal_form("t", &e("x"), &plane)?;
    let mut engine = FormEngine::new(&lin, FormOptions::default())?;
    let tape = engine.compile(&[2, 3, 4, 5, 6, 7])?;
    let mut worst = 0.0f64;
    for p in Grid::default_for(2).points() {
        for v in tape.eval(&p)? {
            worst = worst.max(v.max_abs());
        }
    }
    out.at_most("f = x max |FF2..FF7|", worst, 1e-10);
    let report = check_base_like(
        &lin,
        &e("x"),
        7,
        &Grid::default_for(2).points(),
        classify::DEFAULT_TOLERANCE,
    )?;
    out.holds(
        format!("f = x classifies as {} / {:?}", report.verdict, report.sub_verdict),
        report.verdict == Verdict::BaseLike && report.sub_verdict == Some(Verdict::Product),
    );
    Ok(out.0)
}

/// Under Ω = e^x the trace-free second form has weight 1 and the trace-free
/// third form weight 0.
fn weights() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let m = generic_nf()?;
    let points = [[0.7, 1.1, 0.4], [-0.3, 0.5, 0.9], [0.2, -0.6, 0.3]];
    let samples: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let r = rescale(&m, &e("exp(x)"), &samples)?;
    let (mut d2, mut d3, mut size) = (0.0f64, 0.0f64, f64::INFINITY);
    for x in &points {
        let om = x[0].exp();
        let (a, b) = (second_conformal_ff(&m, x)?, second_conformal_ff(&r, x)?);
        size = size.min(a.tensor.max_abs());
        d2 = d2.max(b.tensor.max_diff(&a.tensor.scale(om))?);
        let (a, b) = (third_conformal_ff(&m, x)?, third_conformal_ff(&r, x)?);
        size = size.min(a.tensor.max_abs());
        d3 = d3.max(b.tensor.max_diff(&a.tensor)?);
    }
    out.at_least("smallest form entry scale (non-degenerate test)", size, 1e-3);
    out.at_most("|II̊(Ω²g) − Ω II̊(g)|", d2, 1e-8);
    out.at_most("|III̊(Ω²g) − III̊(g)|", d3, 1e-8);
    Ok(out.0)
}

/// S² × S¹ gives III̊ = ½ P̊̄ with P̊̄ = diag(1/3, 1/3, −2/3) in an orthonormal
/// frame; ℝ × S³ gives zero.
fn product_third_form() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let m = cylinder_s2s1()?;
    let want = [1.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0];
    let (mut dp, mut di) = (0.0f64, 0.0f64);
    for x in [[0.7f64, 1.1, 0.4], [1.3, 0.2, 2.0]] {
        let scale = [1.0, x[0].sin(), 1.0];
        let pb = intrinsic_traceless_schouten(&m, &x)?;
        let iii = third_conformal_ff(&m, &x)?.tensor;
        for a in 0..3 {
            for b in 0..3 {
                let frame = scale[a] * scale[b];
                let w = if a == b { want[a] } else { 0.0 };
                dp = dp.max((pb.get(&[a, b]) / frame - w).abs());
                di = di.max((iii.get(&[a, b]) / frame - 0.5 * w).abs());
            }
        }
    }
    out.at_most("S²×S¹ frame P̊̄ − diag(1/3, 1/3, −2/3)", dp, 1e-8);
    out.at_most("S²×S¹ frame III̊ − ½ P̊̄", di, 1e-8);
    let m = cylinder_s3()?;
    let mut worst = 0.0f64;
    for x in Grid::default_for(3).points() {
        worst = worst.max(third_conformal_ff(&m, &x)?.tensor.max_abs());
    }
    out.at_most("ℝ×S³ max |III̊|", worst, 1e-10);
    Ok(out.0)
}

/// Rational low coefficients for S³, S⁵ and H³, and agreement of the whole
/// series with the sin / sinh closed forms.
fn yamabe_constant() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let s5_names = ["a", "b", "c", "e", "f"];
    let h3 = MetricField::diagonal(&["x", "y", "z"], vec![e("1"), e("exp(2*x)"), e("exp(2*x)")])?;
    let cases: [(&str, MetricField, f64, Vec<(usize, Ratio<i64>)>); 3] = [
        ("S³", sphere(&S3)?, 6.0, vec![(3, Ratio::new(1, 6))]),
        (
            "S⁵",
            sphere(&s5_names)?,
            20.0,
            vec![(3, Ratio::new(1, 6)), (5, Ratio::new(1, 120))],
        ),
        ("H³", h3, -6.0, vec![(3, Ratio::new(-1, 6))]),
    ];
    for (name, g, sc, rationals) in &cases {
        let d = g.dim() + 1;
        let sol = solve_series(g, default_truncation(d))?;
        for (j, want) in rationals {
            let phi = sol.phi(*j).cloned().unwrap_or_else(Expr::zero);
            rational_clause(&mut out, &format!("{name} φ{j}"), &phi, g, *want)?;
        }
        let closed = closed_form_sigma(*sc, d);
        let want = closed.series(sol.sigma.order()).eval_coeffs(&[], &[])?;
        // coefficients beyond s^(d−1) are not determined for even d
        let top = if d % 2 == 0 { d - 1 } else { sol.sigma.order() };
        let mut worst = 0.0f64;
        for x in sample_points(g.dim()) {
            let got = sol.sigma.eval_coeffs(&g.coord_refs(), &x)?;
            for j in 0..=top {
                worst = worst.max((got[j] - want[j]).abs());
            }
        }
        out.at_most(
            format!("{name} series vs {:?} closed form through s^{top}", closed.branch),
            worst,
            1e-10,
        );
    }
    Ok(out.0)
}

/// The d = 4 obstruction equals −ΔJ/12; for d = 5 the iteration runs past
/// order 5 and leaves no obstruction.
fn yamabe_general() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let g = conformally_flat(3)?;
    let sol = solve_series(&g, default_truncation(4))?;
    let mut ops = SigmaOperators::new(&g)?;
    let lap = ops.laplacian(&ambient_j(&ops, 4))?;
    let vars = g.coord_refs();
    let (mut worst, mut seen) = (0.0f64, 0.0f64);
    match &sol.willmore {
        Some(w) => {
            for x in sample_points(3) {
                let want = -eval(&lap, &vars, &x)? / 12.0;
                seen = seen.max(want.abs());
                worst = worst.max((eval(w, &vars, &x)? - want).abs());
            }
            out.at_most("d = 4 |ψ₄ + ΔJ/12|", worst, 1e-8);
            out.at_least("d = 4 max |ΔJ/12| (non-degenerate test)", seen, 1e-4);
        }
        None => out.holds("d = 4 obstruction present", false),
    }

    let g = conformally_flat(4)?;
    let sol = solve_series(&g, default_truncation(5))?;
    out.holds(
        format!("d = 5 series carried through s^{}", sol.sigma.order()),
        sol.sigma.order() > 5,
    );
    out.holds("d = 5 has no obstruction", sol.willmore.is_none());
    let odd_literal = sol
        .residual
        .coeffs()
        .iter()
        .enumerate()
        .all(|(j, c)| j % 2 == 0 || c.is_zero());
    out.holds("d = 5 odd residual coefficients are identically zero", odd_literal);
    let mut worst = 0.0f64;
    for x in sample_points(4) {
        for v in sol.residual.eval_coeffs(&g.coord_refs(), &x)? {
            worst = worst.max(v.abs());
        }
    }
    out.at_most(
        format!("d = 5 residual through s^{}", sol.residual.order()),
        worst,
        1e-9,
    );
    Ok(out.0)
}

/// The sinh solution over S³ is Poincaré-Einstein, σ = s over flat space is
/// exactly, and the series over the non-Einstein S² × S¹ is not.
fn poincare_einstein() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let x = [0.7, 1.1, 0.4];
    let s3 = sphere(&S3)?;
    let sinh = closed_form_sigma(6.0, 4).expr("s");
    for s in [0.1, 0.3] {
        let p: Vec<f64> = std::iter::once(s).chain(x).collect();
        out.at_most(
            format!("S³ sinh residual at s = {s}"),
            pe_residual("s", &s3, &sinh, &p)?.max_abs(),
            1e-9,
        );
    }
    let flat = MetricField::diagonal(&["x", "y", "z"], vec![Expr::one(); 3])?;
    let r = pe_residual("s", &flat, &e("s"), &[0.1, 0.3, -0.2, 0.5])?;
    out.at_most("flat σ = s residual", r.max_abs(), 0.0);
    let g = MetricField::diagonal(&S2S1, vec![e("1"), e("sin(th)^2"), e("1")])?;
    let sol = solve_series(&g, default_truncation(4))?;
    let p: Vec<f64> = std::iter::once(0.1).chain(x).collect();
    let r = pe_residual("s", &g, &sol.sigma.to_expr("s"), &p)?;
    out.at_least("S²×S¹ residual at s = 0.1", r.max_abs(), 1e-3);
    Ok(out.0)
}

/// τ ≡ 1 is annihilated by the Jacobi operator of a product.
fn jacobi() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let warped = diag_nf(&["x", "y", "z"], &["1 + 0.3*x^2", "exp(y)", "1"])?;
    for (name, m) in [
        ("ℝ×S³", cylinder_s3()?),
        ("ℝ×(S²×S¹)", cylinder_s2s1()?),
        ("ℝ×(generic)", warped),
    ] {
        let mut worst = 0.0f64;
        for x in Grid::default_for(3).points() {
            worst = worst.max(jacobi_operator(&m, &Expr::one(), &x)?.max_abs());
        }
        out.at_most(format!("{name} |J(1)|"), worst, 1e-10);
    }
    Ok(out.0)
}

/// A `1e−6 t³` bump in ḡ moves FF4 at first order and leaves FF2, FF3 fixed.
fn transverse_probe() -> Res<Vec<Clause>> {
    let mut out = Clauses::default();
    let base = "exp(0.4*t)*(1 + 0.1*x*y)";
    let make = |extra: &str| {
        NormalFormMetric::new("t", &["x", "y"], |i, j| match (i, j) {
            (0, 0) => e(&format!("{base} + {extra}")),
            (1, 1) => e(base),
            _ => Expr::zero(),
        })
    };
    let mut a = FormEngine::new(&make("0")?, FormOptions::default())?;
    let mut b = FormEngine::new(&make("1e-6*t^3*exp(-x^2-y^2)")?, FormOptions::default())?;
    let x = [0.2, -0.3];
    for k in [2, 3] {
        let d = a.evaluate(k, &x)?.max_diff(&b.evaluate(k, &x)?)?;
        out.at_most(format!("change in FF{k}"), d, 1e-11);
    }
    let d = a.evaluate(4, &x)?.max_diff(&b.evaluate(4, &x)?)?;
    out.at_least("change in FF4", d, 1e-7);
    Ok(out.0)
}
