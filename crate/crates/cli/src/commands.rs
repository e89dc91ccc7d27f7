use geoforms_core::classify::{check_base_like, check_fiber_like, check_product};
use geoforms_core::conformal::{
    gauss_schouten_residual, jacobi_operator, product_third_form_prediction, rescale, second_conformal_ff,
    third_conformal_ff,
};
use geoforms_core::expr::{evaluate, Expr};
use geoforms_core::geometry::{CurvatureEngine, CurvatureOptions, Quantity};
use geoforms_core::hypersurface::{fundamental_forms, induced_metric, FormEngine, FormOptions, DEFAULT_K_MAX};
use geoforms_core::selftest;
use geoforms_core::tensor::TensorValue;
use geoforms_core::yamabe::{closed_form_sigma, constant_rational, default_truncation, solve_series, SigmaOperators};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::report::{spec_echo, tensor, to_value, Report};
use crate::spec::{Kind, MetricSpec};

/// Exit 3: the spec is well formed but the geometry cannot be evaluated.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

fn input<E: std::fmt::Display>(e: E) -> InputError {
    InputError(e.to_string())
}

type Res<T> = Result<T, InputError>;

#[derive(Debug, Clone)]
pub struct Flags {
    pub max_order: Option<usize>,
    pub tol: f64,
    pub points: Option<usize>,
}

fn points(spec: &MetricSpec, flags: &Flags) -> Vec<Vec<f64>> {
    let s = spec.sampling.clone();
    match flags.points {
        Some(n) => s.with_counts(n),
        None => s,
    }
    .points()
}

fn verdict(ok: bool) -> (String, i32) {
    if ok {
        ("ok".into(), 0)
    } else {
        ("failed".into(), 1)
    }
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// The full curvature stack at `(0, x)` for every sample point `x`, with the
/// Weyl trace and Riemann pair symmetry as self-checks.
pub fn curvature(spec: &MetricSpec, flags: &Flags) -> Res<Report> {
    let m = spec.metric().map_err(InputError)?;
    let g = m.full_metric();
    let engine = CurvatureEngine::new(&g, CurvatureOptions::default()).map_err(input)?;
    let pts = points(spec, flags);
    let stacks = pts
        .par_iter()
        .map(|x| engine.eval(&m.ambient_point(x)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let d = g.dim();
    let (mut trace, mut pair) = (0.0f64, 0.0f64);
    let mut rows = Vec::new();
    for st in &stacks {
        let scale = st.riemann.max_abs().max(1.0);
        let wt = st.weyl.metric_trace(0, 2, &st.metric_inv).map_err(input)?;
        trace = trace.max(wt.max_abs() / scale);
        for idx in st.riemann.indices() {
            let swapped = [idx[2], idx[3], idx[0], idx[1]];
            pair = pair.max((st.riemann.get(&idx) - st.riemann.get(&swapped)).abs() / scale);
        }
        let mut row = Map::new();
        row.insert("point".into(), json!(st.point));
        row.insert("condition-number".into(), json!(st.condition_number));
        for q in Quantity::ALL {
            if let Some(v) = st.quantity(q) {
                row.insert(q.name().into(), tensor(&v));
            }
        }
        rows.push(Value::Object(row));
    }
    let ok = trace <= flags.tol && pair <= flags.tol;
    let (verdict, exit) = verdict(ok);
    Ok(Report {
        command: "curvature",
        spec: Some(spec_echo(spec)),
        results: json!({ "dim": d, "points": rows }),
        residual_summary: json!({
            "weyl-trace": trace,
            "riemann-pair-symmetry": pair,
            "tolerance": flags.tol,
        }),
        verdict,
        exit,
    })
}

/// Fundamental forms of orders `2..=K` at every sample point.
pub fn forms(spec: &MetricSpec, flags: &Flags) -> Res<Report> {
    let m = spec.metric().map_err(InputError)?;
    let k = flags.max_order.unwrap_or(DEFAULT_K_MAX);
    let opts = FormOptions {
        k_max: k.max(DEFAULT_K_MAX),
        ..FormOptions::default()
    };
    let mut engine = FormEngine::new(&m, opts).map_err(input)?;
    let pts = points(spec, flags);
    let set = fundamental_forms(&mut engine, k, &pts).map_err(input)?;
    let mut rows = Vec::new();
    for (p, x) in pts.iter().enumerate() {
        let mut forms = Map::new();
        for (o, &order) in set.orders.iter().enumerate() {
            forms.insert(format!("FF{order}"), tensor(&set.values[o][p]));
        }
        let gbar = induced_metric(&m, x).map_err(input)?;
        rows.push(json!({ "point": x, "induced-metric": tensor(&gbar), "forms": forms }));
    }
    let mut summary = Map::new();
    for (o, &order) in set.orders.iter().enumerate() {
        summary.insert(
            format!("FF{order}"),
            json!(max_abs(set.values[o].iter().map(TensorValue::max_abs))),
        );
    }
    Ok(Report {
        command: "forms",
        spec: Some(spec_echo(spec)),
        results: json!({ "max-order": k, "provenance": to_value(&set.provenance), "points": rows }),
        residual_summary: json!({ "max-abs": summary }),
        verdict: "ok".into(),
        exit: 0,
    })
}

/// Base-like when the spec has `f`, fiber-like when it has `h`, product
/// otherwise.
pub fn classify(spec: &MetricSpec, flags: &Flags) -> Res<Report> {
    let m = spec.metric().map_err(InputError)?;
    let k = flags.max_order.unwrap_or(DEFAULT_K_MAX);
    let pts = points(spec, flags);
    let report = match (&spec.f, &spec.h) {
        (Some(f), _) => check_base_like(&m, &f.expr, k, &pts, flags.tol),
        (None, Some(h)) => check_fiber_like(&m, &h.expr, k, &pts, flags.tol),
        (None, None) => check_product(&m, k, &pts, flags.tol),
    }
    .map_err(input)?;
    let hypothesis = match (&spec.f, &spec.h) {
        (Some(_), _) => "base-like",
        (None, Some(_)) => "fiber-like",
        _ => "product",
    };
    let mut stages = Map::new();
    for r in &report.residuals {
        let key = format!("{} order {}", r.stage, r.order);
        let v = stages.get(&key).and_then(Value::as_f64).unwrap_or(0.0).max(r.value);
        stages.insert(key, json!(v));
    }
    Ok(Report {
        command: "classify",
        spec: Some(spec_echo(spec)),
        results: json!({ "hypothesis": hypothesis, "report": to_value(&report) }),
        residual_summary: json!({
            "stages": stages,
            "failure": to_value(&report.failure),
            "tolerance": flags.tol,
        }),
        verdict: report.verdict.to_string(),
        exit: if report.passed() { 0 } else { 1 },
    })
}

fn coefficient(e: &Expr, vars: &[&str], pts: &[Vec<f64>], power: usize) -> Res<Value> {
    let values: Vec<f64> = pts
        .iter()
        .map(|x| evaluate(e, &vars.iter().copied().zip(x.iter().copied()).collect()))
        .collect::<Result<_, _>>()
        .map_err(input)?;
    let rational = constant_rational(e, vars, pts).map_err(input)?;
    Ok(json!({
        "power": power,
        "rational": rational.map(|r| r.to_string()),
        "values": values,
    }))
}

/// The singular Yamabe series over `ḡ₀ = ḡ(0, x)`.
pub fn yamabe(spec: &MetricSpec, flags: &Flags) -> Res<Report> {
    let g = spec.sigma_metric().map_err(InputError)?;
    let d = spec.dim;
    let truncation = flags.max_order.unwrap_or_else(|| default_truncation(d));
    let sol = solve_series(&g, truncation).map_err(input)?;
    let vars = g.coord_refs();
    let pts = points(spec, flags);

    let mut phi = Vec::new();
    for (j, c) in sol.sigma.coeffs().iter().enumerate() {
        if !c.is_zero() {
            phi.push(coefficient(c, &vars, &pts, j)?);
        }
    }
    let mut psi = Vec::new();
    for (l, p) in sol.psi.iter().enumerate() {
        psi.push(coefficient(p, &vars, &pts, 2 * l + 2)?);
    }
    let willmore = match &sol.willmore {
        Some(w) => coefficient(w, &vars, &pts, d)?,
        None => Value::Null,
    };

    // residual coefficients the truncation determines
    let last = if d.is_multiple_of(2) {
        d - 1
    } else {
        sol.residual.order()
    };
    let mut worst = 0.0f64;
    for x in &pts {
        let r = sol.residual.eval_coeffs(&vars, x).map_err(input)?;
        worst = worst.max(max_abs(r.into_iter().take(last + 1)));
    }

    // constant scalar curvature admits a closed form
    let ops = SigmaOperators::new(&g).map_err(input)?;
    let sc: Vec<f64> = pts
        .iter()
        .map(|x| {
            evaluate(
                ops.scalar_curvature(),
                &vars.iter().copied().zip(x.iter().copied()).collect(),
            )
        })
        .collect::<Result<_, _>>()
        .map_err(input)?;
    let spread = sc.iter().fold(0.0f64, |a, &v| a.max((v - sc[0]).abs()));
    let closed = if !sc.is_empty() && spread <= flags.tol * sc[0].abs().max(1.0) {
        let cf = closed_form_sigma(sc[0], d);
        let want = cf.series(sol.sigma.order()).eval_coeffs(&[], &[]).map_err(input)?;
        let mut dev = 0.0f64;
        for x in &pts {
            let got = sol.sigma.eval_coeffs(&vars, x).map_err(input)?;
            dev = dev.max(max_abs(got.iter().zip(&want).take(last + 1).map(|(a, b)| a - b)));
        }
        json!({
            "branch": to_value(&cf.branch),
            "amplitude": cf.amplitude,
            "rate": cf.rate,
            "scalar-curvature": sc[0],
            "max-coefficient-deviation": dev,
        })
    } else {
        Value::Null
    };

    let (verdict, exit) = verdict(worst <= flags.tol);
    Ok(Report {
        command: "yamabe",
        spec: Some(spec_echo(spec)),
        results: json!({
            "d": d,
            "truncation": truncation,
            "points": pts,
            "phi": phi,
            "psi": psi,
            "willmore": willmore,
            "closed-form": closed,
        }),
        residual_summary: json!({
            "determined-through": last,
            "max-residual": worst,
            "tolerance": flags.tol,
        }),
        verdict,
        exit,
    })
}

fn is_product(spec: &MetricSpec) -> bool {
    spec.kind == Kind::NormalForm && spec.components.values().all(|e| !e.depends_on(spec.transverse()))
}

/// Trace-free second and third forms, the Gauss identity residual, and
/// with `omega` the conformal weight law.
pub fn conformal_check(spec: &MetricSpec, flags: &Flags) -> Res<Report> {
    let m = spec.metric().map_err(InputError)?;
    let pts = points(spec, flags);
    let d = spec.dim;
    let product = is_product(spec);
    let rescaled = match &spec.omega {
        Some(o) => Some(rescale(&m, &o.expr, &pts).map_err(input)?),
        None => None,
    };
    let coords = m.coord_refs();

    let mut rows = Vec::new();
    let mut summary = Map::new();
    let mut bump = |key: &str, v: f64| {
        let cur = summary.get(key).and_then(Value::as_f64).unwrap_or(0.0);
        summary.insert(key.to_string(), json!(cur.max(v)));
    };
    for x in &pts {
        let mut row = Map::new();
        row.insert("point".into(), json!(x));
        let ii = second_conformal_ff(&m, x).map_err(input)?;
        row.insert("second".into(), tensor(&ii.tensor));
        row.insert("second-weight".into(), json!(ii.weight.to_string()));
        let gauss = gauss_schouten_residual(&m, x).map_err(input)?;
        bump("gauss-schouten", gauss.max_abs());
        let iii = if d >= 4 {
            let iii = third_conformal_ff(&m, x).map_err(input)?;
            row.insert("third".into(), tensor(&iii.tensor));
            row.insert("third-weight".into(), json!(iii.weight.to_string()));
            if product {
                let pred = product_third_form_prediction(&m, x).map_err(input)?;
                bump("product-third-form", iii.tensor.max_diff(&pred).map_err(input)?);
                let jac = jacobi_operator(&m, &Expr::one(), x).map_err(input)?;
                bump("product-jacobi", jac.max_abs());
            }
            Some(iii)
        } else {
            None
        };
        if let (Some(r), Some(o)) = (&rescaled, &spec.omega) {
            let p = m.ambient_point(x);
            let om = evaluate(&o.expr, &coords.iter().copied().zip(p.iter().copied()).collect()).map_err(input)?;
            let ii_r = second_conformal_ff(r, x).map_err(input)?;
            bump(
                "weight-second",
                ii_r.tensor.max_diff(&ii.tensor.scale(om)).map_err(input)?,
            );
            if let Some(iii) = &iii {
                let iii_r = third_conformal_ff(r, x).map_err(input)?;
                bump("weight-third", iii_r.tensor.max_diff(&iii.tensor).map_err(input)?);
            }
            row.insert("omega".into(), json!(om));
        }
        rows.push(Value::Object(row));
    }
    let ok = summary.values().all(|v| v.as_f64().is_some_and(|v| v <= flags.tol));
    summary.insert("tolerance".into(), json!(flags.tol));
    let (verdict, exit) = verdict(ok);
    Ok(Report {
        command: "conformal-check",
        spec: Some(spec_echo(spec)),
        results: json!({ "product": product, "points": rows }),
        residual_summary: Value::Object(summary),
        verdict,
        exit,
    })
}

pub fn selftest() -> Report {
    let results = selftest::run_all();
    for r in &results {
        eprintln!("{r}");
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    Report {
        command: "selftest",
        spec: None,
        results: to_value(&results),
        residual_summary: json!({ "passed": results.len() - failed.len(), "failed": failed }),
        verdict: if failed.is_empty() { "passed" } else { "failed" }.into(),
        exit: if failed.is_empty() { 0 } else { 1 },
    }
}
