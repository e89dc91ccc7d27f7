//! JSON reports with sorted keys and floats rounded to 15 significant digits.

use geoforms_core::conventions::conventions;
use geoforms_core::tensor::TensorValue;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::spec::MetricSpec;

pub struct Report {
    pub command: &'static str,
    pub spec: Option<Value>,
    pub results: Value,
    pub residual_summary: Value,
    pub verdict: String,
    pub exit: i32,
}

pub fn round15(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    let r: f64 = format!("{v:.14e}").parse().unwrap_or(v);
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Round every float in place. Non-finite values become strings so the
/// output stays valid JSON.
fn normalize(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().unwrap_or(f64::NAN);
            *v = serde_json::Number::from_f64(round15(f)).map_or_else(|| Value::String(f.to_string()), Value::Number);
        }
        Value::Array(a) => a.iter_mut().for_each(normalize),
        Value::Object(o) => o.values_mut().for_each(normalize),
        _ => {}
    }
}

pub fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

/// Scalars as numbers, rank-1 as arrays, rank-2 as nested rows, higher ranks
/// as a flat row-major list with their dimension and rank.
pub fn tensor(t: &TensorValue) -> Value {
    let n = t.dim();
    match t.rank() {
        0 => json!(t.entries()[0]),
        1 => json!(t.entries()),
        2 => Value::Array(t.entries().chunks(n).map(|r| json!(r)).collect()),
        r => json!({ "dim": n, "rank": r, "entries": t.entries() }),
    }
}

pub fn spec_echo(spec: &MetricSpec) -> Value {
    to_value(spec)
}

impl Report {
    pub fn render(&self) -> String {
        let c = conventions();
        let mut top = Map::new();
        top.insert("command".into(), json!(self.command));
        top.insert("spec-echo".into(), self.spec.clone().unwrap_or(Value::Null));
        top.insert(
            "conventions".into(),
            json!({
                "riemann-lowering-sign": c.riemann_lowering_sign,
                "ff-sign": c.ff_sign,
                "lowered-riemann": "R_abcd = g_ce R_ab^e_d, R_ab^c_d = d_a Gamma^c_bd - d_b Gamma^c_ad + Gamma^c_ae Gamma^e_bd - Gamma^c_be Gamma^e_ad",
                "ricci": "Ric_ab = R_ca^c_b",
                "fundamental-form": "FF^k_ab = n^a1..n^a(k-3) n^c n^d nabla_a1..nabla_a(k-3) R_cabd on tangential slots (k >= 3), II_ab = (2N)^-1 d_t gbar_ab",
            }),
        );
        top.insert("results".into(), self.results.clone());
        top.insert("residual-summary".into(), self.residual_summary.clone());
        top.insert("verdict".into(), json!(self.verdict));
        let mut v = Value::Object(top);
        normalize(&mut v);
        let mut out = serde_json::to_string_pretty(&v).unwrap_or_default();
        out.push('\n');
        out
    }
}
