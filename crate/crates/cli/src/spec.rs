//! Metric spec files: top-level `key = value` lines plus `[gbar]`, `[warp]`
//! and `[grid]` sections, read with the TOML grammar.

use std::collections::BTreeMap;
use std::path::Path;

use geoforms_core::classify::Grid;
use geoforms_core::expr::{parse, Expr};
use geoforms_core::geometry::MetricField;
use geoforms_core::hypersurface::{base_like_normal_form, NormalFormMetric};
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Semantic { line: Option<usize>, message: String },
}

impl SpecError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SpecError::Io { .. } | SpecError::Syntax { .. } => 2,
            SpecError::Semantic { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    NormalForm,
    BaseLike,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    dim: Spanned<i64>,
    coords: Spanned<Vec<String>>,
    kind: Option<Spanned<Kind>>,
    #[serde(default)]
    gbar: BTreeMap<String, Spanned<String>>,
    #[serde(default)]
    warp: RawWarp,
    grid: Option<Spanned<RawGrid>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWarp {
    h: Option<Spanned<String>>,
    f: Option<Spanned<String>>,
    omega: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Counts {
    Each(usize),
    Per(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    range: Option<(f64, f64)>,
    ranges: Option<Vec<(f64, f64)>>,
    counts: Option<Counts>,
    margin: Option<f64>,
    points: Option<Vec<Vec<f64>>>,
}

/// An expression together with the text it was read from.
#[derive(Debug, Clone, Serialize)]
pub struct SourceExpr {
    pub source: String,
    #[serde(skip)]
    pub expr: Expr,
}

/// Where to evaluate: a regular grid on Σ or explicit points.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Sampling {
    Grid(Grid),
    Points { points: Vec<Vec<f64>> },
}

impl Sampling {
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            Sampling::Grid(g) => g.points(),
            Sampling::Points { points } => points.clone(),
        }
    }

    /// Replace the per-axis counts of a grid; explicit points are kept.
    pub fn with_counts(self, n: usize) -> Sampling {
        match self {
            Sampling::Grid(mut g) => {
                g.counts = vec![n; g.counts.len()];
                Sampling::Grid(g)
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricSpec {
    pub dim: usize,
    /// First entry is the transverse coordinate.
    pub coords: Vec<String>,
    pub kind: Kind,
    /// Tangential components keyed by coordinate pair, upper triangle.
    pub gbar: BTreeMap<String, SourceExpr>,
    #[serde(skip)]
    pub components: BTreeMap<(usize, usize), Expr>,
    pub h: Option<SourceExpr>,
    pub f: Option<SourceExpr>,
    pub omega: Option<SourceExpr>,
    pub sampling: Sampling,
}

pub fn read_spec(path: &Path) -> Result<MetricSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spec(&text)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn semantic<T>(&self, span: Option<std::ops::Range<usize>>, message: impl Into<String>) -> Result<T, SpecError> {
        Err(SpecError::Semantic {
            line: span.map(|s| line_of(self.text, s.start)),
            message: message.into(),
        })
    }

    /// Parse an expression value and check its variables against `allowed`.
    fn expr(&self, key: &str, value: &Spanned<String>, allowed: &[&str]) -> Result<SourceExpr, SpecError> {
        let expr = parse(value.get_ref()).map_err(|e| SpecError::Syntax {
            line: line_of(self.text, value.span().start),
            message: format!("`{key}`: {e}"),
        })?;
        if let Some(v) = expr.variables().into_iter().find(|v| !allowed.contains(&v.as_str())) {
            return self.semantic(
                Some(value.span()),
                format!("`{key}` uses `{v}`, which is not among the allowed coordinates {allowed:?}"),
            );
        }
        Ok(SourceExpr {
            source: value.get_ref().clone(),
            expr,
        })
    }
}

/// Split a `[gbar]` key into two tangential coordinates. Keys are either the
/// two names concatenated (`xy`, `chitheta`) or separated by whitespace.
fn split_key(key: &str, xs: &[String]) -> Result<(usize, usize), String> {
    let find = |s: &str| xs.iter().position(|x| x == s);
    let words: Vec<&str> = key.split_whitespace().collect();
    if words.len() == 2 {
        return match (find(words[0]), find(words[1])) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(format!("`{key}` does not name two tangential coordinates")),
        };
    }
    let splits: Vec<(usize, usize)> = (1..key.len())
        .filter(|&k| key.is_char_boundary(k))
        .filter_map(|k| Some((find(&key[..k])?, find(&key[k..])?)))
        .collect();
    match splits.as_slice() {
        [one] => Ok(*one),
        [] => Err(format!("`{key}` does not name two tangential coordinates")),
        _ => Err(format!(
            "`{key}` splits into coordinates in more than one way; separate them with a space"
        )),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

pub fn parse_spec(text: &str) -> Result<MetricSpec, SpecError> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| SpecError::Syntax {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let cx = Ctx { text };

    let dim = *raw.dim.get_ref();
    if dim < 3 {
        return cx.semantic(Some(raw.dim.span()), format!("dim must be at least 3, got {dim}"));
    }
    let dim = dim as usize;
    let coords = raw.coords.get_ref().clone();
    if coords.len() != dim {
        return cx.semantic(
            Some(raw.coords.span()),
            format!("dim is {dim} but {} coordinates are declared", coords.len()),
        );
    }
    for (i, c) in coords.iter().enumerate() {
        if !is_identifier(c) || geoforms_core::expr::Func::from_name(c).is_some() {
            return cx.semantic(Some(raw.coords.span()), format!("`{c}` is not a valid coordinate name"));
        }
        if coords[..i].contains(c) {
            return cx.semantic(Some(raw.coords.span()), format!("coordinate `{c}` is declared twice"));
        }
    }
    let all: Vec<&str> = coords.iter().map(String::as_str).collect();
    let t = all[0];
    let xs = &all[1..];
    let kind = raw.kind.as_ref().map_or(Kind::NormalForm, |k| *k.get_ref());

    let tangential: Vec<String> = coords[1..].to_vec();
    let mut gbar = BTreeMap::new();
    let mut components = BTreeMap::new();
    let gbar_vars: &[&str] = if kind == Kind::BaseLike { xs } else { &all };
    for (key, value) in &raw.gbar {
        let (i, j) = match split_key(key, &tangential) {
            Ok(ij) => ij,
            Err(m) => return cx.semantic(Some(value.span()), m),
        };
        let (i, j) = (i.min(j), i.max(j));
        let e = cx.expr(key, value, gbar_vars)?;
        if components.insert((i, j), e.expr.clone()).is_some() {
            return cx.semantic(
                Some(value.span()),
                format!("component {}{} is given twice", coords[i + 1], coords[j + 1]),
            );
        }
        gbar.insert(format!("{} {}", coords[i + 1], coords[j + 1]), e);
    }

    let h = raw.warp.h.as_ref().map(|v| cx.expr("h", v, &[t])).transpose()?;
    let f = raw.warp.f.as_ref().map(|v| cx.expr("f", v, xs)).transpose()?;
    let omega = raw.warp.omega.as_ref().map(|v| cx.expr("omega", v, &all)).transpose()?;
    if kind == Kind::BaseLike {
        if f.is_none() {
            return cx.semantic(None, "kind = \"base_like\" requires a base warp `f` in [warp]");
        }
        if h.is_some() {
            return cx.semantic(
                raw.warp.h.as_ref().map(|v| v.span()),
                "a base-like spec cannot carry a fiber warp",
            );
        }
    }
    if h.is_some() && f.is_some() {
        return cx.semantic(None, "give either a fiber warp `h` or a base warp `f`, not both");
    }

    let n = dim - 1;
    let sampling = match &raw.grid {
        None => Sampling::Grid(Grid::default_for(n)),
        Some(g) => {
            let span = Some(g.span());
            let g = g.get_ref();
            if let Some(points) = &g.points {
                if g.range.is_some() || g.ranges.is_some() || g.counts.is_some() {
                    return cx.semantic(span, "[grid] takes either `points` or a range description");
                }
                if points.is_empty() || points.iter().any(|p| p.len() != n) {
                    return cx.semantic(span, format!("every grid point needs {n} coordinates"));
                }
                Sampling::Points { points: points.clone() }
            } else {
                let ranges = match (&g.range, &g.ranges) {
                    (Some(_), Some(_)) => return cx.semantic(span, "give `range` or `ranges`, not both"),
                    (Some(r), None) => vec![*r; n],
                    (None, Some(r)) if r.len() == n => r.clone(),
                    (None, Some(r)) => {
                        return cx.semantic(span, format!("`ranges` has {} entries, expected {n}", r.len()))
                    }
                    (None, None) => vec![Grid::DEFAULT_RANGE; n],
                };
                if ranges
                    .iter()
                    .any(|(lo, hi)| lo >= hi || !lo.is_finite() || !hi.is_finite())
                {
                    return cx.semantic(span, "every range needs finite lo < hi");
                }
                let counts = match &g.counts {
                    None => vec![3; n],
                    Some(Counts::Each(c)) => vec![*c; n],
                    Some(Counts::Per(c)) if c.len() == n => c.clone(),
                    Some(Counts::Per(c)) => {
                        return cx.semantic(span, format!("`counts` has {} entries, expected {n}", c.len()))
                    }
                };
                if counts.contains(&0) {
                    return cx.semantic(span, "grid counts must be positive");
                }
                let margin = g.margin.unwrap_or(Grid::DEFAULT_MARGIN);
                if !(0.0..0.5).contains(&margin) {
                    return cx.semantic(span, "margin must lie in [0, 0.5)");
                }
                Sampling::Grid(Grid { ranges, counts, margin })
            }
        }
    };

    Ok(MetricSpec {
        dim,
        coords,
        kind,
        gbar,
        components,
        h,
        f,
        omega,
        sampling,
    })
}

impl MetricSpec {
    pub fn transverse(&self) -> &str {
        &self.coords[0]
    }

    pub fn sigma_refs(&self) -> Vec<&str> {
        self.coords[1..].iter().map(String::as_str).collect()
    }

    fn component(&self, i: usize, j: usize) -> Expr {
        self.components
            .get(&(i.min(j), i.max(j)))
            .cloned()
            .unwrap_or_else(Expr::zero)
    }

    /// ḡ₀ as a metric on Σ. For normal-form specs this is ḡ at `t = 0`.
    pub fn sigma_metric(&self) -> Result<MetricField, String> {
        let t = Expr::zero();
        MetricField::new(&self.sigma_refs(), |i, j| {
            self.component(i, j).substitute(self.transverse(), &t)
        })
        .map_err(|e| e.to_string())
    }

    /// The chart: strict normal form, or `f² dt² + ḡ₀` for base-like specs.
    pub fn metric(&self) -> Result<NormalFormMetric, String> {
        match (self.kind, &self.f) {
            (Kind::BaseLike, Some(f)) => {
                base_like_normal_form(self.transverse(), &f.expr, &self.sigma_metric()?).map_err(|e| e.to_string())
            }
            _ => {
                let m = NormalFormMetric::new(self.transverse(), &self.sigma_refs(), |i, j| self.component(i, j))
                    .map_err(|e| e.to_string())?;
                match &self.h {
                    Some(h) => m.with_fiber_warp(h.expr.clone()).map_err(|e| e.to_string()),
                    None => Ok(m),
                }
            }
        }
    }
}
