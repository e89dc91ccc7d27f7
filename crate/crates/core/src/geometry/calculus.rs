use crate::expr::{Differentiator, Expr, DEFAULT_NODE_BUDGET};

use super::GeometryError;

/// Scalar arithmetic plus partial derivatives along coordinate slots.
///
/// The curvature pipeline is written once against this trait. The symbolic
/// implementation works on [`Expr`]; the jet implementation works on truncated
/// Taylor polynomials at a point and backs the finite-difference oracle.
pub trait Calculus {
    type S: Clone;

    fn constant(&self, c: f64) -> Self::S;
    fn add(&self, a: &Self::S, b: &Self::S) -> Self::S;
    fn sub(&self, a: &Self::S, b: &Self::S) -> Self::S;
    fn mul(&self, a: &Self::S, b: &Self::S) -> Self::S;
    fn div(&self, a: &Self::S, b: &Self::S) -> Self::S;
    fn is_zero(&self, a: &Self::S) -> bool;
    fn partial(&mut self, a: &Self::S, coord: usize) -> Result<Self::S, GeometryError>;

    fn zero(&self) -> Self::S {
        self.constant(0.0)
    }

    fn scale(&self, c: f64, a: &Self::S) -> Self::S {
        if c == 1.0 {
            return a.clone();
        }
        self.mul(&self.constant(c), a)
    }

    /// `acc + a*b`, skipping the product when either factor is zero.
    fn fma(&self, acc: Self::S, a: &Self::S, b: &Self::S) -> Self::S {
        if self.is_zero(a) || self.is_zero(b) {
            acc
        } else if self.is_zero(&acc) {
            self.mul(a, b)
        } else {
            self.add(&acc, &self.mul(a, b))
        }
    }

    fn sum(&self, terms: impl IntoIterator<Item = Self::S>) -> Self::S {
        let mut acc = self.zero();
        for t in terms {
            if self.is_zero(&t) {
                continue;
            }
            acc = if self.is_zero(&acc) { t } else { self.add(&acc, &t) };
        }
        acc
    }
}

/// Exact symbolic calculus over a fixed list of coordinate names.
pub struct Symbolic {
    coords: Vec<String>,
    diffs: Vec<Differentiator>,
}

impl Symbolic {
    pub fn new(coords: &[String]) -> Self {
        Self::with_budget(coords, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(coords: &[String], budget: usize) -> Self {
        Symbolic {
            coords: coords.to_vec(),
            diffs: coords.iter().map(|c| Differentiator::with_budget(c, budget)).collect(),
        }
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }
}

impl Calculus for Symbolic {
    type S = Expr;

    fn constant(&self, c: f64) -> Expr {
        Expr::constant(c)
    }
    fn add(&self, a: &Expr, b: &Expr) -> Expr {
        Expr::add(a, b)
    }
    fn sub(&self, a: &Expr, b: &Expr) -> Expr {
        Expr::sub(a, b)
    }
    fn mul(&self, a: &Expr, b: &Expr) -> Expr {
        Expr::mul(a, b)
    }
    fn div(&self, a: &Expr, b: &Expr) -> Expr {
        Expr::div(a, b)
    }
    fn is_zero(&self, a: &Expr) -> bool {
        a.is_zero()
    }
    fn partial(&mut self, a: &Expr, coord: usize) -> Result<Expr, GeometryError> {
        Ok(self.diffs[coord].diff(a)?)
    }
}
