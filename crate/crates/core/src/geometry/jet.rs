//! Truncated multivariate Taylor polynomials at a point.

use std::collections::HashMap;
use std::sync::Arc;

use super::calculus::Calculus;
use super::GeometryError;

/// Monomial basis of degree ≤ `order` in `nvars` variables, sorted by degree.
#[derive(Debug)]
pub struct JetLayout {
    nvars: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    /// `len_upto[k]` = number of monomials of degree ≤ k.
    len_upto: Vec<usize>,
    /// `(i, j, k)` with `m_i · m_j = m_k`, sorted by degree of `m_k`.
    products: Vec<(u32, u32, u32)>,
    products_upto: Vec<usize>,
    /// Per variable: `(source, target, factor)` for the partial derivative.
    partials: Vec<Vec<(u32, u32, f64)>>,
}

impl JetLayout {
    pub fn new(nvars: usize, order: usize) -> Arc<Self> {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut len_upto = Vec::with_capacity(order + 1);
        for deg in 0..=order {
            let mut of_deg = Vec::new();
            compositions(nvars, deg, &mut vec![0; nvars], 0, &mut of_deg);
            exps.extend(of_deg);
            len_upto.push(exps.len());
        }
        let index: HashMap<Vec<u8>, usize> = exps.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        let degree = |e: &[u8]| e.iter().map(|&x| x as usize).sum::<usize>();

        let mut products = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if degree(a) + degree(b) > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u32, j as u32, index[&sum] as u32));
            }
        }
        products.sort_by_key(|&(_, _, k)| degree(&exps[k as usize]));
        let products_upto = (0..=order)
            .map(|d| products.iter().filter(|p| degree(&exps[p.2 as usize]) <= d).count())
            .collect();

        let partials = (0..nvars)
            .map(|v| {
                exps.iter()
                    .enumerate()
                    .filter(|(_, e)| e[v] > 0)
                    .map(|(i, e)| {
                        let mut lower = e.clone();
                        lower[v] -= 1;
                        (i as u32, index[&lower] as u32, e[v] as f64)
                    })
                    .collect()
            })
            .collect();

        Arc::new(JetLayout {
            nvars,
            order,
            exps,
            len_upto,
            products,
            products_upto,
            partials,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exps
    }
}

fn compositions(n: usize, total: usize, cur: &mut Vec<u8>, pos: usize, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == n {
        cur[pos] = total as u8;
        out.push(cur.clone());
        return;
    }
    if n == 0 {
        return;
    }
    for k in (0..=total).rev() {
        cur[pos] = k as u8;
        compositions(n, total - k, cur, pos + 1, out);
    }
}

/// Taylor polynomial valid through degree `order`; coefficients past it are
/// kept at zero.
#[derive(Debug, Clone)]
pub struct Jet {
    order: usize,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn from_coeffs(layout: &JetLayout, order: usize, mut coeffs: Vec<f64>) -> Jet {
        assert_eq!(coeffs.len(), layout.exps.len());
        for c in &mut coeffs[layout.len_upto[order]..] {
            *c = 0.0;
        }
        Jet { order, coeffs }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

pub struct JetCalculus {
    layout: Arc<JetLayout>,
}

impl JetCalculus {
    pub fn new(layout: Arc<JetLayout>) -> Self {
        JetCalculus { layout }
    }

    fn blank(&self, order: usize) -> Jet {
        Jet {
            order,
            coeffs: vec![0.0; self.layout.exps.len()],
        }
    }

    fn recip(&self, b: &Jet) -> Jet {
        let b0 = b.coeffs[0];
        let mut delta = b.clone();
        delta.coeffs[0] = 0.0;
        for c in &mut delta.coeffs {
            *c /= -b0;
        }
        // 1/b = (1/b0) Σ_k (−δ/b0)^k, by Horner
        let mut acc = self.constant(1.0);
        acc.order = b.order;
        for _ in 0..b.order {
            acc = self.mul(&acc, &delta);
            acc.coeffs[0] += 1.0;
        }
        for c in &mut acc.coeffs {
            *c /= b0;
        }
        acc
    }
}

impl Calculus for JetCalculus {
    type S = Jet;

    fn constant(&self, c: f64) -> Jet {
        let mut j = self.blank(self.layout.order);
        j.coeffs[0] = c;
        j
    }

    fn add(&self, a: &Jet, b: &Jet) -> Jet {
        let order = a.order.min(b.order);
        let n = self.layout.len_upto[order];
        let mut out = self.blank(order);
        for i in 0..n {
            out.coeffs[i] = a.coeffs[i] + b.coeffs[i];
        }
        out
    }

    fn sub(&self, a: &Jet, b: &Jet) -> Jet {
        let order = a.order.min(b.order);
        let n = self.layout.len_upto[order];
        let mut out = self.blank(order);
        for i in 0..n {
            out.coeffs[i] = a.coeffs[i] - b.coeffs[i];
        }
        out
    }

    fn mul(&self, a: &Jet, b: &Jet) -> Jet {
        let order = a.order.min(b.order);
        let mut out = self.blank(order);
        for &(i, j, k) in &self.layout.products[..self.layout.products_upto[order]] {
            out.coeffs[k as usize] += a.coeffs[i as usize] * b.coeffs[j as usize];
        }
        out
    }

    fn div(&self, a: &Jet, b: &Jet) -> Jet {
        self.mul(a, &self.recip(b))
    }

    fn is_zero(&self, a: &Jet) -> bool {
        a.coeffs.iter().all(|c| *c == 0.0)
    }

    fn partial(&mut self, a: &Jet, coord: usize) -> Result<Jet, GeometryError> {
        if a.order == 0 {
            return Err(GeometryError::Dimension("jet order exhausted".into()));
        }
        let mut out = self.blank(a.order - 1);
        let cut = self.layout.len_upto[a.order - 1];
        for &(src, dst, f) in &self.layout.partials[coord] {
            if (dst as usize) < cut {
                out.coeffs[dst as usize] += f * a.coeffs[src as usize];
            }
        }
        Ok(out)
    }
}
