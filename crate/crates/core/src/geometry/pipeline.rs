//! Curvature of a metric given as a matrix of scalars in some [`Calculus`].
//!
//! Conventions:
//!
//! ```text
//! Γ^c_ab     = ½ g^cd (∂_a g_bd + ∂_b g_ad − ∂_d g_ab)
//! R_ab^c_d   = ∂_a Γ^c_bd − ∂_b Γ^c_ad + Γ^c_ae Γ^e_bd − Γ^c_be Γ^e_ad
//! R_abcd     = s · g_ce R_ab^e_d          (s = lowering sign, +1)
//! Ric_ab     = R_ca^c_b
//! P_ab       = (Ric_ab − Sc g_ab / (2(n−1))) / (n−2)
//! W_abcd     = R_abcd − g_ac P_bd + g_ad P_bc + g_bc P_ad − g_bd P_ac
//! C_abc      = ∇_a P_bc − ∇_b P_ac
//! B_ab       = ΔP_ab − ∇^c ∇_a P_bc + P^cd W_acbd
//! ```

use std::collections::HashMap;

use crate::tensor::{MultiIndex, Slot, Tensor};

use super::calculus::Calculus;
use super::GeometryError;

type T<C> = Tensor<<C as Calculus>::S>;

fn down(rank: usize) -> Vec<Slot> {
    vec![Slot::Down; rank]
}

/// Inverse of a symmetric matrix, block by block over the connected
/// components of its nonzero pattern. Each block uses the adjugate with
/// memoized Laplace expansion.
pub fn inverse<C: Calculus>(c: &C, g: &T<C>) -> Result<T<C>, GeometryError> {
    let n = g.dim();
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while comp[r] != r {
            r = comp[r];
        }
        comp[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if !c.is_zero(g.get(&[i, j])) {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a] = b;
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut root_of: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = find(&mut comp, i);
        let b = *root_of.entry(r).or_insert_with(|| {
            blocks.push(Vec::new());
            blocks.len() - 1
        });
        blocks[b].push(i);
    }

    let mut inv = Tensor::from_fn(n, vec![Slot::Up, Slot::Up], |_| c.zero());
    for block in &blocks {
        let m = block.len();
        if m > 16 {
            return Err(GeometryError::Dimension(format!(
                "metric block of size {m} is too large"
            )));
        }
        let entry = |r: usize, s: usize| g.get(&[block[r], block[s]]).clone();
        let mut memo: HashMap<(u32, u32), C::S> = HashMap::new();
        let full = (1u32 << m) - 1;
        let det = minor(c, &entry, full, full, &mut memo);
        if c.is_zero(&det) {
            return Err(GeometryError::Singular { cond: f64::INFINITY });
        }
        for i in 0..m {
            for j in i..m {
                // inv_ij = (-1)^(i+j) det(minor without row j, col i) / det
                let cof = minor(c, &entry, full & !(1 << j), full & !(1 << i), &mut memo);
                let cof = if (i + j) % 2 == 1 { c.scale(-1.0, &cof) } else { cof };
                let v = c.div(&cof, &det);
                inv.set(&[block[i], block[j]], v.clone());
                inv.set(&[block[j], block[i]], v);
            }
        }
    }
    Ok(inv)
}

fn minor<C: Calculus>(
    c: &C,
    entry: &impl Fn(usize, usize) -> C::S,
    rows: u32,
    cols: u32,
    memo: &mut HashMap<(u32, u32), C::S>,
) -> C::S {
    if rows == 0 {
        return c.constant(1.0);
    }
    if let Some(v) = memo.get(&(rows, cols)) {
        return v.clone();
    }
    let r0 = rows.trailing_zeros() as usize;
    let mut acc = c.zero();
    let mut pos = 0;
    let mut cs = cols;
    while cs != 0 {
        let col = cs.trailing_zeros() as usize;
        cs &= cs - 1;
        let e = entry(r0, col);
        if !c.is_zero(&e) {
            let sub = minor(c, entry, rows & !(1 << r0), cols & !(1 << col), memo);
            let term = if pos % 2 == 1 { c.scale(-1.0, &e) } else { e };
            acc = c.fma(acc, &term, &sub);
        }
        pos += 1;
    }
    memo.insert((rows, cols), acc.clone());
    acc
}

/// First partials `dg[k][i][j] = ∂_k g_ij`, sharing the symmetric half.
fn metric_partials<C: Calculus>(c: &mut C, g: &T<C>) -> Result<Vec<Vec<Vec<C::S>>>, GeometryError> {
    let n = g.dim();
    let mut out = vec![vec![vec![c.zero(); n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let d = c.partial(g.get(&[i, j]), k)?;
                out[k][i][j] = d.clone();
                out[k][j][i] = d;
            }
        }
    }
    Ok(out)
}

/// Christoffel symbols `Γ^c_ab`, valence (up, down, down).
pub fn christoffel<C: Calculus>(c: &mut C, g: &T<C>, g_inv: &T<C>) -> Result<T<C>, GeometryError> {
    let n = g.dim();
    let dg = metric_partials(c, g)?;
    // first kind: Γ_dab
    let mut first = vec![vec![vec![c.zero(); n]; n]; n];
    for d in 0..n {
        for a in 0..n {
            for b in a..n {
                let s = c.sub(&c.add(&dg[a][b][d], &dg[b][a][d]), &dg[d][a][b]);
                let v = c.scale(0.5, &s);
                first[d][a][b] = v.clone();
                first[d][b][a] = v;
            }
        }
    }
    let mut gamma = Tensor::from_fn(n, vec![Slot::Up, Slot::Down, Slot::Down], |_| c.zero());
    for cc in 0..n {
        for a in 0..n {
            for b in a..n {
                let mut acc = c.zero();
                for d in 0..n {
                    acc = c.fma(acc, g_inv.get(&[cc, d]), &first[d][a][b]);
                }
                gamma.set(&[cc, a, b], acc.clone());
                gamma.set(&[cc, b, a], acc);
            }
        }
    }
    Ok(gamma)
}

/// Mixed Riemann tensor `R_ab^c_d`, valence (down, down, up, down).
pub fn riemann_mixed<C: Calculus>(c: &mut C, gamma: &T<C>) -> Result<T<C>, GeometryError> {
    let n = gamma.dim();
    let mut dgamma = vec![vec![vec![vec![c.zero(); n]; n]; n]; n];
    for a in 0..n {
        for cc in 0..n {
            for b in 0..n {
                for d in b..n {
                    let v = c.partial(gamma.get(&[cc, b, d]), a)?;
                    dgamma[a][cc][b][d] = v.clone();
                    dgamma[a][cc][d][b] = v;
                }
            }
        }
    }
    let mut r = Tensor::from_fn(n, vec![Slot::Down, Slot::Down, Slot::Up, Slot::Down], |_| c.zero());
    for a in 0..n {
        for b in a + 1..n {
            for cc in 0..n {
                for d in 0..n {
                    let mut acc = c.sub(&dgamma[a][cc][b][d], &dgamma[b][cc][a][d]);
                    for e in 0..n {
                        acc = c.fma(acc, gamma.get(&[cc, a, e]), gamma.get(&[e, b, d]));
                        let neg = c.scale(-1.0, gamma.get(&[cc, b, e]));
                        acc = c.fma(acc, &neg, gamma.get(&[e, a, d]));
                    }
                    r.set(&[b, a, cc, d], c.scale(-1.0, &acc));
                    r.set(&[a, b, cc, d], acc);
                }
            }
        }
    }
    Ok(r)
}

/// Lowered Riemann tensor `R_abcd = sign · g_ce R_ab^e_d`.
pub fn riemann_lowered<C: Calculus>(c: &C, g: &T<C>, mixed: &T<C>, sign: f64) -> T<C> {
    let n = g.dim();
    let mut out = Tensor::from_fn(n, down(4), |_| c.zero());
    for idx in MultiIndex::new(n, 4) {
        let (a, b, cc, d) = (idx[0], idx[1], idx[2], idx[3]);
        if a >= b {
            continue;
        }
        let mut acc = c.zero();
        for e in 0..n {
            acc = c.fma(acc, g.get(&[cc, e]), mixed.get(&[a, b, e, d]));
        }
        let v = c.scale(sign, &acc);
        out.set(&[b, a, cc, d], c.scale(-1.0, &v));
        out.set(&[a, b, cc, d], v);
    }
    out
}

pub fn ricci<C: Calculus>(c: &C, mixed: &T<C>) -> T<C> {
    let n = mixed.dim();
    Tensor::from_fn(n, down(2), |i| {
        c.sum((0..n).map(|k| mixed.get(&[k, i[0], k, i[1]]).clone()))
    })
}

/// Full metric trace `g^ab t_ab` of a covariant 2-tensor.
pub fn trace<C: Calculus>(c: &C, g_inv: &T<C>, t: &T<C>) -> C::S {
    let n = t.dim();
    let mut acc = c.zero();
    for a in 0..n {
        for b in 0..n {
            acc = c.fma(acc, g_inv.get(&[a, b]), t.get(&[a, b]));
        }
    }
    acc
}

pub fn schouten<C: Calculus>(c: &C, g: &T<C>, ric: &T<C>, sc: &C::S) -> Result<T<C>, GeometryError> {
    let n = g.dim();
    if n < 3 {
        return Err(GeometryError::Dimension(format!(
            "Schouten tensor needs dimension ≥ 3, got {n}"
        )));
    }
    let k = c.scale(1.0 / (2.0 * (n as f64 - 1.0)), sc);
    let inv = 1.0 / (n as f64 - 2.0);
    Ok(Tensor::from_fn(n, down(2), |i| {
        let v = c.sub(ric.get(i), &c.mul(&k, g.get(i)));
        c.scale(inv, &v)
    }))
}

pub fn weyl<C: Calculus>(c: &C, g: &T<C>, riem: &T<C>, p: &T<C>) -> T<C> {
    let n = g.dim();
    let mut out = Tensor::from_fn(n, down(4), |_| c.zero());
    for idx in MultiIndex::new(n, 4) {
        let (a, b, cc, d) = (idx[0], idx[1], idx[2], idx[3]);
        if a >= b {
            continue;
        }
        let mut acc = riem.get(&idx).clone();
        let gp = |x: [usize; 2], y: [usize; 2]| (g.get(&x).clone(), p.get(&y).clone());
        for (sign, (gx, py)) in [
            (-1.0, gp([a, cc], [b, d])),
            (1.0, gp([a, d], [b, cc])),
            (1.0, gp([b, cc], [a, d])),
            (-1.0, gp([b, d], [a, cc])),
        ] {
            if !c.is_zero(&gx) && !c.is_zero(&py) {
                acc = c.fma(acc, &c.scale(sign, &gx), &py);
            }
        }
        out.set(&[b, a, cc, d], c.scale(-1.0, &acc));
        out.set(&[a, b, cc, d], acc);
    }
    out
}

/// Covariant derivative of a tensor of any valence; the new down slot is
/// placed first.
pub fn nabla<C: Calculus>(c: &mut C, gamma: &T<C>, t: &T<C>) -> Result<T<C>, GeometryError> {
    let n = t.dim();
    let rank = t.rank();
    let mut valence = vec![Slot::Down];
    valence.extend_from_slice(t.valence());
    let mut out = Tensor::from_fn(n, valence, |_| c.zero());
    let mut src = vec![0; rank];
    for idx in MultiIndex::new(n, rank + 1) {
        let e = idx[0];
        let rest = &idx[1..];
        let mut acc = c.partial(t.get(rest), e)?;
        for s in 0..rank {
            src.copy_from_slice(rest);
            for m in 0..n {
                src[s] = m;
                let comp = t.get(&src);
                if c.is_zero(comp) {
                    continue;
                }
                match t.valence()[s] {
                    Slot::Up => {
                        acc = c.fma(acc, gamma.get(&[rest[s], e, m]), comp);
                    }
                    Slot::Down => {
                        let gm = gamma.get(&[m, e, rest[s]]);
                        if !c.is_zero(gm) {
                            acc = c.fma(acc, &c.scale(-1.0, gm), comp);
                        }
                    }
                }
            }
        }
        out.set(&idx, acc);
    }
    Ok(out)
}

pub fn cotton<C: Calculus>(c: &C, dp: &T<C>) -> T<C> {
    let n = dp.dim();
    Tensor::from_fn(n, down(3), |i| {
        c.sub(dp.get(&[i[0], i[1], i[2]]), dp.get(&[i[1], i[0], i[2]]))
    })
}

/// Bach tensor from `ddp[e,f,b,c] = ∇_e ∇_f P_bc`.
pub fn bach<C: Calculus>(c: &C, g_inv: &T<C>, p: &T<C>, w: &T<C>, ddp: &T<C>) -> T<C> {
    let n = p.dim();
    let p_up = Tensor::from_fn(n, vec![Slot::Up, Slot::Up], |i| {
        let mut acc = c.zero();
        for e in 0..n {
            for f in 0..n {
                let gg = c.mul(g_inv.get(&[i[0], e]), g_inv.get(&[i[1], f]));
                acc = c.fma(acc, &gg, p.get(&[e, f]));
            }
        }
        acc
    });
    let mut out = Tensor::from_fn(n, down(2), |_| c.zero());
    for a in 0..n {
        for b in a..n {
            let mut acc = c.zero();
            for e in 0..n {
                for f in 0..n {
                    let gi = g_inv.get(&[e, f]);
                    if !c.is_zero(gi) {
                        acc = c.fma(acc, gi, ddp.get(&[e, f, a, b]));
                        acc = c.fma(acc, &c.scale(-1.0, gi), ddp.get(&[e, a, b, f]));
                    }
                    acc = c.fma(acc, p_up.get(&[e, f]), w.get(&[a, e, b, f]));
                }
            }
            out.set(&[a, b], acc.clone());
            out.set(&[b, a], acc);
        }
    }
    out
}

/// Lazily evaluated components of `∇^m T` for an all-covariant `T`.
///
/// Component `[e, rest..]` at level `m` is
/// `∂_e X(rest) − Σ_s Γ^k_{e rest_s} X(rest with slot s → k)` where `X` is
/// level `m − 1`. Only requested components and their dependencies are built.
pub struct Tower<S> {
    gamma: Tensor<S>,
    levels: Vec<HashMap<Vec<usize>, S>>,
    base: Tensor<S>,
}

impl<S: Clone> Tower<S> {
    pub fn new(gamma: Tensor<S>, base: Tensor<S>) -> Self {
        assert!(base.valence().iter().all(|s| *s == Slot::Down));
        Tower {
            gamma,
            levels: Vec::new(),
            base,
        }
    }

    pub fn base(&self) -> &Tensor<S> {
        &self.base
    }

    /// Component of `∇^m T` at `idx` (length `m + rank T`).
    pub fn comp<C: Calculus<S = S>>(&mut self, c: &mut C, m: usize, idx: &[usize]) -> Result<S, GeometryError> {
        if m == 0 {
            return Ok(self.base.get(idx).clone());
        }
        while self.levels.len() < m {
            self.levels.push(HashMap::new());
        }
        if let Some(v) = self.levels[m - 1].get(idx) {
            return Ok(v.clone());
        }
        let n = self.base.dim();
        let e = idx[0];
        let rest = &idx[1..];
        let inner = self.comp(c, m - 1, rest)?;
        let mut acc = c.partial(&inner, e)?;
        let mut src = rest.to_vec();
        for s in 0..rest.len() {
            for k in 0..n {
                let gm = self.gamma.get(&[k, e, rest[s]]).clone();
                if c.is_zero(&gm) {
                    continue;
                }
                src[s] = k;
                let x = self.comp(c, m - 1, &src)?;
                acc = c.fma(acc, &c.scale(-1.0, &gm), &x);
            }
            src[s] = rest[s];
        }
        self.levels[m - 1].insert(idx.to_vec(), acc.clone());
        Ok(acc)
    }
}

/// Every curvature quantity of one metric in one calculus.
pub struct Curvature<S> {
    pub g: Tensor<S>,
    pub g_inv: Tensor<S>,
    pub gamma: Tensor<S>,
    pub riemann_mixed: Tensor<S>,
    pub riemann: Tensor<S>,
    pub ricci: Tensor<S>,
    pub scalar: S,
    pub schouten: Tensor<S>,
    pub j: S,
    pub weyl: Tensor<S>,
    pub cotton: Tensor<S>,
    pub bach: Option<Tensor<S>>,
}

/// Run the whole pipeline. Requires dimension ≥ 3.
pub fn curvature<C: Calculus>(
    c: &mut C,
    g: T<C>,
    sign: f64,
    with_bach: bool,
) -> Result<Curvature<C::S>, GeometryError> {
    let g_inv = inverse(c, &g)?;
    let gamma = christoffel(c, &g, &g_inv)?;
    let rm = riemann_mixed(c, &gamma)?;
    let riem = riemann_lowered(c, &g, &rm, sign);
    let ric = ricci(c, &rm);
    let sc = trace(c, &g_inv, &ric);
    let p = schouten(c, &g, &ric, &sc)?;
    let j = trace(c, &g_inv, &p);
    let w = weyl(c, &g, &riem, &p);
    let dp = nabla(c, &gamma, &p)?;
    let cot = cotton(c, &dp);
    let bach = if with_bach {
        let ddp = nabla(c, &gamma, &dp)?;
        Some(bach(c, &g_inv, &p, &w, &ddp))
    } else {
        None
    };
    Ok(Curvature {
        g,
        g_inv,
        gamma,
        riemann_mixed: rm,
        riemann: riem,
        ricci: ric,
        scalar: sc,
        schouten: p,
        j,
        weyl: w,
        cotton: cot,
        bach,
    })
}
