//! Dense multi-index tensors and the index operations used on them.
//!
//! Storage is row-major over `dim^rank` entries; the slot list records which
//! indices are contravariant (`Up`) and which covariant (`Down`). The same
//! container holds numbers at a point (`TensorValue`) and symbolic fields
//! (`Tensor<Expr>`).

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("rank mismatch: expected rank {expected}, got {got}")]
    Rank { expected: usize, got: usize },
    #[error("cannot contract slot {0} with slot {1}: both are {2:?}")]
    LikeSlots(usize, usize, Slot),
    #[error("slot {slot} is {got:?}, expected {expected:?}")]
    SlotKind { slot: usize, expected: Slot, got: Slot },
    #[error("slot index {0} out of range")]
    SlotRange(usize),
    #[error("matrix is singular (condition number {0:e})")]
    Singular(f64),
}

/// Absolute tolerance for identity checks on tensors of the given magnitude.
pub fn tolerance(scale: f64) -> f64 {
    1e-12 * scale.max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dim: usize,
    valence: Vec<Slot>,
    entries: Vec<T>,
}

pub type TensorValue = Tensor<f64>;

/// Iterates all multi-indices of a given rank in row-major order.
pub struct MultiIndex {
    dim: usize,
    current: Vec<usize>,
    done: bool,
}

impl MultiIndex {
    pub fn new(dim: usize, rank: usize) -> Self {
        MultiIndex {
            dim,
            current: vec![0; rank],
            done: dim == 0 && rank > 0,
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut k = self.current.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.current[k] += 1;
            if self.current[k] < self.dim {
                break;
            }
            self.current[k] = 0;
        }
        Some(out)
    }
}

impl<T: Clone> Tensor<T> {
    pub fn from_fn(dim: usize, valence: Vec<Slot>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let entries = MultiIndex::new(dim, valence.len()).map(|i| f(&i)).collect();
        Tensor { dim, valence, entries }
    }

    pub fn try_from_fn<E>(
        dim: usize,
        valence: Vec<Slot>,
        mut f: impl FnMut(&[usize]) -> Result<T, E>,
    ) -> Result<Self, E> {
        let entries = MultiIndex::new(dim, valence.len())
            .map(|i| f(&i))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Tensor { dim, valence, entries })
    }

    pub fn from_entries(dim: usize, valence: Vec<Slot>, entries: Vec<T>) -> Self {
        assert_eq!(
            entries.len(),
            dim.pow(valence.len() as u32),
            "entry count must be dim^rank"
        );
        Tensor { dim, valence, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.valence.len()
    }

    pub fn valence(&self) -> &[Slot] {
        &self.valence
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.dim);
            acc * self.dim + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.entries[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.entries[o] = v;
    }

    pub fn indices(&self) -> MultiIndex {
        MultiIndex::new(self.dim, self.rank())
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            dim: self.dim,
            valence: self.valence.clone(),
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn try_map<U: Clone, E>(&self, f: impl FnMut(&T) -> Result<U, E>) -> Result<Tensor<U>, E> {
        Ok(Tensor {
            dim: self.dim,
            valence: self.valence.clone(),
            entries: self.entries.iter().map(f).collect::<Result<_, E>>()?,
        })
    }
}

impl TensorValue {
    pub fn zeros(dim: usize, valence: Vec<Slot>) -> Self {
        Tensor::from_fn(dim, valence, |_| 0.0)
    }

    /// Mixed identity `δ^a_b`.
    pub fn identity(dim: usize) -> Self {
        Tensor::from_fn(
            dim,
            vec![Slot::Up, Slot::Down],
            |i| if i[0] == i[1] { 1.0 } else { 0.0 },
        )
    }

    pub fn from_matrix(m: &DMatrix<f64>, valence: [Slot; 2]) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Tensor::from_fn(m.nrows(), valence.to_vec(), |i| m[(i[0], i[1])])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank(), 2);
        DMatrix::from_fn(self.dim, self.dim, |i, j| *self.get(&[i, j]))
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_entries(1, vec![], vec![v])
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), TensorError> {
        if self.dim != other.dim {
            return Err(TensorError::Dimension(self.dim, other.dim));
        }
        if self.valence != other.valence {
            return Err(TensorError::Rank {
                expected: self.rank(),
                got: other.rank(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_shape(other)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_entries(self.dim, self.valence.clone(), entries))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.add(&other.scale(-1.0))
    }

    /// Largest entrywise deviation between two tensors of the same shape.
    pub fn max_diff(&self, other: &Self) -> Result<f64, TensorError> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        assert_eq!(self.rank(), 2);
        (0..self.dim).all(|i| (0..self.dim).all(|j| (self.get(&[i, j]) - self.get(&[j, i])).abs() <= tol))
    }

    pub fn outer(&self, other: &Self) -> Result<Self, TensorError> {
        if self.dim != other.dim {
            return Err(TensorError::Dimension(self.dim, other.dim));
        }
        let mut valence = self.valence.clone();
        valence.extend_from_slice(&other.valence);
        let n = other.entries.len();
        let entries = self
            .entries
            .iter()
            .flat_map(|a| other.entries.iter().map(move |b| a * b))
            .collect::<Vec<_>>();
        debug_assert_eq!(entries.len(), self.entries.len() * n);
        Ok(Tensor::from_entries(self.dim, valence, entries))
    }

    /// Contract `self` with `other` over the listed `(slot of self, slot of other)`
    /// pairs. Each pair must join an up slot with a down slot. The result carries
    /// the unpaired slots of `self` followed by those of `other`.
    pub fn contract(&self, other: &Self, pairs: &[(usize, usize)]) -> Result<Self, TensorError> {
        if self.dim != other.dim {
            return Err(TensorError::Dimension(self.dim, other.dim));
        }
        for &(i, j) in pairs {
            let a = *self.valence.get(i).ok_or(TensorError::SlotRange(i))?;
            let b = *other.valence.get(j).ok_or(TensorError::SlotRange(j))?;
            if a == b {
                return Err(TensorError::LikeSlots(i, j, a));
            }
        }
        let free_a: Vec<usize> = (0..self.rank()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
        let free_b: Vec<usize> = (0..other.rank()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
        let mut valence: Vec<Slot> = free_a.iter().map(|&i| self.valence[i]).collect();
        valence.extend(free_b.iter().map(|&j| other.valence[j]));

        let mut ia = vec![0; self.rank()];
        let mut ib = vec![0; other.rank()];
        let out = Tensor::from_fn(self.dim, valence, |idx| {
            for (k, &i) in free_a.iter().enumerate() {
                ia[i] = idx[k];
            }
            for (k, &j) in free_b.iter().enumerate() {
                ib[j] = idx[free_a.len() + k];
            }
            let mut total = 0.0;
            for summed in MultiIndex::new(self.dim, pairs.len()) {
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    ia[i] = summed[p];
                    ib[j] = summed[p];
                }
                total += self.get(&ia) * other.get(&ib);
            }
            total
        });
        Ok(out)
    }

    /// Trace over two slots of opposite kind.
    pub fn trace(&self, i: usize, j: usize) -> Result<Self, TensorError> {
        let a = *self.valence.get(i).ok_or(TensorError::SlotRange(i))?;
        let b = *self.valence.get(j).ok_or(TensorError::SlotRange(j))?;
        if a == b {
            return Err(TensorError::LikeSlots(i, j, a));
        }
        let free: Vec<usize> = (0..self.rank()).filter(|k| *k != i && *k != j).collect();
        let valence = free.iter().map(|&k| self.valence[k]).collect();
        let mut full = vec![0; self.rank()];
        Ok(Tensor::from_fn(self.dim, valence, |idx| {
            for (k, &s) in free.iter().enumerate() {
                full[s] = idx[k];
            }
            (0..self.dim)
                .map(|m| {
                    full[i] = m;
                    full[j] = m;
                    *self.get(&full)
                })
                .sum()
        }))
    }

    /// Metric trace `g^{ij} t_{..i..j..}` over two down slots.
    pub fn metric_trace(&self, i: usize, j: usize, g_inv: &Self) -> Result<Self, TensorError> {
        let raised = self.raise(i, g_inv)?;
        raised.trace(i, j)
    }

    /// Move the leading slot of `t` to position `slot`.
    fn restore_slot(t: Self, slot: usize) -> Self {
        let rank = t.rank();
        if slot == 0 {
            return t;
        }
        let mut valence = t.valence.clone();
        let moved = valence.remove(0);
        valence.insert(slot, moved);
        let mut src = vec![0; rank];
        Tensor::from_fn(t.dim, valence, |idx| {
            src[0] = idx[slot];
            let mut k = 1;
            for (p, &v) in idx.iter().enumerate() {
                if p != slot {
                    src[k] = v;
                    k += 1;
                }
            }
            *t.get(&src)
        })
    }

    pub fn raise(&self, slot: usize, g_inv: &Self) -> Result<Self, TensorError> {
        self.change_slot(slot, g_inv, Slot::Down, Slot::Up)
    }

    pub fn lower(&self, slot: usize, g: &Self) -> Result<Self, TensorError> {
        self.change_slot(slot, g, Slot::Up, Slot::Down)
    }

    fn change_slot(&self, slot: usize, metric: &Self, from: Slot, to: Slot) -> Result<Self, TensorError> {
        let got = *self.valence.get(slot).ok_or(TensorError::SlotRange(slot))?;
        if got != from {
            return Err(TensorError::SlotKind {
                slot,
                expected: from,
                got,
            });
        }
        if metric.rank() != 2 || metric.valence.iter().any(|s| *s != to) {
            return Err(TensorError::SlotKind {
                slot: 0,
                expected: to,
                got: metric.valence.first().copied().unwrap_or(from),
            });
        }
        // raw index sum: metric_{a i} t_{.. i ..}
        let rank = self.rank();
        let mut valence = vec![to];
        valence.extend((0..rank).filter(|k| *k != slot).map(|k| self.valence[k]));
        let mut src = vec![0; rank];
        let raw = Tensor::from_fn(self.dim, valence, |idx| {
            let mut k = 1;
            for p in 0..rank {
                if p != slot {
                    src[p] = idx[k];
                    k += 1;
                }
            }
            (0..self.dim)
                .map(|m| {
                    src[slot] = m;
                    metric.get(&[idx[0], m]) * self.get(&src)
                })
                .sum()
        });
        Ok(Self::restore_slot(raw, slot))
    }
}

/// Inverse of a symmetric rank-2 tensor, flipping both slot kinds.
pub fn invert(g: &TensorValue) -> Result<TensorValue, TensorError> {
    if g.rank() != 2 {
        return Err(TensorError::Rank {
            expected: 2,
            got: g.rank(),
        });
    }
    let m = g.to_matrix();
    let cond = condition_number(&m);
    if !cond.is_finite() || cond > 1e14 {
        return Err(TensorError::Singular(cond));
    }
    let inv = m.try_inverse().ok_or(TensorError::Singular(f64::INFINITY))?;
    let flipped = g
        .valence()
        .iter()
        .map(|s| if *s == Slot::Up { Slot::Down } else { Slot::Up });
    let flipped: Vec<Slot> = flipped.collect();
    Ok(TensorValue::from_matrix(&inv, [flipped[0], flipped[1]]))
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Trace-free symmetric part `t_((ab))o` of a covariant 2-tensor with
/// respect to the metric whose inverse is `g_inv`.
pub fn symmetrize_tf(t: &TensorValue, g_inv: &TensorValue) -> Result<TensorValue, TensorError> {
    if t.dim() != g_inv.dim() {
        return Err(TensorError::Dimension(t.dim(), g_inv.dim()));
    }
    if t.rank() != 2 || g_inv.rank() != 2 {
        return Err(TensorError::Rank {
            expected: 2,
            got: if t.rank() != 2 { t.rank() } else { g_inv.rank() },
        });
    }
    for (slot, &s) in t.valence().iter().enumerate() {
        if s != Slot::Down {
            return Err(TensorError::SlotKind {
                slot,
                expected: Slot::Down,
                got: s,
            });
        }
    }
    let g = invert(g_inv)?;
    let d = t.dim();
    let sym = Tensor::from_fn(d, vec![Slot::Down, Slot::Down], |i| {
        0.5 * (t.get(&[i[0], i[1]]) + t.get(&[i[1], i[0]]))
    });
    let trace: f64 = (0..d)
        .flat_map(|a| (0..d).map(move |b| (a, b)))
        .map(|(a, b)| g_inv.get(&[a, b]) * sym.get(&[a, b]))
        .sum();
    let k = trace / d as f64;
    Ok(Tensor::from_fn(d, vec![Slot::Down, Slot::Down], |i| {
        sym.get(i) - k * g.get(i)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn down2(d: usize, f: impl Fn(usize, usize) -> f64) -> TensorValue {
        Tensor::from_fn(d, vec![Slot::Down, Slot::Down], |i| f(i[0], i[1]))
    }

    fn up2(d: usize, f: impl Fn(usize, usize) -> f64) -> TensorValue {
        Tensor::from_fn(d, vec![Slot::Up, Slot::Up], |i| f(i[0], i[1]))
    }

    fn sample_metric(d: usize) -> TensorValue {
        down2(d, |i, j| {
            if i == j {
                2.0 + i as f64
            } else {
                0.3 / (1.0 + (i + j) as f64)
            }
        })
    }

    #[test]
    fn metric_has_zero_trace_free_part() {
        let g = sample_metric(4);
        let gi = invert(&g).unwrap();
        assert!(symmetrize_tf(&g, &gi).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn antisymmetric_part_is_killed() {
        let d = 3;
        let a = down2(d, |i, j| i as f64 - j as f64);
        let gi = invert(&sample_metric(d)).unwrap();
        assert!(symmetrize_tf(&a, &gi).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn flat_two_dimensional_example() {
        let t = down2(2, |i, j| if i == 0 && j == 0 { 2.0 } else { 0.0 });
        let out = symmetrize_tf(&t, &up2(2, |i, j| (i == j) as u8 as f64)).unwrap();
        assert_eq!(out.entries(), &[1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let t = down2(2, |_, _| 1.0);
        let gi = up2(3, |i, j| (i == j) as u8 as f64);
        assert_eq!(symmetrize_tf(&t, &gi), Err(TensorError::Dimension(2, 3)));
    }

    #[test]
    fn contraction_with_identity_and_inverse() {
        let d = 3;
        let v = Tensor::from_fn(d, vec![Slot::Down], |i| 1.0 + i[0] as f64);
        let delta = TensorValue::identity(d);
        // δ^a_b v_a -> v_b
        let out = delta.contract(&v, &[(0, 0)]).unwrap();
        assert_eq!(out.entries(), v.entries());
        assert_eq!(out.valence(), &[Slot::Down]);

        let g = sample_metric(d);
        let gi = invert(&g).unwrap();
        let mixed = gi.contract(&g, &[(1, 0)]).unwrap();
        assert_eq!(mixed.valence(), &[Slot::Up, Slot::Down]);
        assert!(mixed.max_diff(&delta).unwrap() < 1e-12);
    }

    #[test]
    fn like_slots_cannot_be_contracted() {
        let g = sample_metric(3);
        assert!(matches!(
            g.contract(&g, &[(0, 0)]),
            Err(TensorError::LikeSlots(0, 0, Slot::Down))
        ));
    }

    #[test]
    fn singular_inverse_is_rejected() {
        let g = down2(2, |_, _| 1.0);
        assert!(matches!(invert(&g), Err(TensorError::Singular(_))));
    }

    fn arb_tensor(d: usize, rank: usize) -> impl Strategy<Value = TensorValue> {
        prop::collection::vec(-3.0..3.0f64, d.pow(rank as u32))
            .prop_map(move |e| Tensor::from_entries(d, vec![Slot::Down; rank], e))
    }

    fn arb_metric(d: usize) -> impl Strategy<Value = TensorValue> {
        prop::collection::vec(-1.0..1.0f64, d * d).prop_map(move |e| {
            // A A^T + d I is symmetric positive definite
            let a = DMatrix::from_vec(d, d, e);
            let m = &a * a.transpose() + DMatrix::identity(d, d) * d as f64;
            TensorValue::from_matrix(&m, [Slot::Down, Slot::Down])
        })
    }

    proptest! {
        #[test]
        fn trace_free_projection_is_idempotent(t in arb_tensor(4, 2), g in arb_metric(4)) {
            let gi = invert(&g).unwrap();
            let once = symmetrize_tf(&t, &gi).unwrap();
            let twice = symmetrize_tf(&once, &gi).unwrap();
            let scale = t.max_abs().max(1.0);
            prop_assert!(once.max_diff(&twice).unwrap() <= tolerance(scale) * 10.0);
            let tr = once.metric_trace(0, 1, &gi).unwrap();
            prop_assert!(tr.entries()[0].abs() <= tolerance(scale) * 10.0);
        }

        #[test]
        fn raise_then_lower_is_identity(t in arb_tensor(3, 3), g in arb_metric(3), slot in 0usize..3) {
            let gi = invert(&g).unwrap();
            let back = t.raise(slot, &gi).unwrap().lower(slot, &g).unwrap();
            prop_assert_eq!(back.valence(), t.valence());
            prop_assert!(back.max_diff(&t).unwrap() <= tolerance(t.max_abs()) * 10.0);
        }

        #[test]
        fn contraction_is_bilinear(
            a in arb_tensor(3, 2), b in arb_tensor(3, 2), c in arb_tensor(3, 1), s in -2.0..2.0f64
        ) {
            let gi = invert(&TensorValue::from_matrix(&DMatrix::identity(3, 3), [Slot::Down, Slot::Down])).unwrap();
            let a_up = a.raise(1, &gi).unwrap();
            let b_up = b.raise(1, &gi).unwrap();
            let lhs = a_up.add(&b_up.scale(s)).unwrap().contract(&c, &[(1, 0)]).unwrap();
            let rhs = a_up.contract(&c, &[(1, 0)]).unwrap()
                .add(&b_up.contract(&c, &[(1, 0)]).unwrap().scale(s)).unwrap();
            prop_assert!(lhs.max_diff(&rhs).unwrap() < 1e-12);
        }
    }
}
