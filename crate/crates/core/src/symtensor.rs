//! Sparse symmetric tensors over `H = R^d`.
//!
//! A [`SymKernel`] of order `n` stores one value per sorted multi-index; the
//! value is the entry of the full tensor at *every* arrangement of that index.
//! Summing over the full tensor therefore means weighting each stored entry by
//! its orbit size [`MultiIndex::count`].
//!
//! Two norms are in play. The ambient norm is the Euclidean norm of the full
//! tensor in `H^{⊗n}`. The modified norm of `H^{⊙n}` is `sqrt(n!)` times the
//! ambient norm, and it is the one that makes `I_n` an isometry:
//! `E[I_n(f)^2] = n! ‖f‖²_{H^{⊗n}}`.

use std::collections::BTreeMap;
use std::fmt;

use crate::combinatorics::{binomial, factorial};
use crate::error::{ChaosError, Result};
use crate::{ORDER_CAP, SUPPORT_CAP};

/// Entries whose magnitude falls below this after arithmetic are dropped.
pub const ZERO_TOL: f64 = 1e-15;

/// A sorted multiset of 1-based basis labels.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MultiIndex(Vec<u32>);

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl MultiIndex {
    /// Validates that `labels` is non-decreasing and inside `1..=dim`.
    pub fn new(labels: Vec<u32>, dim: usize) -> Result<Self> {
        if labels.windows(2).any(|w| w[0] > w[1]) {
            return Err(ChaosError::InvalidIndex {
                index: labels,
                reason: "labels must be sorted non-decreasing".into(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l as usize > dim) {
            return Err(ChaosError::InvalidIndex {
                index: labels,
                reason: format!("label {bad} outside 1..={dim}"),
            });
        }
        Ok(Self(labels))
    }

    /// Sorts `labels`; no range check.
    pub fn from_unsorted(mut labels: Vec<u32>) -> Self {
        labels.sort_unstable();
        Self(labels)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn labels(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Run-length profile: `(label, multiplicity)` in increasing label order.
    pub fn multiplicities(&self) -> Vec<(u32, usize)> {
        let mut out: Vec<(u32, usize)> = Vec::new();
        for &l in &self.0 {
            match out.last_mut() {
                Some((last, c)) if *last == l => *c += 1,
                _ => out.push((l, 1)),
            }
        }
        out
    }

    pub fn multiplicity(&self, label: u32) -> usize {
        self.0.iter().filter(|&&l| l == label).count()
    }

    /// Number of distinct arrangements: `n! / ∏ a_j!`.
    pub fn count(&self) -> f64 {
        let mut acc = 1.0;
        let mut seen = 0;
        for (_, a) in self.multiplicities() {
            seen += a;
            acc *= binomial(seen, a);
        }
        acc
    }

    /// Sorted union (multiset sum).
    pub fn merge(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Self(out)
    }

    /// Removes one copy of `label`, if present.
    pub fn remove_one(&self, label: u32) -> Option<Self> {
        let pos = self.0.iter().position(|&l| l == label)?;
        let mut v = self.0.clone();
        v.remove(pos);
        Some(Self(v))
    }

    /// All distinct sub-multisets of size `k`, each paired with its complement.
    pub fn splits(&self, k: usize) -> Vec<(Self, Self)> {
        let profile = self.multiplicities();
        let mut out = Vec::new();
        let mut take = vec![0usize; profile.len()];
        split_rec(&profile, 0, k, &mut take, &mut out);
        out
    }

    fn with_labels(labels: Vec<u32>) -> Self {
        Self(labels)
    }
}

fn split_rec(
    profile: &[(u32, usize)],
    pos: usize,
    remaining: usize,
    take: &mut Vec<usize>,
    out: &mut Vec<(MultiIndex, MultiIndex)>,
) {
    if pos == profile.len() {
        if remaining == 0 {
            let mut chosen = Vec::new();
            let mut rest = Vec::new();
            for (&(label, mult), &t) in profile.iter().zip(take.iter()) {
                chosen.extend(std::iter::repeat(label).take(t));
                rest.extend(std::iter::repeat(label).take(mult - t));
            }
            out.push((MultiIndex::with_labels(chosen), MultiIndex::with_labels(rest)));
        }
        return;
    }
    let tail: usize = profile[pos + 1..].iter().map(|p| p.1).sum();
    let lo = remaining.saturating_sub(tail);
    let hi = remaining.min(profile[pos].1);
    for t in lo..=hi {
        take[pos] = t;
        split_rec(profile, pos + 1, remaining - t, take, out);
    }
    take[pos] = 0;
}

/// `n!/∏ a_j!` for `alpha`.
pub fn count(alpha: &MultiIndex) -> f64 {
    alpha.count()
}

fn accumulate<K: Ord>(map: &mut BTreeMap<K, f64>, key: K, value: f64) {
    *map.entry(key).or_insert(0.0) += value;
}

fn prune<K: Ord>(map: &mut BTreeMap<K, f64>) {
    map.retain(|_, v| v.abs() >= ZERO_TOL);
}

/// A symmetric tensor `f ∈ H^{⊙n}`, the kernel of `I_n(f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymKernel {
    dim: usize,
    order: usize,
    entries: BTreeMap<MultiIndex, f64>,
}

impl SymKernel {
    /// Builds a kernel from sorted 1-based indices. Unsorted or out-of-range
    /// indices and duplicates are rejected.
    pub fn new<I>(dim: usize, order: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        if dim == 0 {
            return Err(ChaosError::InvalidArgument("dimension must be >= 1".into()));
        }
        if order > ORDER_CAP {
            return Err(ChaosError::OrderCap(order));
        }
        let mut map = BTreeMap::new();
        for (labels, value) in entries {
            if labels.len() != order {
                return Err(ChaosError::InvalidIndex {
                    index: labels,
                    reason: format!("length differs from order {order}"),
                });
            }
            if !value.is_finite() {
                return Err(ChaosError::InvalidIndex {
                    index: labels,
                    reason: "non-finite value".into(),
                });
            }
            let key = MultiIndex::new(labels, dim)?;
            if map.contains_key(&key) {
                return Err(ChaosError::InvalidIndex {
                    index: key.0,
                    reason: "duplicate multi-index".into(),
                });
            }
            map.insert(key, value);
        }
        prune(&mut map);
        check_support(map.len())?;
        Ok(Self {
            dim,
            order,
            entries: map,
        })
    }

    pub fn zero(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            entries: BTreeMap::new(),
        }
    }

    /// Order-0 kernel holding a constant.
    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(MultiIndex::empty(), value);
        prune(&mut entries);
        Self {
            dim,
            order: 0,
            entries,
        }
    }

    /// `scale · e_label^{⊗order}`.
    pub fn basis_power(dim: usize, label: u32, order: usize, scale: f64) -> Result<Self> {
        Self::new(dim, order, [(vec![label; order], scale)])
    }

    pub(crate) fn from_map(dim: usize, order: usize, mut entries: BTreeMap<MultiIndex, f64>) -> Self {
        prune(&mut entries);
        Self {
            dim,
            order,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, alpha: &MultiIndex) -> f64 {
        self.entries.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    /// Entries as plain `(labels, value)` pairs.
    pub fn to_entries(&self) -> Vec<(Vec<u32>, f64)> {
        self.entries.iter().map(|(k, &v)| (k.0.clone(), v)).collect()
    }

    /// The constant held by an order-0 kernel.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.order == 0).then(|| self.get(&MultiIndex::empty()))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(ChaosError::DimMismatch(self.dim, other.dim));
        }
        if self.order != other.order {
            return Err(ChaosError::OrderMismatch(self.order, other.order));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut map = self.entries.clone();
        for (k, &v) in &other.entries {
            accumulate(&mut map, k.clone(), v);
        }
        Ok(Self::from_map(self.dim, self.order, map))
    }

    pub fn scale(&self, s: f64) -> Self {
        let map = self.entries.iter().map(|(k, &v)| (k.clone(), v * s)).collect();
        Self::from_map(self.dim, self.order, map)
    }

    /// `⟨f, g⟩_{H^{⊗n}} = Σ_α count(α) f(α) g(α)`.
    pub fn inner_ambient(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        Ok(small
            .entries
            .iter()
            .filter_map(|(k, &v)| large.entries.get(k).map(|&w| k.count() * v * w))
            .sum())
    }

    pub fn norm_sq_ambient(&self) -> f64 {
        self.entries.iter().map(|(k, &v)| k.count() * v * v).sum()
    }

    pub fn norm_ambient(&self) -> f64 {
        self.norm_sq_ambient().sqrt()
    }

    /// `sqrt(n!) ‖f‖_{H^{⊗n}}`, which equals `sqrt(E[I_n(f)^2])`.
    pub fn norm_modified(&self) -> f64 {
        (factorial(self.order) * self.norm_sq_ambient()).sqrt()
    }

    /// The contraction `f ⊗_l g` of order `l`, before symmetrization.
    ///
    /// `(f ⊗_l g)(u, v) = Σ_w count(w) f(u ∪ w) g(v ∪ w)` over sorted `w` of
    /// length `l`. With `l = 0` this is the tensor product; with `l = n = m` it
    /// is the scalar `⟨f, g⟩` in a 0×0 block.
    pub fn contract(&self, other: &Self, l: usize) -> Result<BlockKernel> {
        if self.dim != other.dim {
            return Err(ChaosError::DimMismatch(self.dim, other.dim));
        }
        if l > self.order.min(other.order) {
            return Err(ChaosError::ContractionOrder {
                l,
                n: self.order,
                m: other.order,
            });
        }
        // index the right operand by its contracted part
        let mut by_shared: BTreeMap<MultiIndex, Vec<(MultiIndex, f64)>> = BTreeMap::new();
        for (beta, &gv) in &other.entries {
            for (w, v) in beta.splits(l) {
                by_shared.entry(w).or_default().push((v, gv));
            }
        }
        let mut out: BTreeMap<(MultiIndex, MultiIndex), f64> = BTreeMap::new();
        for (alpha, &fv) in &self.entries {
            for (w, u) in alpha.splits(l) {
                let Some(partners) = by_shared.get(&w) else {
                    continue;
                };
                let weight = w.count() * fv;
                for (v, gv) in partners {
                    accumulate(&mut out, (u.clone(), v.clone()), weight * gv);
                }
                if out.len() > SUPPORT_CAP {
                    return Err(ChaosError::SupportCap(out.len()));
                }
            }
        }
        prune(&mut out);
        Ok(BlockKernel {
            dim: self.dim,
            left: self.order - l,
            right: other.order - l,
            entries: out,
        })
    }

    /// `f ⊗̃_l g`: the symmetrized contraction.
    pub fn contract_sym(&self, other: &Self, l: usize) -> Result<SymKernel> {
        Ok(self.contract(other, l)?.symmetrize())
    }

    /// The kernel `f(·, e_j)` with one argument pinned to basis label `j`.
    pub fn slice(&self, j: u32) -> Result<SymKernel> {
        if self.order == 0 {
            return Err(ChaosError::OrderTooLow {
                required: 1,
                got: 0,
            });
        }
        if j == 0 || j as usize > self.dim {
            return Err(ChaosError::InvalidArgument(format!(
                "basis label {j} outside 1..={}",
                self.dim
            )));
        }
        let map = self
            .entries
            .iter()
            .filter_map(|(alpha, &v)| alpha.remove_one(j).map(|rest| (rest, v)))
            .collect();
        Ok(Self::from_map(self.dim, self.order - 1, map))
    }

    /// Relabels the basis: label `l` becomes `perm[l - 1]`.
    pub fn relabel(&self, perm: &[u32]) -> Result<Self> {
        if perm.len() != self.dim {
            return Err(ChaosError::DimMismatch(perm.len(), self.dim));
        }
        let map = self
            .entries
            .iter()
            .map(|(k, &v)| {
                let labels = k.0.iter().map(|&l| perm[l as usize - 1]).collect();
                (MultiIndex::from_unsorted(labels), v)
            })
            .collect();
        Ok(Self::from_map(self.dim, self.order, map))
    }
}

fn check_support(len: usize) -> Result<()> {
    if len > SUPPORT_CAP {
        Err(ChaosError::SupportCap(len))
    } else {
        Ok(())
    }
}

/// A tensor symmetric within its first `left` slots and within its last
/// `right` slots, keyed by the pair of sorted indices.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockKernel {
    dim: usize,
    left: usize,
    right: usize,
    entries: BTreeMap<(MultiIndex, MultiIndex), f64>,
}

impl BlockKernel {
    pub fn new<I>(dim: usize, left: usize, right: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, Vec<u32>, f64)>,
    {
        let mut map = BTreeMap::new();
        for (u, v, value) in entries {
            if u.len() != left || v.len() != right {
                return Err(ChaosError::InvalidIndex {
                    index: u.into_iter().chain(v).collect(),
                    reason: format!("block shape differs from ({left}, {right})"),
                });
            }
            let key = (MultiIndex::new(u, dim)?, MultiIndex::new(v, dim)?);
            if map.insert(key, value).is_some() {
                return Err(ChaosError::InvalidArgument("duplicate block index".into()));
            }
        }
        prune(&mut map);
        Ok(Self {
            dim,
            left,
            right,
            entries: map,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn left_order(&self) -> usize {
        self.left
    }

    pub fn right_order(&self) -> usize {
        self.right
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, u: &MultiIndex, v: &MultiIndex) -> f64 {
        // the tuple key forces a clone here; lookups are rare outside tests
        self.entries
            .get(&(u.clone(), v.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &MultiIndex, f64)> + '_ {
        self.entries.iter().map(|((u, v), &x)| (u, v, x))
    }

    pub fn to_entries(&self) -> Vec<(Vec<u32>, Vec<u32>, f64)> {
        self.iter()
            .map(|(u, v, x)| (u.0.clone(), v.0.clone(), x))
            .collect()
    }

    /// The value of a 0×0 block.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.left == 0 && self.right == 0)
            .then(|| self.get(&MultiIndex::empty(), &MultiIndex::empty()))
    }

    /// `Σ_{(u,v)} count(u) count(v) T(u,v)^2`.
    pub fn norm_sq_ambient(&self) -> f64 {
        self.iter().map(|(u, v, x)| u.count() * v.count() * x * x).sum()
    }

    pub fn norm_ambient(&self) -> f64 {
        self.norm_sq_ambient().sqrt()
    }

    /// Inner product in `H^{⊗(p+q)}` between blocks of the same shape.
    pub fn inner_ambient(&self, other: &Self) -> Result<f64> {
        if self.dim != other.dim {
            return Err(ChaosError::DimMismatch(self.dim, other.dim));
        }
        if (self.left, self.right) != (other.left, other.right) {
            return Err(ChaosError::OrderMismatch(
                self.left + self.right,
                other.left + other.right,
            ));
        }
        Ok(self
            .entries
            .iter()
            .filter_map(|(key, &x)| {
                other
                    .entries
                    .get(key)
                    .map(|&y| key.0.count() * key.1.count() * x * y)
            })
            .sum())
    }

    /// Average over all arrangements of the `p + q` slots.
    ///
    /// An entry `T(u, v)` lands on `γ = u ∪ v` with weight
    /// `∏_j C(γ_j, u_j) / C(p+q, p)`: the fraction of position subsets of `γ`
    /// that carry exactly the labels of `u`.
    pub fn symmetrize(&self) -> SymKernel {
        let total = binomial(self.left + self.right, self.left);
        let mut out = BTreeMap::new();
        for ((u, v), &x) in &self.entries {
            let gamma = u.merge(v);
            let ways: f64 = gamma
                .multiplicities()
                .into_iter()
                .map(|(label, c)| binomial(c, u.multiplicity(label)))
                .product();
            accumulate(&mut out, gamma, ways / total * x);
        }
        SymKernel::from_map(self.dim, self.left + self.right, out)
    }
}

/// Free-function spellings of the kernel operations.
pub fn inner_ambient(f: &SymKernel, g: &SymKernel) -> Result<f64> {
    f.inner_ambient(g)
}

pub fn norm_modified(f: &SymKernel) -> f64 {
    f.norm_modified()
}

pub fn contract(f: &SymKernel, g: &SymKernel, l: usize) -> Result<BlockKernel> {
    f.contract(g, l)
}

pub fn symmetrize_block(t: &BlockKernel) -> SymKernel {
    t.symmetrize()
}

pub fn slice(f: &SymKernel, j: u32) -> Result<SymKernel> {
    f.slice(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use wiener_oracle::DenseTensor;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::from_unsorted(v.to_vec())
    }

    fn dense(f: &SymKernel) -> DenseTensor {
        DenseTensor::from_symmetric(f.dim(), f.order(), &f.to_entries())
    }

    fn dense_block(t: &BlockKernel) -> DenseTensor {
        DenseTensor::from_block(t.dim(), t.left_order(), t.right_order(), &t.to_entries())
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn count_examples() {
        assert_eq!(count(&mi(&[1, 2, 3])), 6.0);
        assert_eq!(count(&mi(&[1, 1])), 1.0);
        assert_eq!(count(&mi(&[1, 1, 2])), 3.0);
        assert_eq!(count(&MultiIndex::empty()), 1.0);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(matches!(
            SymKernel::new(3, 2, [(vec![2, 1], 1.0)]),
            Err(ChaosError::InvalidIndex { .. })
        ));
        assert!(SymKernel::new(2, 2, [(vec![1, 3], 1.0)]).is_err());
        assert!(SymKernel::new(2, 2, [(vec![0, 1], 1.0)]).is_err());
        assert!(SymKernel::new(2, 2, [(vec![1], 1.0)]).is_err());
        assert!(SymKernel::new(2, 2, [(vec![1, 2], 1.0), (vec![1, 2], 2.0)]).is_err());
    }

    #[test]
    fn inner_examples() {
        let e11 = SymKernel::basis_power(2, 1, 2, 1.0).unwrap();
        let e22 = SymKernel::basis_power(2, 2, 2, 1.0).unwrap();
        assert_eq!(e11.inner_ambient(&e11).unwrap(), 1.0);
        assert_eq!(e11.inner_ambient(&e22).unwrap(), 0.0);
        let off = SymKernel::new(2, 2, [(vec![1, 2], 1.0)]).unwrap();
        let oracle = dense(&off).norm_sq();
        assert_eq!(oracle, 2.0);
        assert_eq!(off.inner_ambient(&off).unwrap(), oracle);
        assert!(e11.inner_ambient(&SymKernel::zero(3, 2)).is_err());
        assert!(e11.inner_ambient(&SymKernel::zero(2, 1)).is_err());
    }

    #[test]
    fn norm_modified_examples() {
        let e11 = SymKernel::basis_power(2, 1, 2, 1.0).unwrap();
        assert!((e11.norm_modified() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(SymKernel::basis_power(2, 1, 1, 1.0).unwrap().norm_modified(), 1.0);
        let f = SymKernel::new(2, 2, [(vec![1, 1], 0.5), (vec![2, 2], 0.5)]).unwrap();
        let oracle = (2.0 * dense(&f).norm_sq()).sqrt();
        assert_eq!(oracle, 1.0);
        assert!((f.norm_modified() - oracle).abs() < 1e-15);
    }

    #[test]
    fn contract_examples() {
        let e11 = SymKernel::basis_power(2, 1, 2, 1.0).unwrap();
        let c = e11.contract(&e11, 1).unwrap();
        assert_eq!((c.left_order(), c.right_order()), (1, 1));
        assert_eq!(c.len(), 1);
        assert_eq!(c.get(&mi(&[1]), &mi(&[1])), 1.0);

        let s = 0.5f64.sqrt();
        let f = SymKernel::new(2, 2, [(vec![1, 1], s), (vec![2, 2], s)]).unwrap();
        let full = f.contract(&f, 2).unwrap();
        assert!((full.as_scalar().unwrap() - 1.0).abs() < 1e-15);

        assert!(matches!(
            f.contract(&f, 3),
            Err(ChaosError::ContractionOrder { .. })
        ));
        assert!(f.contract(&SymKernel::zero(3, 2), 1).is_err());
    }

    #[test]
    fn contraction_of_matrices_is_matrix_product() {
        // A, B symmetric 3x3 as order-2 kernels
        let a = SymKernel::new(
            3,
            2,
            [
                (vec![1, 1], 1.0),
                (vec![1, 2], 2.0),
                (vec![1, 3], -1.0),
                (vec![2, 2], 0.5),
                (vec![3, 3], 3.0),
            ],
        )
        .unwrap();
        let b = SymKernel::new(
            3,
            2,
            [(vec![1, 2], 1.0), (vec![2, 3], 4.0), (vec![3, 3], -2.0)],
        )
        .unwrap();
        let am = [[1.0, 2.0, -1.0], [2.0, 0.5, 0.0], [-1.0, 0.0, 3.0]];
        let bm = [[0.0, 1.0, 0.0], [1.0, 0.0, 4.0], [0.0, 4.0, -2.0]];
        let c = a.contract(&b, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected: f64 = (0..3).map(|k| am[i][k] * bm[k][j]).sum();
                let got = c.get(&mi(&[i as u32 + 1]), &mi(&[j as u32 + 1]));
                assert!((got - expected).abs() < 1e-14, "({i},{j}) {got} vs {expected}");
            }
        }
    }

    #[test]
    fn symmetrize_examples() {
        let t = BlockKernel::new(2, 1, 1, [(vec![1], vec![1], 1.0)]).unwrap();
        let s = t.symmetrize();
        assert_eq!(s.get(&mi(&[1, 1])), 1.0);
        let t = BlockKernel::new(2, 1, 1, [(vec![1], vec![2], 1.0)]).unwrap();
        let s = t.symmetrize();
        assert_eq!(s.get(&mi(&[1, 2])), 0.5);

        let m = [[0.3, -1.2], [0.7, 2.0]];
        let t = BlockKernel::new(
            2,
            1,
            1,
            (0..2).flat_map(|i| (0..2).map(move |j| (vec![i + 1], vec![j + 1], m[i as usize][j as usize]))),
        )
        .unwrap();
        let s = t.symmetrize();
        for i in 0..2 {
            for j in i..2 {
                let expected = 0.5 * (m[i][j] + m[j][i]);
                let got = s.get(&mi(&[i as u32 + 1, j as u32 + 1]));
                assert!((got - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn slice_examples() {
        let e11 = SymKernel::basis_power(2, 1, 2, 1.0).unwrap();
        let s1 = e11.slice(1).unwrap();
        assert_eq!(s1.order(), 1);
        assert_eq!(s1.get(&mi(&[1])), 1.0);
        assert!(e11.slice(2).unwrap().is_zero());
        let off = SymKernel::new(2, 2, [(vec![1, 2], 1.0)]).unwrap();
        let s = off.slice(2).unwrap();
        let pinned = dense(&off).pin_last(1);
        assert_eq!(s.get(&mi(&[1])), pinned.get(&[0]));
        assert_eq!(s.get(&mi(&[1])), 1.0);
        assert!(SymKernel::scalar(2, 1.0).slice(1).is_err());
        assert!(e11.slice(3).is_err());
    }

    #[test]
    fn degenerate_orders() {
        let c = SymKernel::scalar(3, 2.5);
        let g = SymKernel::basis_power(3, 2, 2, 1.5).unwrap();
        let t = c.contract(&g, 0).unwrap();
        assert_eq!((t.left_order(), t.right_order()), (0, 2));
        let s = t.symmetrize();
        assert_eq!(s, g.scale(2.5));
        assert_eq!(c.contract(&c, 0).unwrap().as_scalar(), Some(6.25));
    }

    #[test]
    fn splits_are_distinct() {
        let a = mi(&[1, 1, 2, 3]);
        let s = a.splits(2);
        // {1,1},{1,2},{1,3},{2,3}
        assert_eq!(s.len(), 4);
        for (w, rest) in &s {
            assert_eq!(w.merge(rest), a);
        }
        assert_eq!(a.splits(0).len(), 1);
        assert_eq!(a.splits(5).len(), 0);
    }

    fn arb_kernel(dim: usize, order: usize) -> impl Strategy<Value = SymKernel> {
        let idx = proptest::collection::vec(1..=dim as u32, order);
        proptest::collection::vec((idx, -2.0f64..2.0), 1..6).prop_map(move |raw| {
            let mut map = BTreeMap::new();
            for (labels, v) in raw {
                map.insert(MultiIndex::from_unsorted(labels), v);
            }
            SymKernel::from_map(dim, order, map)
        })
    }

    fn arb_pair() -> impl Strategy<Value = (SymKernel, SymKernel)> {
        (1usize..=4, 0usize..=3, 0usize..=3)
            .prop_flat_map(|(d, n, m)| (arb_kernel(d, n), arb_kernel(d, m)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn contraction_matches_dense((f, g) in arb_pair()) {
            let (df, dg) = (dense(&f), dense(&g));
            for l in 0..=f.order().min(g.order()) {
                let sparse = dense_block(&f.contract(&g, l).unwrap());
                let oracle = df.contract(&dg, l);
                let diff: f64 = sparse.data.iter().zip(&oracle.data).map(|(a, b)| (a - b).powi(2)).sum();
                prop_assert!(diff.sqrt() <= 1e-10 * oracle.norm_sq().sqrt().max(1e-300));

                let sym = dense(&f.contract_sym(&g, l).unwrap());
                let sym_oracle = oracle.symmetrize();
                let diff: f64 = sym.data.iter().zip(&sym_oracle.data).map(|(a, b)| (a - b).powi(2)).sum();
                prop_assert!(diff.sqrt() <= 1e-10 * sym_oracle.norm_sq().sqrt().max(1e-300));
            }
        }

        #[test]
        fn contraction_identity_and_cauchy_schwarz((f, g) in arb_pair()) {
            let (n, m) = (f.order(), g.order());
            for r in 1..=n.min(m) {
                let lhs = f.contract(&g, r).unwrap().norm_sq_ambient();
                let ff = f.contract(&f, n - r).unwrap();
                let gg = g.contract(&g, m - r).unwrap();
                let rhs = ff.inner_ambient(&gg).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-12));
                prop_assert!(lhs <= ff.norm_ambient() * gg.norm_ambient() * (1.0 + 1e-12) + 1e-14);
            }
        }

        #[test]
        fn symmetrization_contracts_norm((f, g) in arb_pair()) {
            for l in 0..=f.order().min(g.order()) {
                let t = f.contract(&g, l).unwrap();
                prop_assert!(t.symmetrize().norm_ambient() <= t.norm_ambient() * (1.0 + 1e-12) + 1e-15);
            }
        }

        #[test]
        fn symmetrize_is_idempotent_on_symmetric_input(f in (1usize..=3, 1usize..=3).prop_flat_map(|(d, n)| arb_kernel(d, n))) {
            // f ⊗_0 (scalar 1) is f viewed as an (n, 0) block
            let one = SymKernel::scalar(f.dim(), 1.0);
            let t = f.contract(&one, 0).unwrap();
            prop_assert_eq!(t.symmetrize(), f);
        }

        #[test]
        fn inner_and_norms_match_dense((f, g) in arb_pair()) {
            let df = dense(&f);
            prop_assert!(close(f.norm_sq_ambient(), df.norm_sq(), 1e-12) || df.norm_sq() == 0.0);
            if f.order() == g.order() {
                let ip = f.inner_ambient(&g).unwrap();
                let oracle = df.inner(&dense(&g));
                prop_assert!((ip - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
            }
        }

        #[test]
        fn invariant_under_label_permutation((f, g) in arb_pair(), seed in 0u64..1000) {
            let d = f.dim();
            let mut perm: Vec<u32> = (1..=d as u32).collect();
            // cheap deterministic shuffle
            let mut s = seed;
            for i in (1..d).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let (pf, pg) = (f.relabel(&perm).unwrap(), g.relabel(&perm).unwrap());
            for l in 0..=f.order().min(g.order()) {
                let a = f.contract(&g, l).unwrap().norm_sq_ambient();
                let b = pf.contract(&pg, l).unwrap().norm_sq_ambient();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
