//! Dense row-major tensors over `R^d`.

/// A full `d^order` array. Axis 0 is the most significant digit of the flat index.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    pub dim: usize,
    pub order: usize,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    /// Expand a sparse symmetric kernel: every permutation of every stored
    /// sorted index receives the stored value.
    pub fn from_symmetric(dim: usize, order: usize, entries: &[(Vec<u32>, f64)]) -> Self {
        let mut t = Self::zeros(dim, order);
        for (idx, value) in entries {
            assert_eq!(idx.len(), order);
            let zero_based: Vec<usize> = idx.iter().map(|&l| l as usize - 1).collect();
            for perm in permutations(order) {
                let arranged: Vec<usize> = perm.iter().map(|&p| zero_based[p]).collect();
                let flat = t.flat(&arranged);
                t.data[flat] = *value;
            }
        }
        t
    }

    /// Expand a sparse block kernel keyed by sorted `(left, right)` indices.
    pub fn from_block(
        dim: usize,
        left: usize,
        right: usize,
        entries: &[(Vec<u32>, Vec<u32>, f64)],
    ) -> Self {
        let mut t = Self::zeros(dim, left + right);
        for (u, v, value) in entries {
            let u0: Vec<usize> = u.iter().map(|&l| l as usize - 1).collect();
            let v0: Vec<usize> = v.iter().map(|&l| l as usize - 1).collect();
            for pu in permutations(left) {
                for pv in permutations(right) {
                    let mut arranged: Vec<usize> = pu.iter().map(|&p| u0[p]).collect();
                    arranged.extend(pv.iter().map(|&p| v0[p]));
                    let flat = t.flat(&arranged);
                    t.data[flat] = *value;
                }
            }
        }
        t
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.order];
        for slot in (0..self.order).rev() {
            idx[slot] = flat % self.dim;
            flat /= self.dim;
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat(idx)]
    }

    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    /// `(f ⊗_l g)(s, t) = Σ_w f(s, w) g(t, w)`, pairing the last `l` axes of each.
    pub fn contract(&self, other: &Self, l: usize) -> Self {
        assert_eq!(self.dim, other.dim);
        let p = self.order - l;
        let q = other.order - l;
        let d = self.dim;
        let mut out = Self::zeros(d, p + q);
        let wn = d.pow(l as u32);
        for flat in 0..out.data.len() {
            let idx = out.unflat(flat);
            let mut acc = 0.0;
            for w in 0..wn {
                let wi = digits(w, d, l);
                let mut a = idx[..p].to_vec();
                a.extend(&wi);
                let mut b = idx[p..].to_vec();
                b.extend(&wi);
                acc += self.get(&a) * other.get(&b);
            }
            out.data[flat] = acc;
        }
        out
    }

    /// Average over all permutations of the axes.
    pub fn symmetrize(&self) -> Self {
        let perms = permutations(self.order);
        let mut out = Self::zeros(self.dim, self.order);
        for flat in 0..out.data.len() {
            let idx = out.unflat(flat);
            let mut acc = 0.0;
            for perm in &perms {
                let arranged: Vec<usize> = perm.iter().map(|&p| idx[p]).collect();
                acc += self.get(&arranged);
            }
            out.data[flat] = acc / perms.len() as f64;
        }
        out
    }

    /// Fix the last axis to `j` (0-based).
    pub fn pin_last(&self, j: usize) -> Self {
        let mut out = Self::zeros(self.dim, self.order - 1);
        for flat in 0..out.data.len() {
            let mut idx = out.unflat(flat);
            idx.push(j);
            out.data[flat] = self.get(&idx);
        }
        out
    }
}

fn digits(mut x: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in (0..len).rev() {
        out[slot] = x % base;
        x /= base;
    }
    out
}

/// All permutations of `0..n` (Heap's algorithm would do; this is plain recursion).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}
