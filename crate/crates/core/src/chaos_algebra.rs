//! Exact moments of finite chaos expansions.
//!
//! Products are expanded with the multiplication formula
//!
//! `I_n(f) I_m(g) = Σ_{r=0}^{n∧m} r! C(n,r) C(m,r) I_{n+m-2r}(f ⊗̃_r g)`,
//!
//! and expectations are read off through orthogonality of the chaoses:
//! `E[I_n(f) I_m(g)] = δ_{nm} n! ⟨f, g⟩`. No sampling is involved anywhere in
//! this module.

use std::collections::BTreeMap;

use crate::chaos_eval::eval_integral;
use crate::combinatorics::{binomial, factorial};
use crate::error::{ChaosError, Result};
use crate::symtensor::SymKernel;
use crate::ORDER_CAP;

/// `F = c_0 + Σ_n I_n(g_n)` with finitely many nonzero components.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosExpansion {
    dim: usize,
    components: BTreeMap<usize, SymKernel>,
}

impl ChaosExpansion {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            components: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut out = Self::zero(dim);
        out.insert(SymKernel::scalar(dim, c));
        out
    }

    /// `I_n(f)` as a one-component expansion.
    pub fn from_kernel(f: SymKernel) -> Self {
        let mut out = Self::zero(f.dim());
        out.insert(f);
        out
    }

    /// Components keyed by their order; kernels of equal order are summed.
    pub fn from_kernels<I: IntoIterator<Item = SymKernel>>(dim: usize, kernels: I) -> Result<Self> {
        let mut out = Self::zero(dim);
        for k in kernels {
            if k.dim() != dim {
                return Err(ChaosError::DimMismatch(dim, k.dim()));
            }
            out.add_kernel(k)?;
        }
        Ok(out)
    }

    fn insert(&mut self, f: SymKernel) {
        if !f.is_zero() {
            self.components.insert(f.order(), f);
        }
    }

    fn add_kernel(&mut self, f: SymKernel) -> Result<()> {
        let merged = match self.components.remove(&f.order()) {
            Some(existing) => existing.add(&f)?,
            None => f,
        };
        self.insert(merged);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest order with a nonzero kernel (0 for constants and for zero).
    pub fn max_order(&self) -> usize {
        self.components.keys().next_back().copied().unwrap_or(0)
    }

    pub fn component(&self, n: usize) -> Option<&SymKernel> {
        self.components.get(&n)
    }

    pub fn components(&self) -> impl Iterator<Item = (usize, &SymKernel)> + '_ {
        self.components.iter().map(|(&n, f)| (n, f))
    }

    /// `J_n F` as an expansion of its own.
    pub fn projection(&self, n: usize) -> Self {
        let mut out = Self::zero(self.dim);
        if let Some(f) = self.components.get(&n) {
            out.insert(f.clone());
        }
        out
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(ChaosError::DimMismatch(self.dim, other.dim));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for f in other.components.values() {
            out.add_kernel(f.clone())?;
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dim);
        for f in self.components.values() {
            out.insert(f.scale(s));
        }
        out
    }

    /// Product through the multiplication formula, extended bilinearly.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let top = self.max_order() + other.max_order();
        if top > ORDER_CAP {
            return Err(ChaosError::OrderCap(top));
        }
        let mut out = Self::zero(self.dim);
        for (&n, f) in &self.components {
            for (&m, g) in &other.components {
                for r in 0..=n.min(m) {
                    let coeff = factorial(r) * binomial(n, r) * binomial(m, r);
                    let kernel = f.contract_sym(g, r)?.scale(coeff);
                    out.add_kernel(kernel)?;
                }
            }
        }
        Ok(out)
    }

    /// `F^p` by repeated multiplication.
    pub fn power(&self, p: u32) -> Result<Self> {
        let mut out = Self::constant(self.dim, 1.0);
        for _ in 0..p {
            out = out.multiply(self)?;
        }
        Ok(out)
    }

    /// Pathwise value at `ξ`.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.dim {
            return Err(ChaosError::DimMismatch(self.dim, xi.len()));
        }
        self.components
            .values()
            .map(|f| eval_integral(f, xi))
            .sum()
    }

    /// `E[F]`, the order-0 component.
    pub fn expectation(&self) -> f64 {
        self.components
            .get(&0)
            .and_then(SymKernel::as_scalar)
            .unwrap_or(0.0)
    }

    /// `E[F G]` by orthogonality, without forming the product.
    pub fn pair_expectation(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        let mut acc = 0.0;
        for (&n, f) in &self.components {
            if let Some(g) = other.components.get(&n) {
                acc += factorial(n) * f.inner_ambient(g)?;
            }
        }
        Ok(acc)
    }

    /// `Cov(F, G) = Σ_{n>=1} n! ⟨f_n, g_n⟩`.
    pub fn covariance(&self, other: &Self) -> Result<f64> {
        Ok(self.pair_expectation(other)? - self.expectation() * other.expectation())
    }

    pub fn variance(&self) -> f64 {
        self.components
            .iter()
            .filter(|(&n, _)| n > 0)
            .map(|(&n, f)| factorial(n) * f.norm_sq_ambient())
            .sum()
    }

    /// `E[F^p]` for `p` in `1..=4`.
    ///
    /// Odd and even powers are split as `F^p = F^{⌈p/2⌉} · F^{⌊p/2⌋}` and
    /// the last product is only paired, never expanded, which keeps
    /// fourth moments of wide kernels cheap. [`power`](Self::power) followed
    /// by [`expectation`](Self::expectation) gives the same number.
    pub fn moment(&self, p: u32) -> Result<f64> {
        if !(1..=4).contains(&p) {
            return Err(ChaosError::InvalidArgument(format!(
                "moment order {p} outside 1..=4"
            )));
        }
        let top = p as usize * self.max_order();
        if top > ORDER_CAP {
            return Err(ChaosError::OrderCap(top));
        }
        let hi = self.power(p.div_ceil(2))?;
        let lo = self.power(p / 2)?;
        hi.pair_expectation(&lo)
    }

    /// The Ornstein–Uhlenbeck generator: `L = Σ_n -n J_n`.
    pub fn apply_l(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for (&n, f) in &self.components {
            if n > 0 {
                out.insert(f.scale(-(n as f64)));
            }
        }
        out
    }

    /// Components of `DF` in the basis directions: `Σ_n n I_{n-1}(g_n(·, e_j))`.
    pub fn gradient(&self) -> Result<Vec<ChaosExpansion>> {
        let mut out = vec![Self::zero(self.dim); self.dim];
        for (&n, f) in &self.components {
            if n == 0 {
                continue;
            }
            for (j, slot) in out.iter_mut().enumerate() {
                let s = f.slice(j as u32 + 1)?.scale(n as f64);
                slot.add_kernel(s)?;
            }
        }
        Ok(out)
    }

    /// `⟨DF, DG⟩_H` as an expansion.
    pub fn deriv_gram(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let (df, dg) = (self.gradient()?, other.gradient()?);
        let mut out = Self::zero(self.dim);
        for (a, b) in df.iter().zip(&dg) {
            out = out.add(&a.multiply(b)?)?;
        }
        Ok(out)
    }
}

/// `F · G` via the multiplication formula.
pub fn multiply(f: &ChaosExpansion, g: &ChaosExpansion) -> Result<ChaosExpansion> {
    f.multiply(g)
}

pub fn expectation(f: &ChaosExpansion) -> f64 {
    f.expectation()
}

pub fn covariance(f: &ChaosExpansion, g: &ChaosExpansion) -> Result<f64> {
    f.covariance(g)
}

pub fn moment(f: &ChaosExpansion, p: u32) -> Result<f64> {
    f.moment(p)
}

pub fn apply_l(f: &ChaosExpansion) -> ChaosExpansion {
    f.apply_l()
}

/// Coefficient of the `r`th term of `E[⟨DF, DG⟩²]`:
/// `(n! m!)² / ((n-r)! (m-r)! (r-1)!)²`.
pub fn gram_coefficient(n: usize, m: usize, r: usize) -> f64 {
    let num = factorial(n) * factorial(m);
    let den = factorial(n - r) * factorial(m - r) * factorial(r - 1);
    (num / den).powi(2)
}

fn require_positive_order(f: &SymKernel) -> Result<()> {
    if f.order() == 0 {
        return Err(ChaosError::OrderTooLow {
            required: 1,
            got: 0,
        });
    }
    Ok(())
}

/// `E[⟨DF, DG⟩²_H]` for `F = I_n(f)`, `G = I_m(g)`:
///
/// `Σ_{r=1}^{n∧m} (n! m!)² / ((n-r)! (m-r)! (r-1)!)² · ‖f ⊗̃_r g‖²_{H^{⊙(n+m-2r)}}`,
///
/// where the norm is the modified one, `(n+m-2r)!` times the ambient norm squared.
pub fn deriv_gram_second_moment(f: &SymKernel, g: &SymKernel) -> Result<f64> {
    require_positive_order(f)?;
    require_positive_order(g)?;
    if f.dim() != g.dim() {
        return Err(ChaosError::DimMismatch(f.dim(), g.dim()));
    }
    let (n, m) = (f.order(), g.order());
    let mut acc = 0.0;
    for r in 1..=n.min(m) {
        let sym = f.contract_sym(g, r)?;
        let modified_sq = factorial(n + m - 2 * r) * sym.norm_sq_ambient();
        acc += gram_coefficient(n, m, r) * modified_sq;
    }
    Ok(acc)
}

/// `E[‖DF‖²_H] = n ‖f‖²_{H^{⊙n}}`.
pub fn e_dnorm2(f: &SymKernel) -> Result<f64> {
    require_positive_order(f)?;
    let n = f.order();
    Ok(n as f64 * factorial(n) * f.norm_sq_ambient())
}

/// `E[‖DF‖⁴_H]`, the diagonal case of [`deriv_gram_second_moment`].
pub fn e_dnorm4(f: &SymKernel) -> Result<f64> {
    deriv_gram_second_moment(f, f)
}

/// `Var(‖DF‖²_H) = E‖DF‖⁴ - (E‖DF‖²)²`, clamped at zero against rounding.
pub fn var_dnorm2(f: &SymKernel) -> Result<f64> {
    let e2 = e_dnorm2(f)?;
    Ok((e_dnorm4(f)? - e2 * e2).max(0.0))
}

/// `E[(‖DF‖² - n)²] = E‖DF‖⁴ - 2n E‖DF‖² + n²`, the L² distance in condition iv).
pub fn dnorm2_l2_deviation(f: &SymKernel) -> Result<f64> {
    let n = f.order() as f64;
    Ok((e_dnorm4(f)? - 2.0 * n * e_dnorm2(f)? + n * n).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos_eval::grad_inner;
    use crate::mc::mc_mean;
    use crate::rng::RandomStream;
    use proptest::prelude::*;
    use wiener_oracle::Polynomial;

    fn e(dim: usize, label: u32, order: usize, s: f64) -> SymKernel {
        SymKernel::basis_power(dim, label, order, s).unwrap()
    }

    fn single(f: SymKernel) -> ChaosExpansion {
        ChaosExpansion::from_kernel(f)
    }

    fn poly(f: &ChaosExpansion) -> Polynomial {
        let mut p = Polynomial::zero(f.dim());
        for (n, k) in f.components() {
            p = p.add(&Polynomial::multiple_integral(f.dim(), n, &k.to_entries()));
        }
        p
    }

    #[test]
    fn multiply_examples() {
        let x = single(e(1, 1, 1, 1.0));
        let sq = x.multiply(&x).unwrap();
        assert_eq!(sq.component(2), Some(&e(1, 1, 2, 1.0)));
        assert_eq!(sq.expectation(), 1.0);
        assert_eq!(sq.components().count(), 2);

        let f = single(e(1, 1, 2, 1.0));
        assert_eq!(f.multiply(&ChaosExpansion::constant(1, 1.0)).unwrap(), f);

        // He2² = He4 + 4 He2 + 2
        let sq = f.multiply(&f).unwrap();
        assert_eq!(sq.component(4), Some(&e(1, 1, 4, 1.0)));
        assert_eq!(sq.component(2), Some(&e(1, 1, 2, 4.0)));
        assert_eq!(sq.expectation(), 2.0);
        let he2 = wiener_oracle::poly::hermite_in(1, 0, 2);
        let oracle = he2.mul(&he2);
        let expected = poly(&sq);
        for (k, c) in &oracle.terms {
            assert!((expected.terms.get(k).copied().unwrap_or(0.0) - c).abs() < 1e-12);
        }
        assert!(f.multiply(&ChaosExpansion::zero(2)).is_err());
    }

    #[test]
    fn moment_examples() {
        assert_eq!(single(e(1, 1, 1, 1.0)).moment(4).unwrap(), 3.0);

        let f = single(e(1, 1, 2, 0.5f64.sqrt()));
        let oracle = poly(&f).pow(4).expectation();
        assert!((oracle - 15.0).abs() < 1e-12);
        assert!((f.moment(4).unwrap() - 15.0).abs() < 1e-12);

        let g = single(SymKernel::new(2, 2, [(vec![1, 1], 0.5), (vec![2, 2], 0.5)]).unwrap());
        let oracle = poly(&g).pow(4).expectation();
        assert!((oracle - 9.0).abs() < 1e-12);
        assert!((g.moment(4).unwrap() - 9.0).abs() < 1e-12);
        assert!(g.moment(5).is_err());
        assert!(single(e(1, 1, 17, 1.0)).moment(4).is_err());
    }

    #[test]
    fn covariance_and_variance() {
        let f = single(e(2, 1, 2, 1.0));
        let g = single(SymKernel::new(2, 2, [(vec![1, 1], 2.0), (vec![1, 2], 1.0)]).unwrap());
        assert_eq!(f.covariance(&g).unwrap(), 4.0);
        assert_eq!(f.variance(), 2.0);
        let shifted = f.add(&ChaosExpansion::constant(2, 3.0)).unwrap();
        assert_eq!(shifted.covariance(&g).unwrap(), 4.0);
        assert_eq!(shifted.expectation(), 3.0);
    }

    #[test]
    fn generator_examples() {
        let f = e(2, 1, 2, 1.3);
        assert_eq!(single(f.clone()).apply_l(), single(f.scale(-2.0)));
        assert_eq!(ChaosExpansion::constant(2, 5.0).apply_l(), ChaosExpansion::zero(2));
        let g = SymKernel::new(2, 3, [(vec![1, 2, 2], 0.7)]).unwrap();
        let fg = ChaosExpansion::from_kernels(2, [e(2, 1, 1, 1.0), g.clone()]).unwrap();
        let expected = ChaosExpansion::from_kernels(2, [e(2, 1, 1, -1.0), g.scale(-3.0)]).unwrap();
        assert_eq!(fg.apply_l(), expected);
    }

    #[test]
    fn gram_examples() {
        let x = e(1, 1, 1, 1.0);
        assert_eq!(deriv_gram_second_moment(&x, &x).unwrap(), 1.0);
        let f = e(1, 1, 2, 0.5f64.sqrt());
        assert!((deriv_gram_second_moment(&f, &f).unwrap() - 12.0).abs() < 1e-12);
        // oracle: ‖DF‖² = 2ξ², E[4ξ⁴] = 12
        let p = poly(&single(f.clone()));
        let d = p.derivative(0);
        assert!((d.mul(&d).pow(2).expectation() - 12.0).abs() < 1e-12);
        assert!(deriv_gram_second_moment(&SymKernel::scalar(1, 1.0), &f).is_err());
    }

    #[test]
    fn dnorm_examples() {
        let x = e(1, 1, 1, 1.0);
        assert_eq!((e_dnorm2(&x).unwrap(), e_dnorm4(&x).unwrap(), var_dnorm2(&x).unwrap()), (1.0, 1.0, 0.0));

        let f = e(1, 1, 2, 0.5f64.sqrt());
        assert!((e_dnorm2(&f).unwrap() - 2.0).abs() < 1e-14);
        assert!((e_dnorm4(&f).unwrap() - 12.0).abs() < 1e-12);
        assert!((var_dnorm2(&f).unwrap() - 8.0).abs() < 1e-12);

        let g = SymKernel::new(2, 2, [(vec![1, 1], 0.5), (vec![2, 2], 0.5)]).unwrap();
        assert!((e_dnorm2(&g).unwrap() - 2.0).abs() < 1e-14);
        assert!((e_dnorm4(&g).unwrap() - 8.0).abs() < 1e-12);
        assert!((var_dnorm2(&g).unwrap() - 4.0).abs() < 1e-12);
        // ‖DF‖² = ξ1² + ξ2² by the polynomial oracle
        let p = poly(&single(g));
        let norm2 = p.derivative(0).pow(2).add(&p.derivative(1).pow(2));
        assert!((norm2.pow(2).expectation() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gram_matches_monte_carlo() {
        let f = SymKernel::new(3, 2, [(vec![1, 1], 0.4), (vec![1, 3], -0.3), (vec![2, 3], 0.5)]).unwrap();
        let g = SymKernel::new(3, 3, [(vec![1, 2, 3], 0.2), (vec![1, 1, 2], 0.35), (vec![3, 3, 3], -0.25)]).unwrap();
        let exact = deriv_gram_second_moment(&f, &g).unwrap();
        let est = mc_mean(3, 200_000, RandomStream::new(5, 0), |x| grad_inner(&f, &g, x).unwrap().powi(2)).unwrap();
        assert!(est.within(exact, 4.0), "exact {exact} mc {est:?}");
    }

    #[test]
    fn gradient_deviation_identity() {
        let f = SymKernel::new(2, 3, [(vec![1, 1, 2], 0.3), (vec![2, 2, 2], 0.2)]).unwrap();
        let n = 3.0;
        let dev = single(f.clone())
            .deriv_gram(&single(f.clone()))
            .unwrap()
            .add(&ChaosExpansion::constant(2, -n))
            .unwrap();
        let direct = dev.moment(2).unwrap();
        let formula = e_dnorm4(&f).unwrap() - 2.0 * n * e_dnorm2(&f).unwrap() + n * n;
        assert!((direct - formula).abs() < 1e-10 * formula.abs().max(1.0));
        assert!((dnorm2_l2_deviation(&f).unwrap() - formula).abs() < 1e-12 * formula.abs().max(1.0));

        let unit = f.scale(1.0 / f.norm_modified());
        assert!((dnorm2_l2_deviation(&unit).unwrap() - var_dnorm2(&unit).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn e_dnorm2_is_n_times_modified_norm() {
        let f = SymKernel::new(3, 3, [(vec![1, 2, 3], 0.3), (vec![1, 1, 1], -0.8)]).unwrap();
        assert!((e_dnorm2(&f).unwrap() - 3.0 * f.norm_modified().powi(2)).abs() < 1e-12);
    }

    fn arb_expansion(dim: usize) -> impl Strategy<Value = ChaosExpansion> {
        let kernel = (0usize..=3).prop_flat_map(move |n| {
            proptest::collection::vec((proptest::collection::vec(1..=dim as u32, n), -1.0f64..1.0), 1..4)
                .prop_map(move |raw| {
                    let mut seen = std::collections::BTreeMap::new();
                    for (mut l, v) in raw {
                        l.sort_unstable();
                        seen.insert(l, v);
                    }
                    SymKernel::new(dim, n, seen).unwrap()
                })
        });
        proptest::collection::vec(kernel, 1..3)
            .prop_map(move |ks| ChaosExpansion::from_kernels(dim, ks).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn product_is_pathwise((f, g, seed) in (1usize..=3).prop_flat_map(|d| (arb_expansion(d), arb_expansion(d), 0u64..1000))) {
            let fg = f.multiply(&g).unwrap();
            let gf = g.multiply(&f).unwrap();
            let diff = fg.add(&gf.scale(-1.0)).unwrap();
            prop_assert!(diff.pair_expectation(&diff).unwrap() <= 1e-20 * (1.0 + fg.pair_expectation(&fg).unwrap()));
            for i in 0..10 {
                let xi = crate::GaussianPoint::sample(f.dim(), RandomStream::new(seed, 0), i);
                let lhs = fg.eval(&xi).unwrap();
                let rhs = f.eval(&xi).unwrap() * g.eval(&xi).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1e-12));
            }
        }

        #[test]
        fn fourth_moment_matches_isserlis(f in (1usize..=3).prop_flat_map(arb_expansion)) {
            prop_assume!(f.max_order() <= 2);
            let oracle = poly(&f).pow(4).expectation();
            let exact = f.moment(4).unwrap();
            prop_assert!((exact - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
            let by_power = f.power(4).unwrap().expectation();
            prop_assert!((exact - by_power).abs() <= 1e-9 * oracle.abs().max(1.0));
        }

        #[test]
        fn gram_formula_matches_algebra((f, g) in (1usize..=3, 1usize..=3, 1usize..=3).prop_flat_map(|(d, n, m)| {
            let k = move |order: usize| proptest::collection::vec((proptest::collection::vec(1..=d as u32, order), -1.0f64..1.0), 1..4)
                .prop_map(move |raw| {
                    let mut seen = std::collections::BTreeMap::new();
                    for (mut l, v) in raw { l.sort_unstable(); seen.insert(l, v); }
                    SymKernel::new(d, order, seen).unwrap()
                });
            (k(n), k(m))
        })) {
            let formula = deriv_gram_second_moment(&f, &g).unwrap();
            let gram = single(f.clone()).deriv_gram(&single(g.clone())).unwrap();
            let algebra = gram.moment(2).unwrap();
            prop_assert!((formula - algebra).abs() <= 1e-9 * formula.abs().max(algebra.abs()).max(1e-12));
            prop_assert!((formula - deriv_gram_second_moment(&g, &f).unwrap()).abs() <= 1e-12 * formula.max(1e-12));
        }
    }
}
