//! Pathwise realisation of multiple integrals and Malliavin gradients.
//!
//! With `X(e_j) = ξ_j`, a kernel entry at sorted index `α` with label
//! multiplicities `(a_1, …, a_d)` contributes `count(α) f(α) ∏_j He_{a_j}(ξ_j)`
//! to `I_n(f)`. The Malliavin derivative in direction `e_j` is
//! `n I_{n-1}(f(·, e_j))`, which for finite `d` is the ordinary partial
//! derivative in `ξ_j`.

use std::ops::Deref;

use crate::error::{ChaosError, Result};
use crate::hermite::hermite_table;
use crate::rng::RandomStream;
use crate::symtensor::SymKernel;

/// A point `ξ ∈ R^d` of the Gaussian space.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPoint(pub Vec<f64>);

impl Deref for GaussianPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl GaussianPoint {
    /// Sample number `index` of `stream` in dimension `dim`.
    pub fn sample(dim: usize, stream: RandomStream, index: u64) -> Self {
        Self(stream.normal_block(index, dim))
    }
}

/// Free-function form of [`GaussianPoint::sample`].
pub fn sample(dim: usize, stream: RandomStream, index: u64) -> GaussianPoint {
    GaussianPoint::sample(dim, stream, index)
}

fn check_dim(f: &SymKernel, xi: &[f64]) -> Result<()> {
    if f.dim() != xi.len() {
        return Err(ChaosError::DimMismatch(f.dim(), xi.len()));
    }
    Ok(())
}

/// `He_0..He_n` at every coordinate.
fn tables(xi: &[f64], n: usize) -> Vec<Vec<f64>> {
    xi.iter()
        .map(|&x| {
            let mut t = Vec::with_capacity(n + 1);
            hermite_table(n, x, &mut t);
            t
        })
        .collect()
}

/// `I_n(f)(ξ)`.
pub fn eval_integral(f: &SymKernel, xi: &[f64]) -> Result<f64> {
    check_dim(f, xi)?;
    if f.order() == 0 {
        return Ok(f.as_scalar().unwrap_or(0.0));
    }
    let he = tables(xi, f.order());
    Ok(f.iter()
        .map(|(alpha, v)| {
            let prod: f64 = alpha
                .multiplicities()
                .into_iter()
                .map(|(label, a)| he[label as usize - 1][a])
                .product();
            alpha.count() * v * prod
        })
        .sum())
}

/// `(n I_{n-1}(f(·, e_j))(ξ))_{j = 1..d}`.
pub fn malliavin_gradient(f: &SymKernel, xi: &[f64]) -> Result<Vec<f64>> {
    check_dim(f, xi)?;
    let n = f.order();
    if n == 0 {
        return Err(ChaosError::OrderTooLow {
            required: 1,
            got: 0,
        });
    }
    let he = tables(xi, n);
    let mut grad = vec![0.0; f.dim()];
    for (alpha, v) in f.iter() {
        let profile = alpha.multiplicities();
        let base = alpha.count() * v;
        for (pos, &(label, a)) in profile.iter().enumerate() {
            // ∂/∂ξ_j He_a(ξ_j) = a He_{a-1}(ξ_j)
            let mut term = base * a as f64 * he[label as usize - 1][a - 1];
            for (other, &(l2, a2)) in profile.iter().enumerate() {
                if other != pos {
                    term *= he[l2 as usize - 1][a2];
                }
            }
            grad[label as usize - 1] += term;
        }
    }
    Ok(grad)
}

/// `‖DF‖²_H` for `F = I_n(f)`.
pub fn grad_norm_sq(f: &SymKernel, xi: &[f64]) -> Result<f64> {
    Ok(malliavin_gradient(f, xi)?.iter().map(|g| g * g).sum())
}

/// `⟨DF, DG⟩_H` for `F = I_n(f)`, `G = I_m(g)`.
pub fn grad_inner(f: &SymKernel, g: &SymKernel, xi: &[f64]) -> Result<f64> {
    let a = malliavin_gradient(f, xi)?;
    let b = malliavin_gradient(g, xi)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::mc_mean;
    use proptest::prelude::*;
    use wiener_oracle::Polynomial;

    fn e(dim: usize, label: u32, order: usize, s: f64) -> SymKernel {
        SymKernel::basis_power(dim, label, order, s).unwrap()
    }

    #[test]
    fn integral_examples() {
        assert_eq!(eval_integral(&e(3, 1, 1, 1.0), &[0.7, 0.1, -2.0]).unwrap(), 0.7);
        assert_eq!(eval_integral(&e(2, 1, 2, 1.0), &[1.5, 0.3]).unwrap(), 1.25);
        let off = SymKernel::new(2, 2, [(vec![1, 2], 1.0)]).unwrap();
        let (a, b) = (0.4, -1.3);
        assert!((eval_integral(&off, &[a, b]).unwrap() - 2.0 * a * b).abs() < 1e-15);
        // E[(2ξ1ξ2)^2] = 4 = 2!·‖f‖² by the polynomial oracle
        let p = Polynomial::multiple_integral(2, 2, &off.to_entries());
        assert!((p.mul(&p).expectation() - 2.0 * off.norm_sq_ambient()).abs() < 1e-14);
        assert_eq!(eval_integral(&SymKernel::scalar(2, 3.5), &[0.0, 1.0]).unwrap(), 3.5);
        assert!(eval_integral(&off, &[1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = malliavin_gradient(&e(3, 1, 2, 1.0), &[1.5, 0.2, 0.9]).unwrap();
        assert_eq!(g, vec![3.0, 0.0, 0.0]);
        let g = malliavin_gradient(&e(2, 1, 1, 1.0), &[-0.3, 5.0]).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        assert!(malliavin_gradient(&SymKernel::scalar(2, 1.0), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn grad_norm_examples() {
        let f = SymKernel::new(2, 2, [(vec![1, 1], 0.5), (vec![2, 2], 0.5)]).unwrap();
        let (a, b) = (0.8, -1.1);
        assert!((grad_norm_sq(&f, &[a, b]).unwrap() - (a * a + b * b)).abs() < 1e-15);
        assert_eq!(grad_norm_sq(&e(2, 1, 1, 1.0), &[3.0, 2.0]).unwrap(), 1.0);
        assert_eq!(grad_norm_sq(&e(1, 1, 2, 1.0), &[1.0]).unwrap(), 4.0);
    }

    #[test]
    fn mc_isometry_examples() {
        let f = e(1, 1, 2, 1.0);
        let est = mc_mean(1, 100_000, RandomStream::new(3, 0), |x| {
            eval_integral(&f, x).unwrap().powi(2)
        })
        .unwrap();
        assert!(est.within(2.0, 4.0), "{est:?}");
    }

    fn arb_kernel() -> impl Strategy<Value = SymKernel> {
        (1usize..=4, 1usize..=4).prop_flat_map(|(d, n)| {
            proptest::collection::vec((proptest::collection::vec(1..=d as u32, n), -1.0f64..1.0), 1..5)
                .prop_map(move |raw| {
                    let mut seen = std::collections::BTreeMap::new();
                    for (mut l, v) in raw {
                        l.sort_unstable();
                        seen.insert(l, v);
                    }
                    SymKernel::new(d, n, seen).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_matches_finite_differences(f in arb_kernel(), seed in 0u64..10_000) {
            let xi = GaussianPoint::sample(f.dim(), RandomStream::new(seed, 1), 0);
            let grad = malliavin_gradient(&f, &xi).unwrap();
            let h = 1e-5;
            for j in 0..f.dim() {
                let mut up = xi.0.clone();
                let mut dn = xi.0.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (eval_integral(&f, &up).unwrap() - eval_integral(&f, &dn).unwrap()) / (2.0 * h);
                let scale = grad[j].abs().max(1e-3 * (1.0 + f.norm_ambient()));
                prop_assert!((fd - grad[j]).abs() <= 1e-6 * scale.max(1.0), "j={} fd={} grad={}", j, fd, grad[j]);
            }
        }

        #[test]
        fn integral_matches_polynomial_oracle(f in arb_kernel(), seed in 0u64..10_000) {
            let xi = GaussianPoint::sample(f.dim(), RandomStream::new(seed, 2), 0);
            let p = Polynomial::multiple_integral(f.dim(), f.order(), &f.to_entries());
            let a = eval_integral(&f, &xi).unwrap();
            let b = p.eval(&xi);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}
