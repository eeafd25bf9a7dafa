//! Brute-force reference computations.
//!
//! Everything here is deliberately naive: dense tensors with `d^n` entries,
//! explicit permutation averaging, and polynomials in the Gaussian
//! coordinates whose expectations are read off monomial by monomial. None of
//! it shares code with `wiener-core`, so agreement between the two is a real
//! cross-check rather than a tautology.
//!
//! Sparse kernels are passed in as plain `(multi-index, value)` slices with
//! 1-based sorted labels.

pub mod dense;
pub mod poly;

pub use dense::DenseTensor;
pub use poly::Polynomial;

/// `n!` as a float.
pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `(n-1)!!` for even `n`, zero for odd `n`: the `n`th moment of a standard normal.
pub fn gaussian_moment(n: u32) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut k = 1;
    while k < n {
        acc *= f64::from(k);
        k += 2;
    }
    acc
}

/// `E[X^a Y^b]` for a standard bivariate normal pair with correlation `rho`,
/// obtained from `Y = rho X + sqrt(1 - rho^2) Z` and the binomial theorem.
pub fn bivariate_moment(a: u32, b: u32, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let mut total = 0.0;
    for i in 0..=b {
        let binom = factorial(b) / (factorial(i) * factorial(b - i));
        let zpow = b - i;
        let zmom = gaussian_moment(zpow);
        if zmom == 0.0 {
            continue;
        }
        total += binom * rho.powi(i as i32) * s.powi(zpow as i32) * gaussian_moment(a + i) * zmom;
    }
    total
}
