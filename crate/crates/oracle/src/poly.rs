//! Multivariate polynomials in independent standard normals `ξ_1..ξ_d`.
//!
//! Expectations use `E[∏ ξ_j^{a_j}] = ∏ (a_j - 1)!!`, which is Isserlis'
//! theorem specialised to an orthonormal basis.

use std::collections::BTreeMap;

use crate::{factorial, gaussian_moment};

/// Coefficients keyed by exponent vectors of length `dim`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    /// The coordinate `ξ_j` (0-based `j`).
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut e = vec![0; dim];
        e[j] = 1;
        let mut p = Self::zero(dim);
        p.add_term(e, 1.0);
        p
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        *self.terms.entry(exps).or_insert(0.0) += c;
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, p: u32) -> Self {
        let mut out = Self::constant(self.dim, 1.0);
        for _ in 0..p {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to `ξ_j` (0-based).
    pub fn derivative(&self, j: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            if e[j] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[j] -= 1;
            out.add_term(e2, c * f64::from(e[j]));
        }
        out
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(xi).map(|(&a, &x)| x.powi(a as i32)).product::<f64>())
            .sum()
    }

    pub fn expectation(&self) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().map(|&a| gaussian_moment(a)).product::<f64>())
            .sum()
    }

    /// `I_n(f)` written out as a polynomial: `Σ_α count(α) f(α) ∏_j He_{a_j}(ξ_j)`.
    ///
    /// Hermite coefficients come from the explicit sum
    /// `He_n(x) = n! Σ_k (-1)^k x^{n-2k} / (k! (n-2k)! 2^k)`,
    /// not from a recurrence.
    pub fn multiple_integral(dim: usize, order: usize, entries: &[(Vec<u32>, f64)]) -> Self {
        if order == 0 {
            let c = entries.first().map_or(0.0, |e| e.1);
            return Self::constant(dim, c);
        }
        let mut out = Self::zero(dim);
        for (idx, value) in entries {
            let mut mult = vec![0u32; dim];
            for &l in idx {
                mult[l as usize - 1] += 1;
            }
            let count =
                factorial(order as u32) / mult.iter().map(|&a| factorial(a)).product::<f64>();
            let mut term = Self::constant(dim, count * value);
            for (j, &a) in mult.iter().enumerate() {
                if a > 0 {
                    term = term.mul(&hermite_in(dim, j, a));
                }
            }
            out = out.add(&term);
        }
        out
    }
}

/// `He_n(ξ_j)` as a polynomial.
pub fn hermite_in(dim: usize, j: usize, n: u32) -> Polynomial {
    let mut p = Polynomial::zero(dim);
    for k in 0..=n / 2 {
        let c = factorial(n) * if k % 2 == 0 { 1.0 } else { -1.0 }
            / (factorial(k) * factorial(n - 2 * k) * 2f64.powi(k as i32));
        let mut e = vec![0; dim];
        e[j] = n - 2 * k;
        p.add_term(e, c);
    }
    p
}

/// Coefficients of `He_n` in the monomial basis, lowest degree first.
pub fn hermite_coefficients(n: u32) -> Vec<f64> {
    let p = hermite_in(1, 0, n);
    let mut out = vec![0.0; n as usize + 1];
    for (e, c) in p.terms {
        out[e[0] as usize] = c;
    }
    out
}
