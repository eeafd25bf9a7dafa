//! Probabilists' Hermite polynomials.
//!
//! Everything in this crate uses the monic family `He_m`:
//! `He_0 = 1`, `He_1 = x`, `He_{m+1}(x) = x He_m(x) - m He_{m-1}(x)`.
//! The normalisation `H_m = He_m / m!` that also appears in the literature is
//! recovered with [`hermite_normalized`]. In that convention
//! `I_n(h^{⊗n}) = n! H_n(X(h)) = He_n(X(h))` for `‖h‖ = 1`.

use crate::combinatorics::factorial;
use crate::error::{ChaosError, Result};
use crate::ORDER_CAP;

/// `He_m(x)` by the three-term recurrence.
pub fn hermite(m: usize, x: f64) -> Result<f64> {
    if m > ORDER_CAP {
        return Err(ChaosError::OrderCap(m));
    }
    let (mut prev, mut cur) = (1.0, x);
    if m == 0 {
        return Ok(prev);
    }
    for k in 1..m {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `He_m(x) / m!`.
pub fn hermite_normalized(m: usize, x: f64) -> Result<f64> {
    Ok(hermite(m, x)? / factorial(m))
}

/// `[He_0(x), …, He_m(x)]`, written into `out` (resized to `m + 1`).
pub fn hermite_table(m: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if m == 0 {
        return;
    }
    out.push(x);
    for k in 1..m {
        let next = x * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
}
