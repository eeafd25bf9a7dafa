//! Factorial and binomial tables in double precision, up to [`ORDER_CAP`](crate::ORDER_CAP).

use std::sync::OnceLock;

use crate::ORDER_CAP;

fn factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(2 * ORDER_CAP + 1);
        t.push(1.0);
        for k in 1..=2 * ORDER_CAP {
            let prev = t[k - 1];
            t.push(prev * k as f64);
        }
        t
    })
}

/// `n!`. Panics past `2 * ORDER_CAP`.
pub fn factorial(n: usize) -> f64 {
    factorial_table()[n]
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    // products of small ratios stay exact well past where n!/(k!(n-k)!) would round
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// `(2k - 1)!! = 1·3·5·…·(2k-1)`, the `2k`th moment of a standard normal.
pub fn double_factorial_odd(k: usize) -> f64 {
    (1..=k).map(|i| (2 * i - 1) as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(5), 120.0);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(4, 5), 0.0);
        assert_eq!(binomial(30, 15), 155117520.0);
        assert_eq!(double_factorial_odd(3), 15.0);
        assert_eq!(double_factorial_odd(0), 1.0);
    }
}
