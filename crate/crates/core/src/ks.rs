//! One-sample Kolmogorov–Smirnov test against a centred normal law.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{ChaosError, Result};

/// Minimum sample size accepted by [`ks_normality`].
pub const KS_MIN_SAMPLES: usize = 100;

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small lambda
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// KS statistic and asymptotic p-value of `samples` against `N(0, sigma²)`.
pub fn ks_normality(samples: &[f64], sigma: f64) -> Result<(f64, f64)> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(ChaosError::InvalidArgument(format!(
            "KS test needs at least {KS_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ChaosError::InvalidArgument(format!(
            "KS reference sigma must be positive, got {sigma}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(ChaosError::InvalidArgument(
            "KS samples contain non-finite values".into(),
        ));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| ChaosError::InvalidArgument(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let stat = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = normal.cdf(x);
            ((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok((stat, kolmogorov_sf(n.sqrt() * stat)))
}
