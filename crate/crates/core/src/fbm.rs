//! Power variations of fractional Brownian motion.
//!
//! For `H < ½` and odd `κ`, the increments `X_j = B^H_j - B^H_{j-1}` form a
//! stationary unit-variance Gaussian sequence with correlation `ρ_H(j)`, and
//! by self-similarity
//!
//! `Z_t^{(n)} = n^{κH-½} Σ_{j<=[nt]} (B^H_{j/n} - B^H_{(j-1)/n})^κ = n^{-½} Σ_{j<=[nt]} X_j^κ`.
//!
//! `Z^{(n)}` converges to `c W` with `W` a Brownian motion independent of
//! `B^H`. Writing `x^κ = Σ_m b_{κ,m} He_m(x)`, Mehler's formula gives
//! `E[X_1^κ X_{1+j}^κ] = Σ_m b_{κ,m}² m! ρ_H(j)^m`, so `c²` splits into
//! per-chaos constants `σ_m²`. The constant is reported both as the
//! one-sided sum `Σ_{j>=0} E[(X_1 X_{1+j})^κ]` and as the two-sided sum
//! `Σ_{j∈Z}` that the variance of `Z_1^{(n)}` actually approaches.
//!
//! Paths are simulated exactly: the Toeplitz correlation matrix is factored
//! once by Cholesky and applied to independent normal draws, one child
//! stream per path.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{double_factorial_odd, factorial};
use crate::error::{ChaosError, Result};
use crate::hermite::hermite_table;
use crate::ks::{ks_normality, KS_MIN_SAMPLES};
use crate::mc::{neumaier_sum, McEstimate};
use crate::rng::RandomStream;

/// Largest number of increments simulated by dense Cholesky.
pub const CHOLESKY_BUDGET: usize = 8192;

/// Largest power `κ`; Hermite coefficients beyond it lose exactness in `f64`.
pub const KAPPA_CAP: u32 = 21;

/// Tail tolerance for the `ρ`-series used wherever none is given.
pub const SERIES_TOL: f64 = 1e-10;

/// Number of dyadic refinements of `[0, T]` in the experiment tables.
pub const DYADIC_LEVELS: u32 = 4;

const MAX_LAG: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbmConfig {
    pub hurst: f64,
    pub kappa: u32,
    /// Grid points per unit time.
    pub n: usize,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
}

impl Default for FbmConfig {
    fn default() -> Self {
        Self {
            hurst: 0.35,
            kappa: 3,
            n: 1024,
            horizon: 1.0,
            paths: 4000,
            seed: 1,
        }
    }
}

impl FbmConfig {
    /// Number of increments `N = ⌈nT⌉`.
    pub fn steps(&self) -> usize {
        (self.n as f64 * self.horizon - 1e-9).ceil().max(0.0) as usize
    }

    /// Grid, power and path checks shared by every operation. The Hurst
    /// parameter only has to make the increment covariance valid here.
    pub fn validate_grid(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(ChaosError::InvalidArgument(format!(
                "Hurst parameter {} outside (0, 1)",
                self.hurst
            )));
        }
        check_kappa(self.kappa)?;
        if self.n == 0 {
            return Err(ChaosError::InvalidArgument("grid size n must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ChaosError::InvalidArgument(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        let steps = self.steps();
        if steps > CHOLESKY_BUDGET {
            return Err(ChaosError::InvalidArgument(format!(
                "{steps} increments exceed the Cholesky budget of {CHOLESKY_BUDGET}"
            )));
        }
        if self.paths == 0 {
            return Err(ChaosError::InvalidArgument("need at least one path".into()));
        }
        Ok(())
    }

    /// Full contract of the limit theorem: the grid checks plus `H < ½`.
    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 0.5) {
            return Err(ChaosError::HurstOutOfRange(self.hurst));
        }
        self.validate_grid()
    }

    /// `[nt]`, the number of increments up to time `t`.
    fn grid_count(&self, t: f64) -> usize {
        (self.n as f64 * t * (1.0 + 1e-12)).floor() as usize
    }
}

fn check_kappa(kappa: u32) -> Result<()> {
    if kappa % 2 == 0 {
        return Err(ChaosError::InvalidArgument(format!("power κ = {kappa} must be odd")));
    }
    if kappa > KAPPA_CAP {
        return Err(ChaosError::InvalidArgument(format!(
            "power κ = {kappa} exceeds the cap of {KAPPA_CAP}"
        )));
    }
    Ok(())
}

/// `E[B^H_t B^H_s] = ½(t^{2H} + s^{2H} - |t-s|^{2H})`.
pub fn fbm_cov(t: f64, s: f64, hurst: f64) -> f64 {
    let a = 2.0 * hurst;
    0.5 * (t.powf(a) + s.powf(a) - (t - s).abs().powf(a))
}

/// `ρ_H(j) = ½((j+1)^{2H} - 2j^{2H} + (j-1)^{2H})`, with `ρ_H(0) = 1`.
pub fn increment_corr(j: usize, hurst: f64) -> f64 {
    let a = 2.0 * hurst;
    if j == 0 {
        return 1.0;
    }
    let jf = j as f64;
    if j < 16 {
        return 0.5 * ((jf + 1.0).powf(a) - 2.0 * jf.powf(a) + (jf - 1.0).powf(a));
    }
    // second difference cancels badly; expand j^a((1+x)^a + (1-x)^a - 2)/2
    let x2 = 1.0 / (jf * jf);
    let mut coef = 1.0;
    let mut pow = 1.0;
    let mut sum = 0.0;
    for k in 1..200 {
        let i = (2 * k) as f64;
        coef *= (a - i + 2.0) * (a - i + 1.0) / ((i - 1.0) * i);
        pow *= x2;
        let term = coef * pow;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    jf.powf(a) * sum
}

/// Envelope `|ρ_H(j)| <= H|1-2H| (j-1)^{2H-2}` for `j >= 2`, summed over `j > lag`
/// after raising to the power `m`.
pub fn tail_envelope(hurst: f64, m: u32, lag: usize) -> f64 {
    let c = (hurst * (1.0 - 2.0 * hurst)).abs().powi(m as i32);
    if c == 0.0 {
        return 0.0;
    }
    let p = m as f64 * (2.0 - 2.0 * hurst);
    if p <= 1.0 || lag < 2 {
        return f64::INFINITY;
    }
    c * ((lag - 1) as f64).powf(1.0 - p) / (p - 1.0)
}

/// Smallest lag `J >= 1` with `Σ_{j>J} |ρ_H(j)|^m < tol` by the envelope.
pub fn truncation_lag(hurst: f64, m: u32, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(ChaosError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let c = (hurst * (1.0 - 2.0 * hurst)).abs().powi(m as i32);
    if c == 0.0 {
        return Ok(1);
    }
    let p = m as f64 * (2.0 - 2.0 * hurst);
    if p <= 1.0 {
        return Err(ChaosError::InvalidArgument(format!(
            "Σ|ρ|^{m} diverges at H = {hurst}"
        )));
    }
    let base = (c / ((p - 1.0) * tol)).powf(1.0 / (p - 1.0));
    if !(base < MAX_LAG) {
        return Err(ChaosError::InvalidArgument(format!(
            "tolerance {tol} needs more than {MAX_LAG} lags"
        )));
    }
    let mut lag = (base.ceil() as usize + 1).max(2);
    while lag > 2 && tail_envelope(hurst, m, lag - 1) < tol {
        lag -= 1;
    }
    Ok(lag)
}

/// Hermite expansion `x^κ = Σ_m b_{κ,m} He_m(x)`, odd `m <= κ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HermitePowerDecomp {
    pub kappa: u32,
    /// `m → b_{κ,m}`.
    pub coeffs: BTreeMap<u32, f64>,
}

impl HermitePowerDecomp {
    pub fn b(&self, m: u32) -> f64 {
        self.coeffs.get(&m).copied().unwrap_or(0.0)
    }

    /// `c_m = m! b_{κ,m}`, the coefficient against `H_m = He_m / m!`.
    pub fn scaled_coeff(&self, m: u32) -> f64 {
        factorial(m as usize) * self.b(m)
    }

    /// `Σ_m b² m!`, which must equal `E[X^{2κ}] = (2κ-1)!!`.
    pub fn parseval(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(&m, &b)| b * b * factorial(m as usize))
            .sum()
    }

    /// `E[X^κ Y^κ] = Σ_m b² m! ρ^m` for a standard pair with correlation `ρ`.
    pub fn mehler_moment(&self, rho: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&m, &b)| b * b * factorial(m as usize) * rho.powi(m as i32))
            .sum()
    }
}

/// `b_{κ,m} = κ! / (m! ((κ-m)/2)! 2^{(κ-m)/2})`.
pub fn hermite_power_decomp(kappa: u32) -> Result<HermitePowerDecomp> {
    check_kappa(kappa)?;
    let k = kappa as usize;
    let coeffs = (1..=kappa)
        .step_by(2)
        .map(|m| {
            let half = (k - m as usize) / 2;
            let b = factorial(k) / (factorial(m as usize) * factorial(half) * 2f64.powi(half as i32));
            (m, b.round())
        })
        .collect();
    Ok(HermitePowerDecomp { kappa, coeffs })
}

/// `E[X^κ Y^κ]` through `Y = ρX + √(1-ρ²) Z`, without Hermite polynomials.
pub fn bivariate_power_moment(kappa: u32, rho: f64) -> f64 {
    let k = kappa as usize;
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let mut binom = 1.0;
    let mut acc = 0.0;
    for i in 0..=k {
        if i > 0 {
            binom = binom * (k + 1 - i) as f64 / i as f64;
        }
        // E[X^{κ+i}] E[Z^{κ-i}] vanishes unless κ - i is even
        if (k - i) % 2 == 0 {
            let ex = double_factorial_odd((k + i) / 2);
            let ez = double_factorial_odd((k - i) / 2);
            acc += binom * rho.powi(i as i32) * s.powi((k - i) as i32) * ex * ez;
        }
    }
    acc
}

/// Limit constants of `Z^{(n)}` in both conventions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitConstants {
    pub hurst: f64,
    pub kappa: u32,
    /// `m → b² m! Σ_{j>=0} ρ^m(j)`.
    pub sigma_sq_one_sided: BTreeMap<u32, f64>,
    /// `m → b² m! (1 + 2 Σ_{j>=1} ρ^m(j))`.
    pub sigma_sq_two_sided: BTreeMap<u32, f64>,
    /// `Σ_{j>=0} E[(X_1 X_{1+j})^κ]`.
    pub c_sq_paper: f64,
    /// `E[X_1^{2κ}] + 2 Σ_{j>=1} E[(X_1 X_{1+j})^κ]`.
    pub c_sq_twosided: f64,
    /// Last lag summed explicitly.
    pub truncation: usize,
    /// Envelope bound on the neglected two-sided tail.
    pub tail_bound: f64,
}

impl LimitConstants {
    pub fn sigma_sum_one_sided(&self) -> f64 {
        self.sigma_sq_one_sided.values().sum()
    }

    pub fn sigma_sum_two_sided(&self) -> f64 {
        self.sigma_sq_two_sided.values().sum()
    }
}

/// One lag for every chaos of order at least 2, long enough that the
/// weighted two-sided tail `2 Σ_m b² m! Σ_{j>J} |ρ(j)|^m` stays below `tol`.
fn series_lag(hurst: f64, decomp: &HermitePowerDecomp, tol: f64) -> Result<usize> {
    let orders = decomp.coeffs.keys().filter(|&&m| m >= 2).count().max(1) as f64;
    let mut lag = 1;
    for (&m, &b) in decomp.coeffs.iter().filter(|(&m, _)| m >= 2) {
        let w = b * b * factorial(m as usize);
        lag = lag.max(truncation_lag(hurst, m, tol / (2.0 * w * orders))?);
    }
    Ok(lag)
}

/// Per-chaos constants and `c²`, with the series cut at the envelope lag.
///
/// The first chaos is summed in closed form: the partial sums of `ρ_H`
/// telescope to `½((J+1)^{2H} - J^{2H} + 1)`, so the one-sided sum is `½` and
/// the two-sided sum is `0`.
pub fn limit_constants(cfg: &FbmConfig, tol: f64) -> Result<LimitConstants> {
    cfg.validate()?;
    let h = cfg.hurst;
    let decomp = hermite_power_decomp(cfg.kappa)?;
    let lag = series_lag(h, &decomp, tol)?;
    let rho: Vec<f64> = (0..=lag).map(|j| increment_corr(j, h)).collect();

    let mut one = BTreeMap::new();
    let mut two = BTreeMap::new();
    let mut tail_bound = 0.0;
    for (&m, &b) in &decomp.coeffs {
        let w = b * b * factorial(m as usize);
        if m == 1 {
            one.insert(m, 0.5 * w);
            two.insert(m, 0.0);
            continue;
        }
        let s = neumaier_sum(rho[1..].iter().map(|r| r.powi(m as i32)));
        one.insert(m, w * (1.0 + s));
        two.insert(m, w * (1.0 + 2.0 * s));
        tail_bound += 2.0 * w * tail_envelope(h, m, lag);
    }

    // direct route: full moments minus the first-chaos part, which is exact
    let b1sq = decomp.b(1).powi(2);
    let excess: Vec<f64> = rho
        .iter()
        .map(|&r| bivariate_power_moment(cfg.kappa, r) - b1sq * r)
        .collect();
    let rest = neumaier_sum(excess[1..].iter().copied());
    let c_sq_paper = excess[0] + rest + 0.5 * b1sq;
    let c_sq_twosided = excess[0] + 2.0 * rest;

    Ok(LimitConstants {
        hurst: h,
        kappa: cfg.kappa,
        sigma_sq_one_sided: one,
        sigma_sq_two_sided: two,
        c_sq_paper,
        c_sq_twosided,
        truncation: lag,
        tail_bound,
    })
}

/// Stationary increments `X_1, …, X_N` of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementPath {
    pub x: Vec<f64>,
}

/// Cholesky factor of the increment correlation matrix, shared by all paths.
#[derive(Clone, Debug)]
pub struct IncrementSampler {
    hurst: f64,
    len: usize,
    /// Lower triangle, row-major and packed.
    rows: Vec<f64>,
}

impl IncrementSampler {
    pub fn new(hurst: f64, len: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(ChaosError::InvalidArgument(format!(
                "Hurst parameter {hurst} outside (0, 1)"
            )));
        }
        if len == 0 || len > CHOLESKY_BUDGET {
            return Err(ChaosError::InvalidArgument(format!(
                "path length {len} outside 1..={CHOLESKY_BUDGET}"
            )));
        }
        let rho: Vec<f64> = (0..len).map(|j| increment_corr(j, hurst)).collect();
        let cov = DMatrix::from_fn(len, len, |i, j| rho[i.abs_diff(j)]);
        let factor = Cholesky::new(cov).ok_or(ChaosError::NotPositiveDefinite(len))?;
        let l = factor.l();
        let mut rows = Vec::with_capacity(len * (len + 1) / 2);
        for i in 0..len {
            rows.extend((0..=i).map(|k| l[(i, k)]));
        }
        Ok(Self { hurst, len, rows })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `L z` with `z` the first `N` normals of `stream`.
    pub fn sample(&self, stream: RandomStream) -> IncrementPath {
        let z = stream.normal_block(0, self.len);
        let mut x = Vec::with_capacity(self.len);
        let mut start = 0;
        for i in 0..self.len {
            let row = &self.rows[start..start + i + 1];
            x.push(row.iter().zip(&z).map(|(a, b)| a * b).sum());
            start += i + 1;
        }
        IncrementPath { x }
    }
}

/// One path of `cfg` drawn from `stream`.
pub fn simulate_increments(cfg: &FbmConfig, stream: RandomStream) -> Result<IncrementPath> {
    cfg.validate_grid()?;
    Ok(IncrementSampler::new(cfg.hurst, cfg.steps())?.sample(stream))
}

fn check_time(cfg: &FbmConfig, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= cfg.horizon * (1.0 + 1e-12)) {
        return Err(ChaosError::InvalidArgument(format!(
            "time {t} outside [0, {}]",
            cfg.horizon
        )));
    }
    Ok(())
}

fn window(cfg: &FbmConfig, path: &IncrementPath, t: f64) -> Result<usize> {
    check_time(cfg, t)?;
    let k = cfg.grid_count(t);
    if k > path.x.len() {
        return Err(ChaosError::InvalidArgument(format!(
            "time {t} needs {k} increments, path has {}",
            path.x.len()
        )));
    }
    Ok(k)
}

/// `Z_t^{(n)} = n^{-½} Σ_{j<=[nt]} X_j^κ`.
pub fn power_variation(path: &IncrementPath, cfg: &FbmConfig, t: f64) -> Result<f64> {
    check_kappa(cfg.kappa)?;
    let k = window(cfg, path, t)?;
    let p = cfg.kappa as i32;
    Ok(path.x[..k].iter().map(|x| x.powi(p)).sum::<f64>() / (cfg.n as f64).sqrt())
}

/// `B^H_t = n^{-H} Σ_{j<=[nt]} X_j` on the grid.
pub fn fbm_level(path: &IncrementPath, cfg: &FbmConfig, t: f64) -> Result<f64> {
    let k = window(cfg, path, t)?;
    Ok(path.x[..k].iter().sum::<f64>() * (cfg.n as f64).powf(-cfg.hurst))
}

/// `Σ_{|l|<K} (K-|l|) ρ(l)^m`, cut at lag `lag` for `m >= 2`.
fn window_sum(hurst: f64, m: u32, k: usize, lag: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if m == 1 {
        // Var of a sum of K increments
        return (k as f64).powf(2.0 * hurst);
    }
    let top = lag.min(k - 1);
    k as f64
        + 2.0 * neumaier_sum((1..=top).map(|l| (k - l) as f64 * increment_corr(l, hurst).powi(m as i32)))
}

/// The cut used by [`limit_constants`]: the largest envelope lag over the
/// chaoses of order at least 2. Pathwise terms decay only like `ρ(l)`, so a
/// per-chaos cut would be too short for the low orders.
fn ergodic_lag(cfg: &FbmConfig) -> Result<usize> {
    series_lag(cfg.hurst, &hermite_power_decomp(cfg.kappa)?, SERIES_TOL)
}

fn check_ergodic_args(cfg: &FbmConfig, m: u32, a: f64, b: f64) -> Result<()> {
    cfg.validate_grid()?;
    if m == 0 || m > cfg.kappa {
        return Err(ChaosError::InvalidArgument(format!(
            "chaos order {m} outside 1..={}",
            cfg.kappa
        )));
    }
    if !(a >= 0.0 && a < b) {
        return Err(ChaosError::InvalidArgument(format!("need 0 <= a < b, got ({a}, {b})")));
    }
    check_time(cfg, b)
}

/// `(c_m²/n) Σ_{i,j ∈ ([na],[nb]]} H_{m-1}(X_i) H_{m-1}(X_j) ρ_H(j-i)`, with
/// `H_k = He_k / k!` and lags beyond the envelope cut dropped.
///
/// This is `‖D J_m Z‖²` restricted to the window; its limit is
/// `(b-a) m σ_m²` in the two-sided convention.
pub fn ergodic_derivative_stat(path: &IncrementPath, m: u32, a: f64, b: f64, cfg: &FbmConfig) -> Result<f64> {
    check_ergodic_args(cfg, m, a, b)?;
    let decomp = hermite_power_decomp(cfg.kappa)?;
    let cm = decomp.scaled_coeff(m);
    if cm == 0.0 {
        return Ok(0.0);
    }
    let lo = cfg.grid_count(a);
    let hi = window(cfg, path, b)?;
    let k = hi - lo;
    let scale = cm * cm / cfg.n as f64;
    if m == 1 {
        return Ok(scale * window_sum(cfg.hurst, 1, k, 0));
    }
    let norm = factorial(m as usize - 1);
    let mut table = Vec::with_capacity(m as usize);
    let h: Vec<f64> = path.x[lo..hi]
        .iter()
        .map(|&x| {
            hermite_table(m as usize - 1, x, &mut table);
            table[m as usize - 1] / norm
        })
        .collect();
    let lag = ergodic_lag(cfg)?.min(k.saturating_sub(1));
    let mut acc = h.iter().map(|v| v * v).sum::<f64>();
    for l in 1..=lag {
        let r = increment_corr(l, cfg.hurst);
        acc += 2.0 * r * h.iter().zip(&h[l..]).map(|(x, y)| x * y).sum::<f64>();
    }
    Ok(scale * acc)
}

/// Exact expectation of [`ergodic_derivative_stat`] at this grid.
pub fn ergodic_expectation(cfg: &FbmConfig, m: u32, a: f64, b: f64) -> Result<f64> {
    check_ergodic_args(cfg, m, a, b)?;
    let cm = hermite_power_decomp(cfg.kappa)?.scaled_coeff(m);
    let k = cfg.grid_count(b) - cfg.grid_count(a);
    let s = window_sum(cfg.hurst, m, k, ergodic_lag(cfg)?);
    // E[H_{m-1}(X) H_{m-1}(Y)] ρ = ρ^m / (m-1)!
    Ok(cm * cm / cfg.n as f64 * s / factorial(m as usize - 1))
}

/// Exact `E[(Z_t - Z_s)²]` for a window of `k` increments at this grid.
pub fn window_variance(cfg: &FbmConfig, k: usize, tol: f64) -> Result<f64> {
    cfg.validate_grid()?;
    let decomp = hermite_power_decomp(cfg.kappa)?;
    let mut acc = 0.0;
    for (&m, &b) in &decomp.coeffs {
        let lag = if m >= 2 { truncation_lag(cfg.hurst, m, tol)? } else { 0 };
        acc += b * b * factorial(m as usize) * window_sum(cfg.hurst, m, k, lag);
    }
    Ok(acc / cfg.n as f64)
}

/// Exact `Var(Z_t^{(n)})` at finite `n`.
pub fn finite_variance(cfg: &FbmConfig, t: f64, tol: f64) -> Result<f64> {
    check_time(cfg, t)?;
    window_variance(cfg, cfg.grid_count(t), tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub b_t: f64,
    pub z_t: f64,
}

/// `Var(B_t - B_s)` against `|t-s|^{2H}` on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IncrementCheck {
    pub s: f64,
    pub t: f64,
    pub estimate: McEstimate,
    pub target: f64,
}

/// `E|Z_t - Z_s|² / |t-s|` on one dyadic interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegularityRow {
    pub s: f64,
    pub t: f64,
    pub estimate: McEstimate,
    pub exact: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErgodicRow {
    pub m: u32,
    pub estimate: McEstimate,
    /// `(b-a) m σ_m²`, two-sided.
    pub target_two_sided: f64,
    /// `(b-a) m σ_m²`, one-sided.
    pub target_one_sided: f64,
    /// Expectation of the statistic at this `n`.
    pub finite_n: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointSummary {
    pub config: FbmConfig,
    pub constants: LimitConstants,
    /// Pooled lag-1 correlation of the increments.
    pub rho1: McEstimate,
    pub rho1_target: f64,
    pub increments: Vec<IncrementCheck>,
    pub mean_z: f64,
    pub var_z: f64,
    /// Exact `Var(Z_T^{(n)})` at this `n`.
    pub var_z_finite: f64,
    pub corr_level: f64,
    pub corr_square: f64,
    /// `4/√M`.
    pub corr_bound: f64,
    /// KS of `Z_T` against `N(0, c² T)`, two-sided `c²`; absent when `c² = 0`.
    pub ks_stat: Option<f64>,
    pub ks_p: Option<f64>,
    /// KS of `Z_T` against its exact finite-`n` variance.
    pub ks_finite_p: Option<f64>,
    pub ergodic: Vec<ErgodicRow>,
    pub regularity: Vec<RegularityRow>,
    pub regularity_max: f64,
}

impl JointSummary {
    pub fn independence_flags(&self) -> (bool, bool) {
        (
            self.corr_level.abs() < self.corr_bound,
            self.corr_square.abs() < self.corr_bound,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointExperiment {
    pub samples: Vec<PathSample>,
    pub summary: JointSummary,
}

struct PathStats {
    b_t: f64,
    z_t: f64,
    lag1: f64,
    b_at: Vec<f64>,
    z_at: Vec<f64>,
    ergodic: Vec<f64>,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = neumaier_sum(x.iter().copied()) / n;
    let my = neumaier_sum(y.iter().copied()) / n;
    let sxy = neumaier_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = neumaier_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = neumaier_sum(y.iter().map(|b| (b - my) * (b - my)));
    sxy / (sxx * syy).sqrt()
}

/// Simulates `M` paths and tests the limit theorem's conclusions and proof
/// conditions on them.
pub fn joint_experiment(cfg: &FbmConfig) -> Result<JointExperiment> {
    cfg.validate()?;
    let constants = limit_constants(cfg, SERIES_TOL)?;
    let decomp = hermite_power_decomp(cfg.kappa)?;
    let sampler = IncrementSampler::new(cfg.hurst, cfg.steps())?;
    let stream = RandomStream::new(cfg.seed, 0);
    let t_end = cfg.horizon;
    let cells = 1usize << DYADIC_LEVELS;
    let times: Vec<f64> = (0..=cells).map(|k| t_end * k as f64 / cells as f64).collect();
    let orders: Vec<u32> = decomp.coeffs.keys().copied().collect();

    let stats = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let path = sampler.sample(stream.child(p as u64));
            let lag1 = if path.x.len() > 1 {
                path.x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (path.x.len() - 1) as f64
            } else {
                0.0
            };
            let b_at = times.iter().map(|&t| fbm_level(&path, cfg, t)).collect::<Result<Vec<_>>>()?;
            let z_at = times
                .iter()
                .map(|&t| power_variation(&path, cfg, t))
                .collect::<Result<Vec<_>>>()?;
            let ergodic = orders
                .iter()
                .map(|&m| ergodic_derivative_stat(&path, m, 0.0, t_end, cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok(PathStats {
                b_t: fbm_level(&path, cfg, t_end)?,
                z_t: power_variation(&path, cfg, t_end)?,
                lag1,
                b_at,
                z_at,
                ergodic,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let b: Vec<f64> = stats.iter().map(|s| s.b_t).collect();
    let z: Vec<f64> = stats.iter().map(|s| s.z_t).collect();
    let rho1 = McEstimate::from_values(&stats.iter().map(|s| s.lag1).collect::<Vec<_>>());

    let mut increments = Vec::new();
    let mut regularity = Vec::new();
    for level in 0..=DYADIC_LEVELS {
        let step = cells >> level;
        for i in (0..cells).step_by(step) {
            let (s, t) = (times[i], times[i + step]);
            let k = cfg.grid_count(t) - cfg.grid_count(s);
            if k == 0 {
                continue;
            }
            let db: Vec<f64> = stats.iter().map(|p| (p.b_at[i + step] - p.b_at[i]).powi(2)).collect();
            increments.push(IncrementCheck {
                s,
                t,
                estimate: McEstimate::from_values(&db),
                target: (k as f64 / cfg.n as f64).powf(2.0 * cfg.hurst),
            });
            let dz: Vec<f64> = stats
                .iter()
                .map(|p| (p.z_at[i + step] - p.z_at[i]).powi(2) / (t - s))
                .collect();
            regularity.push(RegularityRow {
                s,
                t,
                estimate: McEstimate::from_values(&dz),
                exact: window_variance(cfg, k, SERIES_TOL)? / (t - s),
            });
        }
    }
    let regularity_max = regularity.iter().map(|r| r.estimate.mean).fold(0.0, f64::max);

    let z_est = McEstimate::from_values(&z);
    let var_z = neumaier_sum(z.iter().map(|v| (v - z_est.mean).powi(2))) / (z.len().max(2) - 1) as f64;
    let var_z_finite = finite_variance(cfg, t_end, SERIES_TOL)?;

    let b2: Vec<f64> = b.iter().map(|v| v * v).collect();
    let z2: Vec<f64> = z.iter().map(|v| v * v).collect();
    let (corr_level, corr_square) = if z.len() >= 2 {
        (pearson(&b, &z), pearson(&b2, &z2))
    } else {
        (f64::NAN, f64::NAN)
    };

    let enough = z.len() >= KS_MIN_SAMPLES;
    let (ks_stat, ks_p) = if enough && constants.c_sq_twosided > 0.0 {
        let (d, p) = ks_normality(&z, (constants.c_sq_twosided * t_end).sqrt())?;
        (Some(d), Some(p))
    } else {
        (None, None)
    };
    let ks_finite_p = if enough && var_z_finite > 0.0 {
        Some(ks_normality(&z, var_z_finite.sqrt())?.1)
    } else {
        None
    };

    let ergodic = orders
        .iter()
        .enumerate()
        .map(|(idx, &m)| {
            let vals: Vec<f64> = stats.iter().map(|s| s.ergodic[idx]).collect();
            let mf = m as f64;
            Ok(ErgodicRow {
                m,
                estimate: McEstimate::from_values(&vals),
                target_two_sided: t_end * mf * constants.sigma_sq_two_sided[&m],
                target_one_sided: t_end * mf * constants.sigma_sq_one_sided[&m],
                finite_n: ergodic_expectation(cfg, m, 0.0, t_end)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = JointSummary {
        config: cfg.clone(),
        constants,
        rho1,
        rho1_target: increment_corr(1, cfg.hurst),
        increments,
        mean_z: z_est.mean,
        var_z,
        var_z_finite,
        corr_level,
        corr_square,
        corr_bound: 4.0 / (cfg.paths as f64).sqrt(),
        ks_stat,
        ks_p,
        ks_finite_p,
        ergodic,
        regularity,
        regularity_max,
    };
    let samples = stats
        .iter()
        .map(|s| PathSample { b_t: s.b_t, z_t: s.z_t })
        .collect();
    Ok(JointExperiment { samples, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::mc_mean;
    use wiener_oracle::poly::hermite_coefficients;
    use wiener_oracle::{bivariate_moment, gaussian_moment};

    fn cfg(hurst: f64, kappa: u32, n: usize, paths: usize) -> FbmConfig {
        FbmConfig {
            hurst,
            kappa,
            n,
            horizon: 1.0,
            paths,
            seed: 11,
        }
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(fbm_cov(1.0, 1.0, 0.2), 1.0);
        assert_eq!(fbm_cov(0.7, 0.0, 0.35), 0.0);
        let v = fbm_cov(2.0, 1.0, 0.35);
        assert!((v - 0.5 * 2f64.powf(0.7)).abs() < 1e-15);
        assert!((v - 0.8123).abs() < 1e-4);
        assert_eq!(fbm_cov(0.3, 0.9, 0.1), fbm_cov(0.9, 0.3, 0.1));
        assert!((fbm_cov(2.5, 2.5, 0.3) - 2.5f64.powf(0.6)).abs() < 1e-14);
    }

    #[test]
    fn correlation_examples() {
        assert_eq!(increment_corr(0, 0.3), 1.0);
        assert_eq!(increment_corr(1, 0.5), 0.0);
        let r = increment_corr(1, 0.35);
        assert!((r - 0.5 * (2f64.powf(0.7) - 2.0)).abs() < 1e-15);
        assert!((r + 0.18775).abs() < 1e-5);
        for j in 1..200 {
            assert!(increment_corr(j, 0.35) < 0.0);
        }
    }

    #[test]
    fn series_branch_matches_covariance_differences() {
        for &h in &[0.05, 0.2, 0.35, 0.45] {
            for j in 16..64usize {
                let jf = j as f64;
                let direct = fbm_cov(jf + 1.0, 1.0, h) - fbm_cov(jf, 1.0, h);
                let series = increment_corr(j, h);
                assert!((series - direct).abs() <= 1e-9 * direct.abs(), "h={h} j={j}");
            }
        }
    }

    #[test]
    fn correlation_power_law() {
        let h = 0.35;
        let target = h * (1.0 - 2.0 * h);
        let j = 1_000_000usize;
        let scaled = increment_corr(j, h).abs() * (j as f64).powf(2.0 - 2.0 * h);
        assert!((scaled - target).abs() < 1e-6);
    }

    #[test]
    fn envelope_dominates_correlation() {
        for &h in &[0.1, 0.35, 0.49] {
            for j in 2..500usize {
                let env = h * (1.0 - 2.0 * h) * ((j - 1) as f64).powf(2.0 * h - 2.0);
                assert!(increment_corr(j, h).abs() <= env);
            }
            let lag = truncation_lag(h, 3, 1e-10).unwrap();
            assert!(tail_envelope(h, 3, lag) < 1e-10);
            let brute: f64 = (lag + 1..lag + 200_000).map(|j| increment_corr(j, h).abs().powi(3)).sum();
            assert!(brute <= tail_envelope(h, 3, lag));
        }
    }

    #[test]
    fn decomposition_examples() {
        let d = hermite_power_decomp(1).unwrap();
        assert_eq!(d.coeffs, BTreeMap::from([(1, 1.0)]));
        let d = hermite_power_decomp(3).unwrap();
        assert_eq!(d.coeffs, BTreeMap::from([(1, 3.0), (3, 1.0)]));
        let d = hermite_power_decomp(5).unwrap();
        assert_eq!(d.coeffs, BTreeMap::from([(1, 15.0), (3, 10.0), (5, 1.0)]));
        assert!(hermite_power_decomp(4).is_err());
        assert!(hermite_power_decomp(23).is_err());
    }

    #[test]
    fn decomposition_matches_polynomial_identity() {
        // expand Σ b He_m in monomials and compare with x^κ
        for kappa in (1..=15u32).step_by(2) {
            let d = hermite_power_decomp(kappa).unwrap();
            let mut mono = vec![0.0; kappa as usize + 1];
            for (&m, &b) in &d.coeffs {
                for (k, c) in hermite_coefficients(m).iter().enumerate() {
                    mono[k] += b * c;
                }
            }
            for (k, c) in mono.iter().enumerate() {
                let want = if k == kappa as usize { 1.0 } else { 0.0 };
                assert!((c - want).abs() < 1e-6, "κ={kappa} k={k} c={c}");
            }
        }
    }

    #[test]
    fn parseval_up_to_cap() {
        for kappa in (1..=KAPPA_CAP).step_by(2) {
            let d = hermite_power_decomp(kappa).unwrap();
            let want = gaussian_moment(2 * kappa);
            assert!((d.parseval() - want).abs() <= 1e-12 * want, "κ={kappa}");
        }
    }

    #[test]
    fn mehler_matches_bivariate_moments() {
        for kappa in [1u32, 3, 5, 7] {
            let d = hermite_power_decomp(kappa).unwrap();
            for &rho in &[-0.9, -0.5, 0.0, 0.3, 0.7, 1.0] {
                let want = bivariate_moment(kappa, kappa, rho);
                assert!((d.mehler_moment(rho) - want).abs() <= 1e-10 * (1.0 + want.abs()));
                assert!((bivariate_power_moment(kappa, rho) - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn mehler_monte_carlo() {
        let d = hermite_power_decomp(3).unwrap();
        for (i, &rho) in [-0.5f64, 0.0, 0.7].iter().enumerate() {
            let s = (1.0 - rho * rho).sqrt();
            let est = mc_mean(2, 200_000, RandomStream::new(5, i as u64), |xi| {
                let y = rho * xi[0] + s * xi[1];
                (xi[0] * y).powi(3)
            })
            .unwrap();
            assert!(est.within(d.mehler_moment(rho), 4.0), "rho={rho} {est:?}");
        }
    }

    #[test]
    fn kappa_one_constants_telescope() {
        let c = limit_constants(&cfg(0.35, 1, 64, 1), 1e-10).unwrap();
        assert_eq!(c.c_sq_twosided, 0.0);
        assert!((c.c_sq_paper - 0.5).abs() < 1e-15);
        // partial sums of ρ: Σ_{j<=J} ρ(j) = ½((J+1)^{2H} - J^{2H} + 1)
        let h = 0.35;
        for big in [10usize, 1000] {
            let partial: f64 = (0..=big).map(|j| increment_corr(j, h)).sum();
            let closed = 0.5 * ((big as f64 + 1.0).powf(2.0 * h) - (big as f64).powf(2.0 * h) + 1.0);
            assert!((partial - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn conventions_reconcile() {
        for &(h, kappa) in &[(0.35, 3u32), (0.2, 5), (0.45, 3), (0.35, 7)] {
            let c = limit_constants(&cfg(h, kappa, 64, 1), 1e-10).unwrap();
            let slack = c.tail_bound + 1e-9 * c.c_sq_twosided.abs().max(1.0);
            assert!((c.sigma_sum_two_sided() - c.c_sq_twosided).abs() <= slack);
            assert!((c.sigma_sum_one_sided() - c.c_sq_paper).abs() <= slack);
            assert!(c.sigma_sq_two_sided.values().all(|&v| v >= 0.0));
            assert!(c.tail_bound <= 1e-10);
        }
    }

    #[test]
    fn kappa_three_two_sided_constant() {
        let h = 0.35;
        let c = limit_constants(&cfg(h, 3, 64, 1), 1e-10).unwrap();
        // 9ρ part telescopes away, leaving 6(1 + 2Σ_{j>=1} ρ³)
        let s: f64 = (1..200_000).map(|j| increment_corr(j, h).powi(3)).sum();
        assert!((c.c_sq_twosided - 6.0 * (1.0 + 2.0 * s)).abs() <= c.tail_bound + 1e-12);
        // independent route through the oracle's bivariate moments
        let direct: f64 = 15.0 - 9.0
            + 2.0 * (1..5000)
                .map(|j| {
                    let r = increment_corr(j, h);
                    bivariate_moment(3, 3, r) - 9.0 * r
                })
                .sum::<f64>();
        assert!((c.c_sq_twosided - direct).abs() < 1e-8);
        assert!(c.c_sq_twosided > 5.0 && c.c_sq_twosided < 6.0);
    }

    #[test]
    fn config_contract() {
        assert!(cfg(0.5, 3, 64, 1).validate().is_err());
        assert!(cfg(0.6, 3, 64, 1).validate().is_err());
        assert!(cfg(0.0, 3, 64, 1).validate().is_err());
        assert!(cfg(0.35, 2, 64, 1).validate().is_err());
        assert!(cfg(0.35, 3, 9000, 1).validate().is_err());
        assert!(cfg(0.35, 3, 64, 1).validate().is_ok());
        assert!(cfg(0.5, 3, 64, 1).validate_grid().is_ok());
        assert!(matches!(limit_constants(&cfg(0.5, 3, 64, 1), 1e-10), Err(ChaosError::HurstOutOfRange(_))));
        let mut c = cfg(0.35, 3, 100, 1);
        c.horizon = 2.5;
        assert_eq!(c.steps(), 250);
    }

    #[test]
    fn brownian_increments_are_independent() {
        let c = cfg(0.5, 1, 4096, 1);
        let path = simulate_increments(&c, RandomStream::new(3, 0)).unwrap();
        let n = path.x.len() as f64;
        let lag1: f64 = path.x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        assert!(lag1.abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn simulation_is_deterministic() {
        let c = cfg(0.35, 3, 256, 1);
        let a = simulate_increments(&c, RandomStream::new(9, 0).child(4)).unwrap();
        let b = simulate_increments(&c, RandomStream::new(9, 0).child(4)).unwrap();
        assert_eq!(a, b);
        let other = simulate_increments(&c, RandomStream::new(9, 0).child(5)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn pooled_lag_one_correlation() {
        let sampler = IncrementSampler::new(0.35, 2048).unwrap();
        let stream = RandomStream::new(21, 0);
        let vals: Vec<f64> = (0..200)
            .map(|p| {
                let x = sampler.sample(stream.child(p)).x;
                x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (x.len() - 1) as f64
            })
            .collect();
        let est = McEstimate::from_values(&vals);
        assert!(est.within(-0.18775, 4.0), "{est:?}");
    }

    #[test]
    fn power_variation_examples() {
        let c = cfg(0.35, 3, 64, 1);
        let ones = IncrementPath { x: vec![1.0; 64] };
        assert_eq!(power_variation(&ones, &c, 1.0 / 128.0).unwrap(), 0.0);
        assert_eq!(power_variation(&ones, &c, 0.0).unwrap(), 0.0);
        assert!((power_variation(&ones, &c, 1.0).unwrap() - 8.0).abs() < 1e-14);
        assert!(power_variation(&ones, &c, 1.5).is_err());
        // additivity over the grid
        let path = simulate_increments(&c, RandomStream::new(2, 0)).unwrap();
        let whole = power_variation(&path, &c, 1.0).unwrap();
        let half = power_variation(&path, &c, 0.5).unwrap();
        let second: f64 = path.x[32..].iter().map(|x| x.powi(3)).sum::<f64>() / 8.0;
        assert!((whole - half - second).abs() < 1e-12);
    }

    #[test]
    fn brownian_kappa_one_is_gaussian() {
        let c = cfg(0.5, 1, 256, 1);
        let sampler = IncrementSampler::new(0.5, 256).unwrap();
        let stream = RandomStream::new(8, 0);
        let z: Vec<f64> = (0..2000)
            .map(|p| power_variation(&sampler.sample(stream.child(p)), &c, 1.0).unwrap())
            .collect();
        let (_, p) = ks_normality(&z, 1.0).unwrap();
        assert!(p > 0.01);
    }

    #[test]
    fn ergodic_first_chaos_is_deterministic() {
        let c = cfg(0.35, 3, 128, 1);
        let stream = RandomStream::new(1, 0);
        let a = simulate_increments(&c, stream.child(0)).unwrap();
        let b = simulate_increments(&c, stream.child(1)).unwrap();
        let sa = ergodic_derivative_stat(&a, 1, 0.0, 1.0, &c).unwrap();
        let sb = ergodic_derivative_stat(&b, 1, 0.0, 1.0, &c).unwrap();
        assert_eq!(sa, sb);
        // (c_1²/n) Σ_{i,j} ρ(j-i) by brute force
        let brute: f64 = (0..128usize)
            .flat_map(|i| (0..128usize).map(move |j| increment_corr(i.abs_diff(j), 0.35)))
            .sum();
        assert!((sa - 9.0 * brute / 128.0).abs() < 1e-10);
        assert_eq!(sa, ergodic_expectation(&c, 1, 0.0, 1.0).unwrap());
    }

    #[test]
    fn ergodic_brownian_second_chaos() {
        // b_{κ,2} = 0 for odd κ, so σ_2² = 0 and the statistic vanishes
        let c = cfg(0.5, 3, 256, 1);
        let path = simulate_increments(&c, RandomStream::new(4, 0)).unwrap();
        assert_eq!(ergodic_derivative_stat(&path, 2, 0.0, 1.0, &c).unwrap(), 0.0);
        // third chaos at H = ½: mean 3 σ_3² = 3 · 1² · 3!
        let sampler = IncrementSampler::new(0.5, 256).unwrap();
        let stream = RandomStream::new(4, 1);
        let vals: Vec<f64> = (0..500)
            .map(|p| ergodic_derivative_stat(&sampler.sample(stream.child(p)), 3, 0.0, 1.0, &c).unwrap())
            .collect();
        let est = McEstimate::from_values(&vals);
        assert!(est.within(18.0, 4.0), "{est:?}");
        assert!((ergodic_expectation(&c, 3, 0.0, 1.0).unwrap() - 18.0).abs() < 1e-12);
    }

    #[test]
    fn ergodic_matches_dense_double_sum() {
        let c = cfg(0.35, 5, 64, 1);
        let path = simulate_increments(&c, RandomStream::new(6, 0)).unwrap();
        let d = hermite_power_decomp(5).unwrap();
        for m in [3u32, 5] {
            let cm = d.scaled_coeff(m);
            let hm = |x: f64| crate::hermite::hermite_normalized(m as usize - 1, x).unwrap();
            let (lo, hi) = (16usize, 48usize);
            let mut dense = 0.0;
            for i in lo..hi {
                for j in lo..hi {
                    dense += hm(path.x[i]) * hm(path.x[j]) * increment_corr(i.abs_diff(j), 0.35);
                }
            }
            dense *= cm * cm / 64.0;
            let fast = ergodic_derivative_stat(&path, m, 0.25, 0.75, &c).unwrap();
            assert!((fast - dense).abs() <= 1e-10 * dense.abs().max(1.0), "m={m} {fast} {dense}");
        }
    }

    #[test]
    fn finite_variance_matches_brute_force() {
        let c = cfg(0.35, 3, 64, 1);
        let mut brute = 0.0;
        for i in 0..64usize {
            for j in 0..64usize {
                brute += bivariate_moment(3, 3, increment_corr(i.abs_diff(j), 0.35));
            }
        }
        brute /= 64.0;
        let v = finite_variance(&c, 1.0, 1e-14).unwrap();
        assert!((v - brute).abs() < 1e-9 * brute, "{v} {brute}");
        // κ = 1: Var(Z_1) = n^{2H-1} exactly
        let c1 = cfg(0.35, 1, 512, 1);
        assert!((finite_variance(&c1, 1.0, 1e-10).unwrap() - 512f64.powf(-0.3)).abs() < 1e-14);
    }

    #[test]
    fn small_joint_experiment() {
        let c = FbmConfig {
            hurst: 0.35,
            kappa: 3,
            n: 128,
            horizon: 1.0,
            paths: 400,
            seed: 3,
        };
        let run = joint_experiment(&c).unwrap();
        let s = &run.summary;
        assert_eq!(run.samples.len(), 400);
        assert!(s.rho1.within(s.rho1_target, 4.0));
        assert!(s.increments.iter().all(|i| i.estimate.within(i.target, 5.0)));
        assert!(s.regularity.iter().all(|r| r.estimate.within(r.exact, 5.0)));
        assert!(s.ks_p.is_some());
        assert!(s.ks_finite_p.unwrap() > 1e-3);
        assert_eq!(s.ergodic.len(), 2);
        let again = joint_experiment(&c).unwrap();
        assert_eq!(run, again);
    }
}
