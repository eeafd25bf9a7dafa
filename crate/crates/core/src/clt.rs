//! Diagnostics for the equivalent conditions of the fourth-moment theorem.
//!
//! For a sequence `F_k = I_n(f_k)` with `E[F_k²] → 1` the following are
//! equivalent: `F_k` is asymptotically `N(0, 1)`; `E[F_k⁴] → 3`; every
//! contraction `‖f_k ⊗_l f_k‖` with `1 <= l <= n-1` vanishes; and
//! `‖DF_k‖²_H → n` in `L²`. The battery computes each of those metrics
//! exactly for one element of a sequence and raises a flag when a metric is
//! within `eps` of its target. Finite data never certifies a limit, so
//! nothing here claims convergence.
//!
//! The vector version adds the covariance matrix, the off-diagonal Gram
//! moments `E[⟨DF^i, DF^j⟩²]`, `E[(Σ_i F^i)⁴]` against `3d²`, and the mixed
//! fourth moments over [`enumerate_vd`]. [`diagnose_general`] covers sums of
//! chaoses chaos by chaos.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::chaos_algebra::{
    deriv_gram_second_moment, dnorm2_l2_deviation, e_dnorm2, e_dnorm4, gram_coefficient,
    var_dnorm2, ChaosExpansion,
};
use crate::chaos_eval::{eval_integral, grad_norm_sq};
use crate::combinatorics::factorial;
use crate::error::{ChaosError, Result};
use crate::ks::ks_normality;
use crate::mc::{mc_map, neumaier_sum};
use crate::rng::RandomStream;
use crate::symtensor::SymKernel;

/// Default level at which a condition counts as satisfied.
pub const DEFAULT_EPS: f64 = 1e-2;

/// Monte Carlo add-ons for a diagnosis.
#[derive(Clone, Debug)]
pub struct McOptions {
    pub samples: usize,
    pub stream: RandomStream,
    pub t_grid: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BatteryOptions {
    pub eps: f64,
    pub mc: Option<McOptions>,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            mc: None,
        }
    }
}

impl BatteryOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(ChaosError::InvalidArgument(format!(
                "threshold must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Which conditions are met at level `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionFlags {
    /// `|E F² - 1| <= eps`.
    pub normalized: bool,
    /// Condition ii): `|E F⁴ - 3| <= eps`.
    pub fourth_moment: bool,
    /// Condition iii): every `‖f ⊗_l f‖ <= eps`.
    pub contractions: bool,
    /// Condition iv): `E[(‖DF‖² - n)²] <= eps`.
    pub derivative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics1D {
    pub k: usize,
    pub order: usize,
    pub second_moment: f64,
    pub fourth_moment: f64,
    /// Ambient norms `‖f ⊗_l f‖` for `l = 1..n-1`.
    pub contraction_norms: Vec<f64>,
    pub e_dnorm2: f64,
    pub e_dnorm4: f64,
    pub var_dnorm2: f64,
    /// `E[(‖DF‖² - n)²]`.
    pub dnorm2_l2_dev: f64,
    pub char_residual: Option<f64>,
    pub char_stderr: Option<f64>,
    pub ks_stat: Option<f64>,
    pub ks_p: Option<f64>,
    pub flags: ConditionFlags,
}

/// Exact metrics (and optional Monte Carlo checks) for `F = I_n(f)`.
pub fn diagnose_fixed_chaos(f: &SymKernel, k: usize, opts: &BatteryOptions) -> Result<Diagnostics1D> {
    opts.validate()?;
    let n = f.order();
    if n == 0 {
        return Err(ChaosError::OrderTooLow {
            required: 1,
            got: 0,
        });
    }
    let fx = ChaosExpansion::from_kernel(f.clone());
    let second_moment = factorial(n) * f.norm_sq_ambient();
    let fourth_moment = fx.moment(4)?;
    let contraction_norms = (1..n)
        .map(|l| Ok(f.contract(f, l)?.norm_ambient()))
        .collect::<Result<Vec<_>>>()?;
    let e2 = e_dnorm2(f)?;
    let e4 = e_dnorm4(f)?;
    let var = var_dnorm2(f)?;
    let dev = dnorm2_l2_deviation(f)?;

    let eps = opts.eps;
    let flags = ConditionFlags {
        normalized: (second_moment - 1.0).abs() <= eps,
        fourth_moment: (fourth_moment - 3.0).abs() <= eps,
        contractions: contraction_norms.iter().all(|&c| c <= eps),
        derivative: dev <= eps,
    };

    let mut diag = Diagnostics1D {
        k,
        order: n,
        second_moment,
        fourth_moment,
        contraction_norms,
        e_dnorm2: e2,
        e_dnorm4: e4,
        var_dnorm2: var,
        dnorm2_l2_dev: dev,
        char_residual: None,
        char_stderr: None,
        ks_stat: None,
        ks_p: None,
        flags,
    };

    if let Some(mc) = &opts.mc {
        let stream = mc.stream.child(k as u64);
        if !mc.t_grid.is_empty() {
            let res = char_identity_residual(f, &mc.t_grid, mc.samples, stream)?;
            let worst = res.worst();
            diag.char_residual = Some(res.sup_residual);
            diag.char_stderr = Some(worst.stderr);
        }
        let samples = mc_map(f.dim(), mc.samples, stream.child(1), |xi| {
            eval_integral(f, xi).expect("dimension checked")
        });
        let (stat, p) = ks_normality(&samples, 1.0)?;
        diag.ks_stat = Some(stat);
        diag.ks_p = Some(p);
    }
    Ok(diag)
}

/// Residual of `E[F e^{itF}] = (it/n) E[e^{itF} ‖DF‖²]` at one `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CharPoint {
    pub t: f64,
    /// `|mean of F e^{itF} - (it/n) e^{itF} ‖DF‖²|` over the sample.
    pub residual: f64,
    /// Standard error of that complex mean, `sqrt(var Re + var Im) / sqrt(N)`.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharIdentityResidual {
    pub sup_residual: f64,
    pub points: Vec<CharPoint>,
}

impl CharIdentityResidual {
    /// The grid point attaining the sup.
    pub fn worst(&self) -> CharPoint {
        *self
            .points
            .iter()
            .max_by(|a, b| a.residual.total_cmp(&b.residual))
            .expect("non-empty grid")
    }

    /// Every point within `k` standard errors of zero.
    pub fn within(&self, k: f64) -> bool {
        self.points.iter().all(|p| p.residual <= k * p.stderr)
    }
}

/// Monte Carlo check of the integration-by-parts identity behind
/// `δD = -L`, with both sides evaluated on the same sample set.
pub fn char_identity_residual(
    f: &SymKernel,
    t_grid: &[f64],
    samples: usize,
    stream: RandomStream,
) -> Result<CharIdentityResidual> {
    let n = f.order();
    if n == 0 {
        return Err(ChaosError::OrderTooLow {
            required: 1,
            got: 0,
        });
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(ChaosError::InvalidArgument("t grid must be finite and non-empty".into()));
    }
    if samples < 2 {
        return Err(ChaosError::InvalidArgument("need at least 2 samples".into()));
    }
    let pairs = mc_map(f.dim(), samples, stream, |xi| {
        (
            eval_integral(f, xi).expect("dimension checked"),
            grad_norm_sq(f, xi).expect("order checked"),
        )
    });
    let nf = n as f64;
    let count = samples as f64;
    let points = t_grid
        .iter()
        .map(|&t| {
            let (re, im): (Vec<f64>, Vec<f64>) = pairs
                .iter()
                .map(|&(x, g)| {
                    let (s, c) = (t * x).sin_cos();
                    (x * c + t * g * s / nf, x * s - t * g * c / nf)
                })
                .unzip();
            let mre = neumaier_sum(re.iter().copied()) / count;
            let mim = neumaier_sum(im.iter().copied()) / count;
            let vre = neumaier_sum(re.iter().map(|v| (v - mre).powi(2))) / (count - 1.0);
            let vim = neumaier_sum(im.iter().map(|v| (v - mim).powi(2))) / (count - 1.0);
            CharPoint {
                t,
                residual: mre.hypot(mim),
                stderr: ((vre + vim) / count).sqrt(),
            }
        })
        .collect::<Vec<_>>();
    let sup_residual = points.iter().map(|p| p.residual).fold(0.0, f64::max);
    Ok(CharIdentityResidual {
        sup_residual,
        points,
    })
}

/// A unit-variance element of a fixed chaos of order `n >= 2` can never be
/// Gaussian, so `Var(‖DF‖²)` must stay away from zero. A value at or below
/// `tol` means the computation is broken.
pub fn nongaussianity_guard(f: &SymKernel, tol: f64) -> Result<f64> {
    if f.order() < 2 {
        return Err(ChaosError::InvalidArgument(format!(
            "guard applies to chaos order >= 2, got {}",
            f.order()
        )));
    }
    let second = factorial(f.order()) * f.norm_sq_ambient();
    if (second - 1.0).abs() > 1e-9 {
        return Err(ChaosError::InvalidArgument(format!(
            "guard needs E[F^2] = 1, got {second}"
        )));
    }
    let var = var_dnorm2(f)?;
    if var <= tol {
        return Err(ChaosError::Consistency(format!(
            "Var(|DF|^2) = {var} <= {tol} for a unit-variance kernel of order {}",
            f.order()
        )));
    }
    Ok(var)
}

/// The index set `V_d`: 4-tuples over `1..=d` with `i1 != i2 = i3 = i4`,
/// or `i1 != i2 = i3 != i4` with `i4 != i1`, or all four distinct.
/// Lexicographic order.
pub fn enumerate_vd(d: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for i1 in 1..=d {
        for i2 in 1..=d {
            for i3 in 1..=d {
                for i4 in 1..=d {
                    let a = i1 != i2 && i2 == i3 && i3 == i4;
                    let b = i1 != i2 && i2 == i3 && i3 != i4 && i4 != i1;
                    let c = i1 != i2 && i1 != i3 && i1 != i4 && i2 != i3 && i2 != i4 && i3 != i4;
                    if a || b || c {
                        out.push([i1, i2, i3, i4]);
                    }
                }
            }
        }
    }
    out
}

/// `E[⟨DF^i, DF^j⟩²]` with the bounds used to show it vanishes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    /// `Σ_r c_r (n_i+n_j-2r)! ‖f^i ⊗_r f^j‖²`, from dropping the symmetrization.
    pub contraction_bound: f64,
    /// Same sum with `‖f^i ⊗_r f^j‖²` replaced by its Cauchy–Schwarz bound
    /// `‖f^i ⊗_{n_i-r} f^i‖ ‖f^j ⊗_{n_j-r} f^j‖`.
    pub cauchy_schwarz_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VectorFlags {
    pub covariance: bool,
    pub coordinates: bool,
    pub gram_offdiag: bool,
    pub sum_fourth: bool,
    pub vd_moments: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorDiagnostics {
    pub k: usize,
    /// `E[F^i F^j]`, target `δ_ij`.
    pub covariance: Vec<Vec<f64>>,
    pub coordinates: Vec<Diagnostics1D>,
    pub gram_offdiag: Vec<GramEntry>,
    /// `E[(Σ_i F^i)⁴]`, target `3d²`.
    pub sum_fourth: f64,
    /// `E[∏_l F^{i_l}]` for each tuple of `V_d`, target 0.
    pub vd_moments: Vec<([usize; 4], f64)>,
    pub flags: VectorFlags,
}

/// Diagnostics for `(I_{n_1}(f^1), …, I_{n_d}(f^d))` with `n_1 <= … <= n_d`.
pub fn diagnose_vector(fs: &[SymKernel], k: usize, opts: &BatteryOptions) -> Result<VectorDiagnostics> {
    opts.validate()?;
    let d = fs.len();
    if d < 2 {
        return Err(ChaosError::InvalidArgument("vector battery needs d >= 2".into()));
    }
    let dim = fs[0].dim();
    if let Some(bad) = fs.iter().find(|f| f.dim() != dim) {
        return Err(ChaosError::DimMismatch(dim, bad.dim()));
    }
    if fs.windows(2).any(|w| w[0].order() > w[1].order()) {
        return Err(ChaosError::InvalidArgument(
            "coordinate orders must be non-decreasing".into(),
        ));
    }
    if fs[0].order() == 0 {
        return Err(ChaosError::OrderTooLow {
            required: 1,
            got: 0,
        });
    }

    let mut covariance = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            if fs[i].order() == fs[j].order() {
                covariance[i][j] = factorial(fs[i].order()) * fs[i].inner_ambient(&fs[j])?;
            }
        }
    }

    let coordinates = fs
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut o = opts.clone();
            if let Some(mc) = &mut o.mc {
                mc.stream = mc.stream.child(1000 + i as u64);
            }
            diagnose_fixed_chaos(f, k, &o)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut gram_offdiag = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            gram_offdiag.push(gram_entry(&fs[i], &fs[j], i + 1, j + 1)?);
        }
    }

    let xs: Vec<ChaosExpansion> = fs.iter().cloned().map(ChaosExpansion::from_kernel).collect();
    let mut sum = ChaosExpansion::zero(dim);
    for x in &xs {
        sum = sum.add(x)?;
    }
    let sum_fourth = sum.moment(4)?;

    let mut pair_products: BTreeMap<(usize, usize), ChaosExpansion> = BTreeMap::new();
    let mut product = |a: usize, b: usize| -> Result<ChaosExpansion> {
        let key = (a.min(b), a.max(b));
        if let Some(p) = pair_products.get(&key) {
            return Ok(p.clone());
        }
        let p = xs[key.0 - 1].multiply(&xs[key.1 - 1])?;
        pair_products.insert(key, p.clone());
        Ok(p)
    };
    let mut vd_moments = Vec::new();
    for tuple in enumerate_vd(d) {
        let left = product(tuple[0], tuple[1])?;
        let right = product(tuple[2], tuple[3])?;
        vd_moments.push((tuple, left.pair_expectation(&right)?));
    }

    let eps = opts.eps;
    let flags = VectorFlags {
        covariance: (0..d).all(|i| {
            (0..d).all(|j| (covariance[i][j] - if i == j { 1.0 } else { 0.0 }).abs() <= eps)
        }),
        coordinates: coordinates.iter().all(|c| {
            c.flags.normalized && c.flags.fourth_moment && c.flags.contractions && c.flags.derivative
        }),
        gram_offdiag: gram_offdiag.iter().all(|g| g.value <= eps),
        sum_fourth: (sum_fourth - 3.0 * (d * d) as f64).abs() <= eps,
        vd_moments: vd_moments.iter().all(|(_, m)| m.abs() <= eps),
    };

    Ok(VectorDiagnostics {
        k,
        covariance,
        coordinates,
        gram_offdiag,
        sum_fourth,
        vd_moments,
        flags,
    })
}

fn gram_entry(fi: &SymKernel, fj: &SymKernel, i: usize, j: usize) -> Result<GramEntry> {
    let (ni, nj) = (fi.order(), fj.order());
    let value = deriv_gram_second_moment(fi, fj)?;
    let mut contraction_bound = 0.0;
    let mut cauchy_schwarz_bound = 0.0;
    for r in 1..=ni.min(nj) {
        let w = gram_coefficient(ni, nj, r) * factorial(ni + nj - 2 * r);
        contraction_bound += w * fi.contract(fj, r)?.norm_sq_ambient();
        let a = fi.contract(fi, ni - r)?.norm_ambient();
        let b = fj.contract(fj, nj - r)?.norm_ambient();
        cauchy_schwarz_bound += w * a * b;
    }
    Ok(GramEntry {
        i,
        j,
        value,
        contraction_bound,
        cauchy_schwarz_bound,
    })
}

/// Metrics of one chaos component `J_n F_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosComponentReport {
    pub n: usize,
    /// `E[(J_n F_k)²] = n! ‖g_n‖²`.
    pub variance: f64,
    /// `E‖D J_n F_k‖²`, target `n σ_n²`.
    pub e_dnorm2: f64,
    pub var_dnorm2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneralDiagnostics {
    pub k: usize,
    pub mean: f64,
    /// Components `n = 1..=n_trunc` (zero components included).
    pub chaos: Vec<ChaosComponentReport>,
    /// `Σ_{n > n_trunc} E[(J_n F_k)²]`.
    pub tail_mass: f64,
    /// `Σ_{n <= n_trunc} E[(J_n F_k)²]`.
    pub sigma_sq_partial: f64,
    /// `E‖DF_k‖² = Σ_n n · n! ‖g_n‖²`.
    pub e_dnorm2_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneralReport {
    pub rows: Vec<GeneralDiagnostics>,
    /// `sup_k E‖DF_k‖²`; finite values make the tail condition automatic.
    pub sup_e_dnorm2: f64,
}

/// Chaos-by-chaos metrics for a sequence of square-integrable variables.
pub fn diagnose_general(seq: &[ChaosExpansion], n_trunc: usize) -> Result<GeneralReport> {
    let mut rows = Vec::with_capacity(seq.len());
    for (k, fk) in seq.iter().enumerate() {
        let mut chaos: Vec<ChaosComponentReport> = (1..=n_trunc)
            .map(|n| ChaosComponentReport {
                n,
                variance: 0.0,
                e_dnorm2: 0.0,
                var_dnorm2: 0.0,
            })
            .collect();
        let mut tail_mass = 0.0;
        let mut e_total = 0.0;
        for (n, g) in fk.components() {
            if n == 0 {
                continue;
            }
            let variance = factorial(n) * g.norm_sq_ambient();
            let e2 = e_dnorm2(g)?;
            e_total += e2;
            if n <= n_trunc {
                let slot = &mut chaos[n - 1];
                slot.variance = variance;
                slot.e_dnorm2 = e2;
                slot.var_dnorm2 = var_dnorm2(g)?;
            } else {
                tail_mass += variance;
            }
        }
        let sigma_sq_partial = chaos.iter().map(|c| c.variance).sum();
        rows.push(GeneralDiagnostics {
            k: k + 1,
            mean: fk.expectation(),
            chaos,
            tail_mass,
            sigma_sq_partial,
            e_dnorm2_total: e_total,
        });
    }
    let sup_e_dnorm2 = rows.iter().map(|r| r.e_dnorm2_total).fold(0.0, f64::max);
    Ok(GeneralReport { rows, sup_e_dnorm2 })
}

/// Built-in kernel sequences.
pub mod families {
    use super::*;

    /// `f_k = (k n!)^{-1/2} Σ_{i<=k} e_i^{⊗n}` over `H = R^k`: unit variance,
    /// and asymptotically Gaussian as `k` grows.
    pub fn tensor_sum(order: usize, k: usize) -> Result<SymKernel> {
        signed_tensor_sum(order, k, |_| 1.0)
    }

    /// `(k n!)^{-1/2} Σ_{i<=k} s(i) e_i^{⊗n}` for signs `s(i) = ±1`.
    pub fn signed_tensor_sum(order: usize, k: usize, sign: impl Fn(usize) -> f64) -> Result<SymKernel> {
        if order == 0 || k == 0 {
            return Err(ChaosError::InvalidArgument("order and k must be >= 1".into()));
        }
        let c = 1.0 / (k as f64 * factorial(order)).sqrt();
        SymKernel::new(k, order, (1..=k).map(|i| (vec![i as u32; order], c * sign(i))))
    }

    /// `e_1^{⊗n} / sqrt(n!)`: unit variance, never Gaussian for `n >= 2`.
    pub fn fixed(order: usize) -> Result<SymKernel> {
        if order == 0 {
            return Err(ChaosError::InvalidArgument("order must be >= 1".into()));
        }
        SymKernel::basis_power(1, 1, order, 1.0 / factorial(order).sqrt())
    }

    /// `d` mutually orthogonal tensor sums sharing the support `e_1..e_k`:
    /// coordinate `c` uses the Walsh signs `(-1)^{popcount(c & (i-1))}`.
    /// Requires `k` to be a multiple of the next power of two `>= d`.
    pub fn orthogonal_tensor_sums(order: usize, k: usize, d: usize) -> Result<Vec<SymKernel>> {
        let block = d.next_power_of_two();
        if d == 0 || k % block != 0 {
            return Err(ChaosError::InvalidArgument(format!(
                "k = {k} must be a positive multiple of {block} for d = {d}"
            )));
        }
        (0..d)
            .map(|c| {
                signed_tensor_sum(order, k, move |i| {
                    if (c & (i - 1)).count_ones() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
            })
            .collect()
    }
}
