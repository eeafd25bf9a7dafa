//! The invariant suite at fixed seeds. The report carries no timings, so a
//! rerun reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clap::{Args, ValueEnum};
use wiener_core::chaos_algebra::{deriv_gram_second_moment, dnorm2_l2_deviation, e_dnorm2, e_dnorm4, var_dnorm2};
use wiener_core::chaos_eval::{eval_integral, grad_norm_sq, malliavin_gradient};
use wiener_core::clt::{char_identity_residual, diagnose_fixed_chaos, diagnose_vector, families, BatteryOptions};
use wiener_core::combinatorics::{double_factorial_odd, factorial};
use wiener_core::fbm::{
    finite_variance, hermite_power_decomp, increment_corr, joint_experiment, limit_constants, tail_envelope,
    truncation_lag, FbmConfig, KAPPA_CAP, SERIES_TOL,
};
use wiener_core::mc::{mc_map, McEstimate};
use wiener_core::symtensor::{inner_ambient, norm_modified, symmetrize_block};
use wiener_core::{ChaosExpansion, RandomStream, SymKernel};
use wiener_oracle::{DenseTensor, Polynomial};

use crate::commands::battery;
use crate::config::BatteryConfig;
use crate::error::{CliError, CliResult};
use crate::kernel_file::KernelFile;
use crate::output::emit;

/// Deliberate defects used to confirm that the suite catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mutation {
    /// `r!` in place of `(r-1)!` in the Gram second-moment coefficient.
    GramOffByOne,
}

#[derive(Args, Debug, Default)]
pub struct SelfcheckArgs {
    #[arg(long, hide = true, value_enum)]
    pub inject: Option<Mutation>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

type Check = Result<String, String>;

struct Suite {
    inject: Option<Mutation>,
    lines: Vec<String>,
    failed: Vec<&'static str>,
}

impl Suite {
    fn run(&mut self, name: &'static str, check: impl FnOnce(Option<Mutation>) -> Check) {
        match check(self.inject) {
            Ok(detail) => self.lines.push(format!("PASS {name}: {detail}")),
            Err(detail) => {
                self.lines.push(format!("FAIL {name}: {detail}"));
                self.failed.push(name);
            }
        }
    }
}

/// Uniform draws from a fixed stream, consumed in order.
struct Draws {
    stream: RandomStream,
    pos: u64,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Self {
            stream: RandomStream::new(seed, 0),
            pos: 0,
        }
    }

    fn uniform(&mut self) -> f64 {
        let mut u = [0.0];
        self.stream.fill_uniform(self.pos, &mut u);
        self.pos += 1;
        u[0]
    }

    fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    fn kernel(&mut self, dim: usize, order: usize) -> SymKernel {
        let mut entries = BTreeMap::new();
        let count = 1 + self.below(5);
        for _ in 0..count {
            let mut idx: Vec<u32> = (0..order).map(|_| 1 + self.below(dim) as u32).collect();
            idx.sort_unstable();
            entries.insert(idx, 2.0 * self.uniform() - 1.0);
        }
        SymKernel::new(dim, order, entries).expect("labels in range")
    }
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn dense(f: &SymKernel) -> DenseTensor {
    DenseTensor::from_symmetric(f.dim(), f.order(), &f.to_entries())
}

fn core(e: wiener_core::ChaosError) -> String {
    e.to_string()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok { Ok(detail) } else { Err(detail) }
}

/// `E[⟨DF, DG⟩²]` through the closed form, or a defective copy of it.
fn gram_moment(f: &SymKernel, g: &SymKernel, inject: Option<Mutation>) -> wiener_core::Result<f64> {
    if inject != Some(Mutation::GramOffByOne) {
        return deriv_gram_second_moment(f, g);
    }
    let (n, m) = (f.order(), g.order());
    let mut acc = 0.0;
    for r in 1..=n.min(m) {
        let coeff = (factorial(n) * factorial(m) / (factorial(n - r) * factorial(m - r) * factorial(r))).powi(2);
        acc += coeff * factorial(n + m - 2 * r) * f.contract_sym(g, r)?.norm_sq_ambient();
    }
    Ok(acc)
}

// symtensor

fn dense_oracle(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(11);
    let mut bad = Vec::new();
    for case in 0..60 {
        let dim = 1 + draws.below(4);
        let (n, m) = (1 + draws.below(3), 1 + draws.below(3));
        let (f, g) = (draws.kernel(dim, n), draws.kernel(dim, m));
        let (df, dg) = (dense(&f), dense(&g));
        let mut ok = close_rel(f.norm_sq_ambient(), df.norm_sq(), 1e-10);
        for l in 0..=n.min(m) {
            let block = f.contract(&g, l).map_err(core)?;
            let oracle = df.contract(&dg, l);
            let sparse = DenseTensor::from_block(dim, n - l, m - l, &block.to_entries());
            let scale = oracle.data.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            ok &= sparse.data.iter().zip(&oracle.data).all(|(a, b)| (a - b).abs() <= 1e-10 * scale);
            ok &= close_rel(symmetrize_block(&block).norm_sq_ambient(), oracle.symmetrize().norm_sq(), 1e-10);
        }
        if !ok {
            bad.push(case);
        }
    }
    ensure(bad.is_empty(), format!("60 random pairs, d <= 4, n, m <= 3; mismatching cases {bad:?}"))
}

fn contraction_identity(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(12);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let dim = 1 + draws.below(4);
        let (n, m) = (1 + draws.below(3), 1 + draws.below(3));
        let (f, g) = (draws.kernel(dim, n), draws.kernel(dim, m));
        for r in 1..=n.min(m) {
            let lhs = f.contract(&g, r).map_err(core)?.norm_sq_ambient();
            let ff = f.contract(&f, n - r).map_err(core)?;
            let gg = g.contract(&g, m - r).map_err(core)?;
            let rhs = ff.inner_ambient(&gg).map_err(core)?;
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-10, format!("max relative gap {worst:.3e} (tol 1e-10)"))
}

fn cauchy_schwarz(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(13);
    let mut worst = f64::INFINITY;
    for _ in 0..60 {
        let dim = 1 + draws.below(4);
        let (n, m) = (1 + draws.below(3), 1 + draws.below(3));
        let (f, g) = (draws.kernel(dim, n), draws.kernel(dim, m));
        for r in 1..=n.min(m) {
            let lhs = f.contract(&g, r).map_err(core)?.norm_sq_ambient();
            let bound = f.contract(&f, n - r).map_err(core)?.norm_ambient()
                * g.contract(&g, m - r).map_err(core)?.norm_ambient();
            worst = worst.min(bound * (1.0 + 1e-12) + 1e-300 - lhs);
        }
    }
    ensure(worst >= 0.0, format!("min slack bound - |f (x)_r g|^2 = {worst:.3e}"))
}

fn symmetrization_contracts(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(14);
    let mut worst = f64::INFINITY;
    for _ in 0..60 {
        let dim = 1 + draws.below(4);
        let (n, m) = (1 + draws.below(3), 1 + draws.below(3));
        let (f, g) = (draws.kernel(dim, n), draws.kernel(dim, m));
        for l in 0..=n.min(m) {
            let t = f.contract(&g, l).map_err(core)?;
            worst = worst.min(t.norm_ambient() * (1.0 + 1e-12) - symmetrize_block(&t).norm_ambient());
        }
    }
    ensure(worst >= 0.0, format!("min |T| - |sym T| = {worst:.3e}"))
}

// chaos_eval

fn isometry(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(21);
    let mut worst = 0.0f64;
    for case in 0..8u64 {
        let dim = 1 + draws.below(3);
        let (n, m) = (1 + draws.below(3), 1 + draws.below(3));
        let (f, g) = (draws.kernel(dim, n), draws.kernel(dim, m));
        let target = if n == m {
            factorial(n) * inner_ambient(&f, &g).map_err(core)?
        } else {
            0.0
        };
        let vals = mc_map(dim, 20_000, RandomStream::new(21, case), |xi| {
            eval_integral(&f, xi).expect("dim") * eval_integral(&g, xi).expect("dim")
        });
        let est = McEstimate::from_values(&vals);
        worst = worst.max((est.mean - target).abs() / est.stderr.max(1e-300));
    }
    ensure(worst <= 4.0, format!("8 pairs at 20000 samples, worst |mc - exact| = {worst:.2} stderr (limit 4)"))
}

fn gradient_fd(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(22);
    let mut worst = 0.0f64;
    let h = 1e-5;
    for case in 0..30u64 {
        let dim = 1 + draws.below(4);
        let n = 1 + draws.below(4);
        let f = draws.kernel(dim, n);
        let xi = RandomStream::new(22, case).normal_block(0, dim);
        let grad = malliavin_gradient(&f, &xi).map_err(core)?;
        for j in 0..dim {
            let (mut up, mut down) = (xi.clone(), xi.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (eval_integral(&f, &up).map_err(core)? - eval_integral(&f, &down).map_err(core)?) / (2.0 * h);
            worst = worst.max((fd - grad[j]).abs() / grad[j].abs().max(1.0));
        }
    }
    ensure(worst <= 1e-6, format!("30 kernels, d <= 4, n <= 4, max relative gap {worst:.3e} (tol 1e-6)"))
}

fn grad_norm_mc(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(23);
    let mut worst = 0.0f64;
    for case in 0..6u64 {
        let dim = 1 + draws.below(3);
        let n = 1 + draws.below(3);
        let f = draws.kernel(dim, n);
        let target = n as f64 * norm_modified(&f).powi(2);
        let vals = mc_map(dim, 20_000, RandomStream::new(23, case), |xi| grad_norm_sq(&f, xi).expect("order"));
        let est = McEstimate::from_values(&vals);
        // first chaos: the norm is constant and the stderr pure rounding
        if !close_rel(est.mean, target, 1e-12) {
            worst = worst.max((est.mean - target).abs() / est.stderr);
        }
    }
    ensure(worst <= 4.0, format!("6 kernels, worst gap {worst:.2} stderr (limit 4)"))
}

fn worker_determinism(_: Option<Mutation>) -> Check {
    let f = Draws::new(24).kernel(3, 3);
    let sample = |threads: usize| -> Result<Vec<u64>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(pool.install(|| {
            mc_map(3, 5000, RandomStream::new(24, 0), |xi| {
                eval_integral(&f, xi).expect("dim").to_bits()
            })
        }))
    };
    let one = sample(1)?;
    let four = sample(4)?;
    ensure(one == four, "5000 samples with 1 and 4 workers".into())
}

// chaos_algebra

fn random_expansion(draws: &mut Draws, dim: usize) -> ChaosExpansion {
    let parts = 1 + draws.below(3);
    let kernels = (0..parts).map(|_| {
        let n = draws.below(3);
        if n == 0 {
            SymKernel::scalar(dim, 2.0 * draws.uniform() - 1.0)
        } else {
            draws.kernel(dim, n)
        }
    });
    let kernels: Vec<_> = kernels.collect();
    ChaosExpansion::from_kernels(dim, kernels).expect("same dim")
}

fn pathwise_product(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(31);
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let dim = 1 + draws.below(3);
        let (f, g) = (random_expansion(&mut draws, dim), random_expansion(&mut draws, dim));
        let fg = f.multiply(&g).map_err(core)?;
        for i in 0..100u64 {
            let xi = RandomStream::new(31, case).normal_block(i, dim);
            let lhs = fg.eval(&xi).map_err(core)?;
            let rhs = f.eval(&xi).map_err(core)? * g.eval(&xi).map_err(core)?;
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-9, format!("20 pairs x 100 points, max relative gap {worst:.3e} (tol 1e-9)"))
}

fn fourth_moment_isserlis(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(32);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dim = 1 + draws.below(3);
        let n = 1 + draws.below(2);
        let f = draws.kernel(dim, n);
        let exact = ChaosExpansion::from_kernel(f.clone()).moment(4).map_err(core)?;
        let oracle = Polynomial::multiple_integral(dim, n, &f.to_entries()).pow(4).expectation();
        worst = worst.max((exact - oracle).abs() / oracle.abs().max(1.0));
    }
    ensure(worst <= 1e-10, format!("20 kernels, d <= 3, n <= 2, max relative gap {worst:.3e}"))
}

fn gram_moment_vs_algebra(inject: Option<Mutation>) -> Check {
    let mut draws = Draws::new(33);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dim = 1 + draws.below(3);
        let n = 1 + draws.below(3);
        let f = draws.kernel(dim, n);
        let closed = gram_moment(&f, &f, inject).map_err(core)?;
        let fx = ChaosExpansion::from_kernel(f);
        let gram = fx.deriv_gram(&fx).map_err(core)?;
        let algebra = gram.pair_expectation(&gram).map_err(core)?;
        worst = worst.max((closed - algebra).abs() / algebra.abs().max(1.0));
    }
    ensure(worst <= 1e-10, format!("20 kernels, n <= 3, max relative gap {worst:.3e} (tol 1e-10)"))
}

fn e_dnorm2_identity(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(34);
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let dim = 1 + draws.below(4);
        let n = 1 + draws.below(4);
        let f = draws.kernel(dim, n);
        let target = n as f64 * norm_modified(&f).powi(2);
        worst = worst.max((e_dnorm2(&f).map_err(core)? - target).abs() / target.max(1.0));
    }
    ensure(worst <= 1e-12, format!("40 kernels, max relative gap {worst:.3e}"))
}

fn gradient_deviation_identity(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(35);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let dim = 1 + draws.below(3);
        let n = 2 + draws.below(2);
        let raw = draws.kernel(dim, n);
        let f = raw.scale(1.0 / norm_modified(&raw));
        let nf = n as f64;
        let e2 = e_dnorm2(&f).map_err(core)?;
        let e4 = e_dnorm4(&f).map_err(core)?;
        let identity = e4 - 2.0 * nf * e2 + nf * nf;
        let dev = dnorm2_l2_deviation(&f).map_err(core)?;
        let var = var_dnorm2(&f).map_err(core)?;
        worst = worst.max((dev - identity.max(0.0)).abs() / e4).max((dev - var).abs() / e4);
    }
    ensure(worst <= 1e-10, format!("30 unit-norm kernels, n in 2..=3, max relative gap {worst:.3e}"))
}

// clt_battery

fn positive_control(_: Option<Mutation>) -> Check {
    let opts = BatteryOptions::default();
    let mut detail = String::new();
    for n in [2usize, 3] {
        for k in [1usize, 2, 4, 8, 16, 32] {
            let f = families::tensor_sum(n, k).map_err(core)?;
            let d = diagnose_fixed_chaos(&f, k, &opts).map_err(core)?;
            let c_target = 1.0 / (k as f64 * factorial(n).powi(2));
            let mut ok = close_rel(d.second_moment, 1.0, 1e-12);
            ok &= d.contraction_norms.iter().all(|c| close_rel(c * c, c_target, 1e-10));
            if n == 2 {
                ok &= close_rel(d.fourth_moment, 3.0 + 12.0 / k as f64, 1e-10);
                ok &= close_rel(d.var_dnorm2, 8.0 / k as f64, 1e-10);
            }
            // Θ(1/k): k times each metric is the same at every k
            let f1 = diagnose_fixed_chaos(&families::tensor_sum(n, 1).map_err(core)?, 1, &opts).map_err(core)?;
            ok &= close_rel(k as f64 * (d.fourth_moment - 3.0), f1.fourth_moment - 3.0, 1e-9);
            ok &= close_rel(k as f64 * d.var_dnorm2, f1.var_dnorm2, 1e-9);
            if !ok {
                let _ = write!(detail, " n={n} k={k}");
            }
        }
    }
    ensure(
        detail.is_empty(),
        format!("n in {{2, 3}}, k up to 32: second = 1, |f (x)_l f|^2 = 1/(k (n!)^2), k(fourth - 3) and k var constant;{detail}"),
    )
}

fn negative_control(_: Option<Mutation>) -> Check {
    let opts = BatteryOptions::default();
    let mut ok = true;
    for n in [2usize, 3, 4] {
        let f = families::fixed(n).map_err(core)?;
        let first = diagnose_fixed_chaos(&f, 1, &opts).map_err(core)?;
        for k in [2usize, 8, 32] {
            let d = diagnose_fixed_chaos(&f, k, &opts).map_err(core)?;
            ok &= d.fourth_moment == first.fourth_moment && d.var_dnorm2 == first.var_dnorm2;
            ok &= !d.flags.fourth_moment && !d.flags.contractions && !d.flags.derivative;
        }
        let oracle = Polynomial::multiple_integral(1, n, &f.to_entries()).pow(4).expectation();
        ok &= close_rel(first.fourth_moment, oracle, 1e-12);
    }
    ensure(ok, "fixed kernels n in 2..=4: metrics constant in k, no condition flag set, fourth = E[He_n^4]/(n!)^2".into())
}

fn gram_bound_chain(_: Option<Mutation>) -> Check {
    let opts = BatteryOptions::default();
    let mut draws = Draws::new(43);
    let mut instances: Vec<Vec<SymKernel>> = Vec::new();
    for (n, k, d) in [(2, 8, 2), (3, 8, 3), (2, 16, 4)] {
        instances.push(families::orthogonal_tensor_sums(n, k, d).map_err(core)?);
    }
    for _ in 0..10 {
        let dim = 1 + draws.below(3);
        let (a, b) = (1 + draws.below(3), 1 + draws.below(3));
        let mut pair = vec![draws.kernel(dim, a.min(b)), draws.kernel(dim, a.max(b))];
        for f in &mut pair {
            *f = f.scale(1.0 / norm_modified(f));
        }
        instances.push(pair);
    }
    let mut entries = 0usize;
    let mut tight = 0usize;
    for fs in &instances {
        let v = diagnose_vector(fs, 1, &opts).map_err(core)?;
        for g in &v.gram_offdiag {
            entries += 1;
            let slack = 1e-10 * g.cauchy_schwarz_bound.max(1.0);
            if !(g.value <= g.contraction_bound + slack && g.contraction_bound <= g.cauchy_schwarz_bound + slack) {
                return Err(format!("entry ({}, {}) breaks value <= contraction <= CS", g.i, g.j));
            }
            if (g.value - g.cauchy_schwarz_bound).abs() <= slack {
                tight += 1;
            }
        }
    }
    Ok(format!("{} instances, {entries} Gram entries, {tight} attain the Cauchy-Schwarz bound", instances.len()))
}

fn char_identity(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(44);
    let mut kernels = vec![
        families::tensor_sum(2, 8).map_err(core)?,
        families::fixed(3).map_err(core)?,
    ];
    for _ in 0..4 {
        let dim = 1 + draws.below(3);
        let n = 1 + draws.below(3);
        kernels.push(draws.kernel(dim, n));
    }
    let mut worst = 0.0f64;
    for (i, f) in kernels.iter().enumerate() {
        let r = char_identity_residual(f, &[0.25, 0.5, 1.0, 2.0], 20_000, RandomStream::new(44, i as u64))
            .map_err(core)?;
        for p in &r.points {
            worst = worst.max(p.residual / p.stderr.max(1e-300));
        }
    }
    ensure(worst <= 5.0, format!("6 kernels x 4 t values, worst residual {worst:.2} stderr (limit 5)"))
}

// fbm_lab

fn parseval(_: Option<Mutation>) -> Check {
    let mut worst = 0.0f64;
    for kappa in (1..=KAPPA_CAP).step_by(2) {
        let d = hermite_power_decomp(kappa).map_err(core)?;
        let target = double_factorial_odd(kappa as usize);
        worst = worst.max((d.parseval() - target).abs() / target);
    }
    ensure(worst <= 1e-12, format!("odd kappa <= {KAPPA_CAP}, max relative gap {worst:.3e}"))
}

fn mehler(_: Option<Mutation>) -> Check {
    let mut worst = 0.0f64;
    for (ci, kappa) in [1u32, 3, 5].into_iter().enumerate() {
        let d = hermite_power_decomp(kappa).map_err(core)?;
        for (ri, rho) in [-0.5f64, 0.0, 0.7].into_iter().enumerate() {
            let s = (1.0 - rho * rho).sqrt();
            let vals = mc_map(2, 100_000, RandomStream::new(51, (3 * ci + ri) as u64), |z| {
                let (x, y) = (z[0], rho * z[0] + s * z[1]);
                (x * y).powi(kappa as i32)
            });
            let est = McEstimate::from_values(&vals);
            worst = worst.max((est.mean - d.mehler_moment(rho)).abs() / est.stderr);
        }
    }
    ensure(worst <= 4.0, format!("kappa in {{1, 3, 5}}, rho in {{-0.5, 0, 0.7}}, worst gap {worst:.2} stderr (limit 4)"))
}

fn conventions(_: Option<Mutation>) -> Check {
    let mut worst = 0.0f64;
    for hurst in [0.2, 0.35, 0.45] {
        for kappa in [1u32, 3, 5] {
            let cfg = FbmConfig {
                hurst,
                kappa,
                ..FbmConfig::default()
            };
            let c = limit_constants(&cfg, SERIES_TOL).map_err(core)?;
            let allow = c.tail_bound + 1e-12 * c.c_sq_paper.max(1.0);
            let gap = (c.sigma_sum_one_sided() - c.c_sq_paper)
                .abs()
                .max((c.sigma_sum_two_sided() - c.c_sq_twosided).abs());
            if gap > allow {
                return Err(format!("H = {hurst}, kappa = {kappa}: gap {gap:.3e} over allowance {allow:.3e}"));
            }
            worst = worst.max(gap);
        }
    }
    Ok(format!("H in {{0.2, 0.35, 0.45}}, kappa in {{1, 3, 5}}, both conventions, max gap {worst:.3e}"))
}

fn fbm_cfg(n: usize, paths: usize, seed: u64) -> FbmConfig {
    FbmConfig {
        hurst: 0.35,
        kappa: 3,
        n,
        horizon: 1.0,
        paths,
        seed,
    }
}

fn variance_bridge(_: Option<Mutation>) -> Check {
    let base = fbm_cfg(256, 1, 0);
    let c = limit_constants(&base, SERIES_TOL).map_err(core)?;
    let mut gaps = Vec::new();
    for n in [256usize, 512, 1024, 2048, 4096, 8192] {
        gaps.push(finite_variance(&fbm_cfg(n, 1, 0), 1.0, SERIES_TOL).map_err(core)? - c.c_sq_twosided);
    }
    let shrinking = gaps.windows(2).all(|w| w[1].abs() < w[0].abs());
    let last = *gaps.last().expect("non-empty");
    let nearer_two_sided = last.abs() < (last + c.c_sq_twosided - c.c_sq_paper).abs();

    let exp = joint_experiment(&fbm_cfg(1024, 1000, 52)).map_err(core)?;
    let z: Vec<f64> = exp.samples.iter().map(|p| p.z_t).collect();
    let m = z.len() as f64;
    let mean = z.iter().sum::<f64>() / m;
    let sq: Vec<f64> = z.iter().map(|x| (x - mean).powi(2)).collect();
    let var = McEstimate::from_values(&sq);
    let target = exp.summary.var_z_finite;
    let empirical_ok = (var.mean - target).abs() <= 4.0 * var.stderr;
    let detail = format!(
        "Var(Z_1) - c^2 two-sided over n = 256..8192: [{}]; one-sided c^2 = {:.4}, two-sided = {:.4}; \
         at n = 1024 empirical {:.4} vs exact {:.4} ({:.2} stderr)",
        gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(", "),
        c.c_sq_paper,
        c.c_sq_twosided,
        var.mean,
        target,
        (var.mean - target).abs() / var.stderr,
    );
    ensure(shrinking && nearer_two_sided && empirical_ok, detail)
}

fn dyadic_regularity(_: Option<Mutation>) -> Check {
    let cfg = fbm_cfg(256, 1, 0);
    let decomp = hermite_power_decomp(cfg.kappa).map_err(core)?;
    // n-free bound: b_1^2 + Σ_{m>=3} b² m! (1 + 2 Σ_j |ρ(j)|^m)
    let mut bound = 0.0;
    for (&m, &b) in &decomp.coeffs {
        if m == 1 {
            bound += b * b;
            continue;
        }
        let lag = truncation_lag(cfg.hurst, m, SERIES_TOL).map_err(core)?;
        let s: f64 = (1..=lag).map(|j| increment_corr(j, cfg.hurst).abs().powi(m as i32)).sum();
        bound += b * b * factorial(m as usize) * (1.0 + 2.0 * (s + tail_envelope(cfg.hurst, m, lag)));
    }
    let mut maxima = Vec::new();
    let mut ok = true;
    for (i, n) in [256usize, 512, 1024].into_iter().enumerate() {
        let exp = joint_experiment(&fbm_cfg(n, 1000, 53 + i as u64)).map_err(core)?;
        let s = &exp.summary;
        for r in &s.regularity {
            ok &= r.exact <= bound * (1.0 + 1e-12) && r.estimate.within(r.exact, 5.0);
        }
        maxima.push(s.regularity_max);
        ok &= s.regularity_max <= bound;
    }
    ensure(
        ok,
        format!(
            "max E|Z_t - Z_s|^2/|t - s| over n = 256, 512, 1024: [{}]; n-free bound {bound:.4}",
            maxima.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

// cli

fn round_trip(_: Option<Mutation>) -> Check {
    let mut draws = Draws::new(61);
    for case in 0..30 {
        let dim = 1 + draws.below(5);
        let n = draws.below(5);
        let f = if n == 0 {
            SymKernel::scalar(dim, draws.uniform())
        } else {
            draws.kernel(dim, n)
        };
        let mut file = KernelFile::from_kernel(&f);
        file.entries.reverse();
        let back = KernelFile::parse(&file.to_json(), "memory").map_err(|e| e.to_string())?;
        let mut again = KernelFile::from_kernel(&back);
        again.entries.reverse();
        if back != f || again != file {
            return Err(format!("case {case} changed on a round trip"));
        }
    }
    Ok("30 kernels survive file -> kernel -> file".into())
}

fn byte_determinism(_: Option<Mutation>) -> Check {
    let cfg = BatteryConfig {
        family: "tensor-sum".into(),
        order: 2,
        kmin: 1,
        kmax: 4,
        threshold: 1e-2,
        mc: Some(500),
        seed: 62,
        kernel: None,
        coords: 2,
        t_grid: vec![0.5, 1.0, 2.0],
    };
    let a = battery::render(&cfg).map_err(|e| e.to_string())?;
    let b = battery::render(&cfg).map_err(|e| e.to_string())?;
    ensure(a == b, format!("battery report rendered twice, {} bytes", a.len()))
}

pub fn report(inject: Option<Mutation>) -> (String, bool) {
    let mut suite = Suite {
        inject,
        lines: Vec::new(),
        failed: Vec::new(),
    };
    suite.run("symtensor/dense-oracle", dense_oracle);
    suite.run("symtensor/contraction-identity", contraction_identity);
    suite.run("symtensor/cauchy-schwarz-bound", cauchy_schwarz);
    suite.run("symtensor/symmetrization-contracts-norms", symmetrization_contracts);
    suite.run("chaos_eval/isometry", isometry);
    suite.run("chaos_eval/gradient-finite-difference", gradient_fd);
    suite.run("chaos_eval/expected-gradient-norm", grad_norm_mc);
    suite.run("chaos_eval/worker-count-determinism", worker_determinism);
    suite.run("chaos_algebra/pathwise-product", pathwise_product);
    suite.run("chaos_algebra/fourth-moment-isserlis", fourth_moment_isserlis);
    suite.run("chaos_algebra/gram-moment-vs-gradient-algebra", gram_moment_vs_algebra);
    suite.run("chaos_algebra/e-dnorm2-modified-norm", e_dnorm2_identity);
    suite.run("chaos_algebra/gradient-deviation-identity", gradient_deviation_identity);
    suite.run("clt_battery/positive-control", positive_control);
    suite.run("clt_battery/negative-control", negative_control);
    suite.run("clt_battery/gram-bound-chain", gram_bound_chain);
    suite.run("clt_battery/char-identity", char_identity);
    suite.run("fbm_lab/parseval", parseval);
    suite.run("fbm_lab/mehler", mehler);
    suite.run("fbm_lab/convention-reconciliation", conventions);
    suite.run("fbm_lab/variance-bridge", variance_bridge);
    suite.run("fbm_lab/dyadic-regularity-bound", dyadic_regularity);
    suite.run("cli/kernel-file-round-trip", round_trip);
    suite.run("cli/byte-determinism", byte_determinism);

    let total = suite.lines.len();
    let mut out = suite.lines.join("\n");
    out.push('\n');
    if suite.failed.is_empty() {
        let _ = writeln!(out, "selfcheck: all {total} invariants hold");
    } else {
        let _ = writeln!(
            out,
            "selfcheck: {} of {total} invariants failed: {}",
            suite.failed.len(),
            suite.failed.join(", ")
        );
    }
    (out, suite.failed.is_empty())
}

pub fn run(args: &SelfcheckArgs) -> CliResult<()> {
    let (text, ok) = report(args.inject);
    emit(args.out.as_deref(), &text)?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed("selfcheck failed".into()))
    }
}
