use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use wiener_core::chaos_algebra::{e_dnorm2, e_dnorm4, var_dnorm2};
use wiener_core::chaos_eval::{eval_integral, grad_norm_sq};
use wiener_core::combinatorics::factorial;
use wiener_core::mc::{mc_map, McEstimate};
use wiener_core::{ChaosExpansion, RandomStream};

use crate::error::{CliError, CliResult};
use crate::kernel_file::KernelFile;
use crate::output::{emit, num, opt, Table};

#[derive(Args, Debug)]
pub struct MomentsArgs {
    /// JSON kernel file.
    #[arg(long)]
    pub kernel: PathBuf,
    /// Monte Carlo sample size for cross-checks.
    #[arg(long)]
    pub mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MomentsConfig<'a> {
    kernel: &'a KernelFile,
    mc: Option<usize>,
    seed: u64,
}

pub fn run(args: &MomentsArgs) -> CliResult<()> {
    let f = KernelFile::load(&args.kernel)?;
    let n = f.order();
    if n == 0 {
        return Err(CliError::Config("moments need a kernel of order >= 1".into()));
    }
    if let Some(m) = args.mc {
        if m < 2 {
            return Err(CliError::Config(format!("--mc must be at least 2, got {m}")));
        }
    }
    let fx = ChaosExpansion::from_kernel(f.clone());
    let second = factorial(n) * f.norm_sq_ambient();
    let fourth = fx.moment(4)?;
    let e2 = e_dnorm2(&f)?;
    let e4 = e_dnorm4(&f)?;
    let var = var_dnorm2(&f)?;

    let mc = args.mc.map(|samples| {
        let pairs = mc_map(f.dim(), samples, RandomStream::new(args.seed, 1), |xi| {
            (
                eval_integral(&f, xi).expect("dimension checked"),
                grad_norm_sq(&f, xi).expect("order checked"),
            )
        });
        let est = |g: &dyn Fn(f64, f64) -> f64| {
            McEstimate::from_values(&pairs.iter().map(|&(x, d)| g(x, d)).collect::<Vec<_>>())
        };
        [
            est(&|x, _| x * x),
            est(&|x, _| x.powi(4)),
            est(&|_, d| d),
            est(&|_, d| d * d),
            // unbiased for the variance given the exact mean
            est(&|_, d| (d - e2) * (d - e2)),
        ]
    });

    let file = KernelFile::from_kernel(&f);
    let config = MomentsConfig {
        kernel: &file,
        mc: args.mc,
        seed: args.seed,
    };
    let mut table = Table::new("moments", args.seed, &config);
    table.meta("kernel", args.kernel.display().to_string());
    table.meta("dim", f.dim().to_string());
    table.meta("order", n.to_string());
    table.note("quantity: exact value from the chaos algebra; mc, mc_stderr: Monte Carlo mean and standard error");
    table.note("contraction_norm_l is the ambient norm of f contracted with itself on l slots");
    table.columns(["quantity", "exact", "mc", "mc_stderr"]);

    let mut push = |name: String, exact: f64, est: Option<McEstimate>| {
        table.row(vec![
            name,
            num(exact),
            opt(est.map(|e| e.mean)),
            opt(est.map(|e| e.stderr)),
        ]);
    };
    let pick = |i: usize| mc.as_ref().map(|m| m[i]);
    push("second_moment".into(), second, pick(0));
    push("fourth_moment".into(), fourth, pick(1));
    for l in 1..n {
        push(format!("contraction_norm_{l}"), f.contract(&f, l)?.norm_ambient(), None);
    }
    push("e_dnorm2".into(), e2, pick(2));
    push("e_dnorm4".into(), e4, pick(3));
    push("var_dnorm2".into(), var, pick(4));
    emit(args.out.as_deref(), &table.render())
}
