use std::path::PathBuf;

use clap::Args;
use wiener_core::clt::{
    diagnose_fixed_chaos, diagnose_vector, families, BatteryOptions, Diagnostics1D, McOptions, DEFAULT_EPS,
};
use wiener_core::{RandomStream, SymKernel, ORDER_CAP, SUPPORT_CAP};

use crate::config::{load_toml, BatteryConfig, BatteryFile};
use crate::error::{CliError, CliResult};
use crate::kernel_file::KernelFile;
use crate::output::{emit, flag, num, opt, Table};

pub const FAMILIES: [&str; 4] = ["tensor-sum", "fixed", "file", "orthogonal-sums"];

#[derive(Args, Debug, Default)]
pub struct BatteryArgs {
    /// TOML config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// tensor-sum, fixed, file or orthogonal-sums.
    #[arg(long)]
    pub family: Option<String>,
    /// Chaos order n (at least 2).
    #[arg(long)]
    pub order: Option<usize>,
    /// Largest sequence index.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Kernel file for the `file` family.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Monte Carlo sample size for KS and characteristic-identity columns.
    #[arg(long)]
    pub mc: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Level at which a condition counts as met.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn resolve(args: &BatteryArgs) -> CliResult<BatteryConfig> {
    let file: BatteryFile = load_toml(args.config.as_deref())?;
    let family = args
        .family
        .clone()
        .or(file.family)
        .ok_or_else(|| CliError::Config("--family is required".into()))?;
    if !FAMILIES.contains(&family.as_str()) {
        return Err(CliError::Config(format!(
            "unknown family {family:?}; expected one of {}",
            FAMILIES.join(", ")
        )));
    }
    let kernel = args
        .kernel
        .as_ref()
        .map(|p| p.display().to_string())
        .or(file.kernel);
    let threshold = args.threshold.or(file.threshold).unwrap_or(DEFAULT_EPS);
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(CliError::Config(format!("threshold must be positive and finite, got {threshold}")));
    }
    let kmin = file.kmin.unwrap_or(1);
    let kmax = args.kmax.or(file.kmax).unwrap_or(kmin);
    if kmin == 0 || kmax < kmin {
        return Err(CliError::Config(format!("invalid k range {kmin}..={kmax}")));
    }
    let mc = args.mc.or(file.mc);
    if let Some(m) = mc {
        if m < wiener_core::ks::KS_MIN_SAMPLES {
            return Err(CliError::Config(format!(
                "--mc must be at least {}, got {m}",
                wiener_core::ks::KS_MIN_SAMPLES
            )));
        }
    }
    let coords = file.coords.unwrap_or(2);
    if family == "orthogonal-sums" && coords < 2 {
        return Err(CliError::Config("orthogonal-sums needs coords >= 2".into()));
    }
    let t_grid = file.t_grid.unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Config("t_grid must be finite".into()));
    }
    let order = match (&family[..], args.order.or(file.order)) {
        ("file", o) => {
            let path = kernel
                .as_deref()
                .ok_or_else(|| CliError::Config("family file needs --kernel".into()))?;
            let f = KernelFile::load(path.as_ref())?;
            if let Some(o) = o {
                if o != f.order() {
                    return Err(CliError::Config(format!("--order {o} disagrees with kernel order {}", f.order())));
                }
            }
            f.order()
        }
        (_, Some(o)) => o,
        (_, None) => return Err(CliError::Config("--order is required".into())),
    };
    if order < 2 {
        return Err(CliError::Config(format!(
            "order {order} rejected: the fourth-moment theorem is stated for fixed chaos order n >= 2"
        )));
    }
    // fourth moments expand a product of order 4n
    if 4 * order > ORDER_CAP {
        return Err(CliError::Cap(format!("fourth moment of order {order} needs order {} > {ORDER_CAP}", 4 * order)));
    }
    if family != "fixed" && family != "file" && kmax > SUPPORT_CAP {
        return Err(CliError::Cap(format!("k = {kmax} exceeds the support cap of {SUPPORT_CAP}")));
    }
    Ok(BatteryConfig {
        family,
        order,
        kmin,
        kmax,
        threshold,
        mc,
        seed: args.seed.or(file.seed).unwrap_or(0),
        kernel,
        coords,
        t_grid,
    })
}

fn options(cfg: &BatteryConfig) -> BatteryOptions {
    BatteryOptions {
        eps: cfg.threshold,
        mc: cfg.mc.map(|samples| McOptions {
            samples,
            stream: RandomStream::new(cfg.seed, 2),
            t_grid: cfg.t_grid.clone(),
        }),
    }
}

fn scalar_columns(order: usize, mc: bool) -> Vec<String> {
    let mut cols: Vec<String> = ["k", "order", "second_moment", "fourth_moment"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..order).map(|l| format!("contraction_sq_{l}")));
    cols.extend(
        [
            "e_dnorm2",
            "e_dnorm4",
            "var_dnorm2",
            "dnorm2_l2_dev",
            "flag_normalized",
            "flag_fourth_moment",
            "flag_contractions",
            "flag_derivative",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    if mc {
        cols.extend(["char_residual", "char_stderr", "ks_stat", "ks_p"].iter().map(|s| s.to_string()));
    }
    cols
}

fn scalar_row(d: &Diagnostics1D, mc: bool) -> Vec<String> {
    let mut row = vec![
        d.k.to_string(),
        d.order.to_string(),
        num(d.second_moment),
        num(d.fourth_moment),
    ];
    row.extend(d.contraction_norms.iter().map(|c| num(c * c)));
    row.extend([
        num(d.e_dnorm2),
        num(d.e_dnorm4),
        num(d.var_dnorm2),
        num(d.dnorm2_l2_dev),
        flag(d.flags.normalized),
        flag(d.flags.fourth_moment),
        flag(d.flags.contractions),
        flag(d.flags.derivative),
    ]);
    if mc {
        row.extend([opt(d.char_residual), opt(d.char_stderr), opt(d.ks_stat), opt(d.ks_p)]);
    }
    row
}

pub fn render(cfg: &BatteryConfig) -> CliResult<String> {
    let opts = options(cfg);
    let mc = cfg.mc.is_some();
    let mut table = Table::new("battery", cfg.seed, cfg);
    table.meta("family", cfg.family.clone());
    table.meta("threshold", num(cfg.threshold));

    if cfg.family == "orthogonal-sums" {
        let d = cfg.coords;
        let block = d.next_power_of_two();
        table.note(format!(
            "rows: d = {d} orthogonal tensor sums at k = multiples of {block}; gram_offdiag_max = max over i<j of E[<DF^i,DF^j>^2]"
        ));
        table.note("cs_bound_max: largest Cauchy-Schwarz bound on those Gram moments; vd_max_abs: largest |E[F^i1 F^i2 F^i3 F^i4]| over V_d");
        table.note("flags: 1 when the metric is within threshold of its Gaussian target");
        table.columns([
            "k",
            "d",
            "order",
            "cov_max_dev",
            "gram_offdiag_max",
            "cs_bound_max",
            "sum_fourth",
            "sum_fourth_target",
            "vd_max_abs",
            "flag_covariance",
            "flag_coordinates",
            "flag_gram_offdiag",
            "flag_sum_fourth",
            "flag_vd_moments",
        ]);
        let start = cfg.kmin.div_ceil(block) * block;
        for k in (start..=cfg.kmax).step_by(block) {
            let fs = families::orthogonal_tensor_sums(cfg.order, k, d)?;
            let v = diagnose_vector(&fs, k, &opts)?;
            let cov_dev = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| (v.covariance[i][j] - if i == j { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max);
            let gram = v.gram_offdiag.iter().map(|g| g.value).fold(0.0, f64::max);
            let cs = v.gram_offdiag.iter().map(|g| g.cauchy_schwarz_bound).fold(0.0, f64::max);
            let vd = v.vd_moments.iter().map(|(_, m)| m.abs()).fold(0.0, f64::max);
            table.row(vec![
                k.to_string(),
                d.to_string(),
                cfg.order.to_string(),
                num(cov_dev),
                num(gram),
                num(cs),
                num(v.sum_fourth),
                num(3.0 * (d * d) as f64),
                num(vd),
                flag(v.flags.covariance),
                flag(v.flags.coordinates),
                flag(v.flags.gram_offdiag),
                flag(v.flags.sum_fourth),
                flag(v.flags.vd_moments),
            ]);
        }
        return Ok(table.render());
    }

    table.note("contraction_sq_l: squared ambient norm of f contracted with itself on l slots (target 0)");
    table.note("dnorm2_l2_dev: E[(|DF|^2 - n)^2]; flags are 1 when a condition is met at the threshold");
    if mc {
        table.note("char_residual: sup over t_grid of the integration-by-parts residual; ks_p: KS p-value against N(0,1)");
    }
    table.columns(scalar_columns(cfg.order, mc));
    let fixed_file: Option<SymKernel> = match cfg.family.as_str() {
        "file" => Some(KernelFile::load(cfg.kernel.as_deref().expect("resolved").as_ref())?),
        "fixed" => Some(families::fixed(cfg.order)?),
        _ => None,
    };
    let ks: Vec<usize> = if cfg.family == "file" { vec![cfg.kmin] } else { (cfg.kmin..=cfg.kmax).collect() };
    for k in ks {
        let f = match &fixed_file {
            Some(f) => f.clone(),
            None => families::tensor_sum(cfg.order, k)?,
        };
        let d = diagnose_fixed_chaos(&f, k, &opts)?;
        table.row(scalar_row(&d, mc));
    }
    Ok(table.render())
}

pub fn run(args: &BatteryArgs) -> CliResult<()> {
    let cfg = resolve(args)?;
    let text = render(&cfg)?;
    emit(args.out.as_deref(), &text)
}
