use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use wiener_core::fbm::{joint_experiment, FbmConfig, JointSummary};
use wiener_core::ChaosError;

use crate::config::{load_toml, FbmFile};
use crate::error::{CliError, CliResult};
use crate::output::{config_hash, emit, num, Table, TOOL};

#[derive(Args, Debug, Default)]
pub struct FbmArgs {
    /// TOML config with hurst, kappa, n, horizon, paths, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Odd power κ.
    #[arg(long)]
    pub kappa: Option<u32>,
    /// Grid points per unit time.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of simulated paths.
    #[arg(long)]
    pub mc: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-path CSV; the summary goes next to it with a `.json` extension.
    /// Without it the summary is printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn resolve(args: &FbmArgs) -> CliResult<FbmConfig> {
    let file: FbmFile = load_toml(args.config.as_deref())?;
    let d = FbmConfig::default();
    let cfg = FbmConfig {
        hurst: args.hurst.or(file.hurst).unwrap_or(d.hurst),
        kappa: args.kappa.or(file.kappa).unwrap_or(d.kappa),
        n: args.n.or(file.n).unwrap_or(d.n),
        horizon: args.horizon.or(file.horizon).unwrap_or(d.horizon),
        paths: args.mc.or(file.paths).unwrap_or(d.paths),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
    };
    if !(cfg.hurst > 0.0 && cfg.hurst < 0.5) {
        return Err(CliError::Hurst(cfg.hurst));
    }
    cfg.validate().map_err(|e| match e {
        ChaosError::InvalidArgument(msg) => CliError::Config(msg),
        other => other.into(),
    })?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'a str,
    seed: u64,
    config_sha256: String,
    c_sq_paper: f64,
    c_sq_twosided: f64,
    /// Two-sided minus one-sided.
    c_sq_difference: f64,
    sigma_sq_one_sided: f64,
    sigma_sq_two_sided: f64,
    level_independent: bool,
    square_independent: bool,
    summary: &'a JointSummary,
}

pub fn summary_json(cfg: &FbmConfig, s: &JointSummary) -> String {
    let (level, square) = s.independence_flags();
    let c = &s.constants;
    let report = Report {
        tool: TOOL,
        seed: cfg.seed,
        config_sha256: config_hash(cfg),
        c_sq_paper: c.c_sq_paper,
        c_sq_twosided: c.c_sq_twosided,
        c_sq_difference: c.c_sq_twosided - c.c_sq_paper,
        sigma_sq_one_sided: c.sigma_sum_one_sided(),
        sigma_sq_two_sided: c.sigma_sum_two_sided(),
        level_independent: level,
        square_independent: square,
        summary: s,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("plain data");
    text.push('\n');
    text
}

pub fn run(args: &FbmArgs) -> CliResult<()> {
    let cfg = resolve(args)?;
    let exp = joint_experiment(&cfg)?;
    let json = summary_json(&cfg, &exp.summary);
    match &args.out {
        Some(path) => {
            let mut table = Table::new("fbm", cfg.seed, &cfg);
            table.meta("hurst", num(cfg.hurst));
            table.meta("kappa", cfg.kappa.to_string());
            table.meta("n", cfg.n.to_string());
            table.meta("horizon", num(cfg.horizon));
            table.note("b_t: fBm at the horizon; z_t: normalized centred power variation at the horizon");
            table.columns(["path", "b_t", "z_t"]);
            for (i, p) in exp.samples.iter().enumerate() {
                table.row(vec![i.to_string(), num(p.b_t), num(p.z_t)]);
            }
            emit(Some(path), &table.render())?;
            emit(Some(&path.with_extension("json")), &json)
        }
        None => emit(None, &json),
    }
}
