//! Command-line front end for the `wiener-core` batteries.

pub mod commands;
pub mod config;
pub mod error;
pub mod kernel_file;
pub mod output;

use clap::{Parser, Subcommand};

use crate::commands::{battery, fbm, moments, selfcheck};
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "wiener", version, about = "Fourth-moment and Malliavin-gradient diagnostics for Wiener chaos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact moments and gradient-norm statistics of one kernel file.
    Moments(moments::MomentsArgs),
    /// Condition battery over a family of kernels, one CSV row per k.
    Battery(battery::BatteryArgs),
    /// Power variation of fractional Brownian motion.
    Fbm(fbm::FbmArgs),
    /// Run the invariant suite at fixed seeds.
    Selfcheck(selfcheck::SelfcheckArgs),
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Moments(a) => moments::run(a),
        Command::Battery(a) => battery::run(a),
        Command::Fbm(a) => fbm::run(a),
        Command::Selfcheck(a) => selfcheck::run(a),
    }
}
