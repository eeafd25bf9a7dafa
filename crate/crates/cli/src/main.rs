use clap::Parser;
use wiener_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // help and version exit 0; usage errors exit 2
        Err(e) => e.exit(),
    };
    if let Err(err) = run(&cli) {
        eprintln!("wiener: {err}");
        std::process::exit(err.exit_code());
    }
}
