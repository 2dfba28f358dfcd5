use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ou_riesz_cli::{run, ConfigError, RunConfig, Suite};

#[derive(Parser)]
#[command(name = "ou-riesz", version, about = "Endpoint experiments for Gaussian Riesz transforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact Hermite identities and adjointness of every pairing.
    SpectralCheck(Common),
    /// Kernel quadrature against the spectral side.
    KernelCheck(Common),
    /// Hörmander functionals on maximal balls.
    Hormander(Common),
    /// Divergence ladders and pointwise bounds in d >= 2.
    Counterexample(Common),
    /// The endpoint table for R, S, R*, S*.
    Table(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dimensions, comma separated.
    #[arg(long)]
    dim: Option<String>,
    /// Ladder values, comma separated.
    #[arg(long)]
    xi: Option<String>,
    /// Relative quadrature tolerance.
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Directory for `<suite>.json` and `<suite>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use a multiplier with m(0) = 1 to check that the suite notices.
    #[arg(long, hide = true)]
    inject_m0: bool,
}

fn configure(suite: Suite, c: Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::defaults(suite);
    if let Some(path) = &c.config {
        cfg.load_file(path)?;
    }
    for (key, value) in [("dim", c.dim), ("xi", c.xi), ("tol", c.tol), ("seed", c.seed)] {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if c.out.is_some() {
        cfg.out = c.out;
    }
    cfg.inject_m0 = c.inject_m0;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (suite, common) = match cli.command {
        Command::SpectralCheck(c) => (Suite::SpectralCheck, c),
        Command::KernelCheck(c) => (Suite::KernelCheck, c),
        Command::Hormander(c) => (Suite::Hormander, c),
        Command::Counterexample(c) => (Suite::Counterexample, c),
        Command::Table(c) => (Suite::Table, c),
    };
    let report = match configure(suite, common).and_then(|cfg| run(&cfg).map(|r| (cfg, r))) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let (cfg, report) = report;
    print!("{}", report.summary());
    if let Some(dir) = &cfg.out {
        if let Err(e) = report.write_to(dir) {
            eprintln!("error: cannot write reports to {}: {e}", dir.display());
            return ExitCode::from(2);
        }
    }
    let code = report.exit_code();
    println!("{}: {}", suite, if code == 0 { "all cases pass" } else { "FAILED or inconclusive" });
    ExitCode::from(code as u8)
}
