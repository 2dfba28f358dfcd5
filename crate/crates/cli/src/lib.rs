//! Driver for the `ou-riesz` command-line tool: configuration, the five
//! suites and their JSON/CSV reports.

pub mod config;
pub mod report;
pub mod suites;

pub use config::{ConfigError, RunConfig, Suite};
pub use report::{Case, CsvRow, Report};

/// Runs one suite with a validated configuration.
pub fn run(cfg: &RunConfig) -> Result<Report, ConfigError> {
    cfg.validate()?;
    let ladder = matches!(cfg.suite, Suite::Hormander | Suite::Counterexample | Suite::Table);
    if ladder && cfg.xi.len() < 3 {
        return Err(ConfigError::Value {
            key: "xi".into(),
            msg: format!("a growth ladder needs at least 3 points, got {}", cfg.xi.len()),
        });
    }
    Ok(match cfg.suite {
        Suite::SpectralCheck => suites::spectral_check(cfg),
        Suite::KernelCheck => suites::kernel_check(cfg),
        Suite::Hormander => suites::hormander(cfg),
        Suite::Counterexample => suites::counterexample(cfg),
        Suite::Table => suites::table(cfg),
    })
}
