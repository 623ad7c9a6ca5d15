//! Workflows behind the `pairdose` binary: `match` forms the matched
//! design, `test` runs the randomization analyses on it, and `simulate`
//! writes synthetic fixtures and the SIR audit.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pairdose::matching::Ridge;

pub mod analyze;
pub mod artifacts;
pub mod config;
pub mod design;
pub mod error;
pub mod simulate;

pub use error::CliError;

use config::Loaded;

#[derive(Debug, Parser)]
#[command(
    name = "pairdose",
    version,
    about = "Matched-pair designs and randomization tests for dose-response hypotheses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Form matched pairs from the panel and write the design.
    Match(RunArgs),
    /// Run the configured tests on a matched design.
    Test(RunArgs),
    /// Write synthetic fixtures or the SIR equivalence audit.
    Simulate(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory for outputs.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mc_draws: Option<u64>,
    #[arg(long)]
    pub sink_fraction: Option<f64>,
    /// `off`, `default`, or a nonnegative value.
    #[arg(long, value_parser = parse_ridge)]
    pub ridge: Option<Ridge>,
}

fn parse_ridge(s: &str) -> Result<Ridge, String> {
    match s {
        "off" => Ok(Ridge::Off),
        "default" => Ok(Ridge::Default),
        v => match v.parse::<f64>() {
            Ok(x) if x >= 0.0 && x.is_finite() => Ok(Ridge::Value(x)),
            _ => Err(format!(
                "expected off, default or a nonnegative number, got {v:?}"
            )),
        },
    }
}

impl RunArgs {
    /// Reads the config and applies flag overrides.
    pub fn load(&self) -> Result<Loaded, CliError> {
        let mut loaded = Loaded::read(&self.config)?;
        let c = &mut loaded.config;
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(n) = self.mc_draws {
            c.inference
                .as_mut()
                .ok_or_else(|| CliError::Config("--mc-draws needs an inference section".into()))?
                .mc_draws = n;
        }
        if self.sink_fraction.is_some() || self.ridge.is_some() {
            let d = c.design.as_mut().ok_or_else(|| {
                CliError::Config("--sink-fraction and --ridge need a design section".into())
            })?;
            if let Some(f) = self.sink_fraction {
                d.sink_fraction = f;
            }
            if let Some(r) = self.ridge {
                d.ridge = r;
            }
        }
        Ok(loaded)
    }
}

/// Runs one subcommand and returns the manifest hash.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let args = match &cli.command {
        Command::Match(a) | Command::Test(a) | Command::Simulate(a) => a,
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // A pool already built by an earlier call in the same process is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let loaded = args.load()?;
    match &cli.command {
        Command::Match(_) => design::run(&loaded, &args.out),
        Command::Test(_) => analyze::run(&loaded, &args.out),
        Command::Simulate(_) => simulate::run(&loaded, &args.out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_flag_values() {
        assert_eq!(parse_ridge("off"), Ok(Ridge::Off));
        assert_eq!(parse_ridge("default"), Ok(Ridge::Default));
        assert_eq!(parse_ridge("0.5"), Ok(Ridge::Value(0.5)));
        assert!(parse_ridge("-1").is_err());
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "pairdose", "match", "--config", "c.json", "--seed", "3", "--ridge", "default",
        ])
        .unwrap();
        let Command::Match(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.seed, Some(3));
        assert_eq!(a.out, PathBuf::from("run"));
    }
}
