//! `ibuq`: dataset generation, training, evaluation, sweeps and plots.
//!
//! Every command takes its settings as `--key value` flags on top of an
//! optional `--config FILE`, and writes the resolved settings to
//! `config.txt` in its output directory so the run can be replayed.

mod config;
mod error;
mod eval;
mod fetch;
mod gen_data;
mod plot;
mod settings;
mod sweep;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, Schema};
use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "ibuq",
    version,
    about = "Information-bottleneck uncertainty quantification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand.
#[derive(clap::Args, Debug)]
struct Settings {
    /// Flat key=value file, e.g. the config.txt of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the accepted settings and their defaults, then exit.
    #[arg(long)]
    list_settings: bool,
    /// `--key value` or `--key=value` pairs; `ibuq <cmd> <kind> --list-settings` shows the keys.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "--KEY VALUE"
    )]
    rest: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset.
    GenData {
        kind: DataKind,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train a model and write its checkpoint and metrics.
    Train {
        mode: TrainMode,
        #[command(flatten)]
        settings: Settings,
    },
    /// Evaluate a checkpoint and write a CSV report.
    Eval {
        mode: EvalMode,
        #[command(flatten)]
        settings: Settings,
    },
    /// Render a figure from a CSV produced by another command.
    Plot {
        kind: PlotKind,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train over a grid of β values and keep the best run per β.
    SweepBeta {
        #[command(flatten)]
        settings: Settings,
    },
    /// Download the California housing table and convert it to CSV.
    HousingFetch {
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DataKind {
    Discontinuous,
    Operator,
    HousingSplit,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TrainMode {
    IbuqRegression,
    IbuqOperator,
    Ensemble,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EvalMode {
    Table1,
    Housing,
    Operator,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PlotKind {
    InfoPlane,
    Band,
    Lengths,
    Field,
}

/// Splits `--key value` / `--key=value` tokens into pairs; dashes in keys
/// become underscores.
fn parse_pairs(rest: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = rest.iter();
    while let Some(tok) = it.next() {
        let Some(flag) = tok.strip_prefix("--") else {
            return Err(CliError::usage(format!("expected --key, got `{tok}`")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::usage(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn describe(schema: Schema) -> String {
    schema
        .iter()
        .map(|(k, v)| match v {
            Some(v) => format!("  --{:<22} {v}\n", k.replace('_', "-")),
            None => format!("  --{:<22} (required)\n", k.replace('_', "-")),
        })
        .collect()
}

fn resolve(name: &str, schema: Schema, s: &Settings) -> CliResult<Option<RunConfig>> {
    if s.list_settings {
        print!("{}", describe(schema));
        return Ok(None);
    }
    let pairs = parse_pairs(&s.rest)?;
    RunConfig::resolve(name, schema, s.config.as_deref(), &pairs).map(Some)
}

fn run(cli: Cli) -> CliResult<()> {
    macro_rules! with_config {
        ($name:expr, $schema:expr, $settings:expr, $f:expr) => {
            match resolve($name, $schema, $settings)? {
                Some(cfg) => $f(&cfg),
                None => Ok(()),
            }
        };
    }
    match &cli.command {
        Command::GenData { kind, settings } => match kind {
            DataKind::Discontinuous => with_config!(
                "gen-data discontinuous",
                settings::GEN_DISCONTINUOUS,
                settings,
                gen_data::discontinuous
            ),
            DataKind::Operator => with_config!(
                "gen-data operator",
                settings::GEN_OPERATOR,
                settings,
                gen_data::operator
            ),
            DataKind::HousingSplit => with_config!(
                "gen-data housing-split",
                settings::GEN_HOUSING,
                settings,
                gen_data::housing_split
            ),
        },
        Command::Train { mode, settings } => match mode {
            TrainMode::IbuqRegression => with_config!(
                "train ibuq-regression",
                &settings::train_regression_schema(),
                settings,
                train::regression
            ),
            TrainMode::IbuqOperator => with_config!(
                "train ibuq-operator",
                settings::TRAIN_OPERATOR,
                settings,
                train::operator
            ),
            TrainMode::Ensemble => with_config!(
                "train ensemble",
                settings::TRAIN_ENSEMBLE,
                settings,
                train::ensemble
            ),
        },
        Command::Eval { mode, settings } => match mode {
            EvalMode::Table1 => {
                with_config!("eval table1", settings::EVAL_TABLE1, settings, eval::table1)
            }
            EvalMode::Housing => {
                with_config!(
                    "eval housing",
                    settings::EVAL_HOUSING,
                    settings,
                    eval::housing
                )
            }
            EvalMode::Operator => {
                with_config!(
                    "eval operator",
                    settings::EVAL_OPERATOR,
                    settings,
                    eval::operator
                )
            }
        },
        Command::Plot { kind, settings } => {
            let name = format!("plot {}", kind.to_possible_value().unwrap().get_name());
            with_config!(&name, settings::PLOT, settings, |c| plot::run(*kind, c))
        }
        Command::SweepBeta { settings } => with_config!(
            "sweep-beta",
            &settings::sweep_schema(),
            settings,
            sweep::run
        ),
        Command::HousingFetch { settings } => {
            with_config!("housing-fetch", settings::FETCH, settings, fetch::run)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pairs_accept_both_spellings() {
        let p = parse_pairs(&strings(&[
            "--n",
            "32",
            "--noise=0.2",
            "--wide-batch",
            "auto",
        ]))
        .unwrap();
        assert_eq!(
            p,
            vec![
                ("n".to_string(), "32".to_string()),
                ("noise".to_string(), "0.2".to_string()),
                ("wide_batch".to_string(), "auto".to_string()),
            ]
        );
        assert!(parse_pairs(&strings(&["n", "3"])).is_err());
        assert!(parse_pairs(&strings(&["--n"])).is_err());
    }

    #[test]
    fn negative_values_are_not_flags() {
        let p = parse_pairs(&strings(&["--thresholds", "-1.2,-1.5,-2"])).unwrap();
        assert_eq!(p[0].1, "-1.2,-1.5,-2");
    }
}
