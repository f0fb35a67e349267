//! Setting schemas for every command and the typed configs built from them.
//! Defaults mirror the library defaults, so a flagless run uses the
//! benchmark configuration.

use ibuq::baselines::EnsembleConfig;
use ibuq::flows::FitConfig;
use ibuq::ibcore::MixupConfig;
use ibuq::operator::OperatorTrainConfig;
use ibuq::regression::RegressionConfig;

use crate::config::{RunConfig, Schema};
use crate::error::{CliError, CliResult};

type Entry = (&'static str, Option<&'static str>);

pub const GEN_DISCONTINUOUS: Schema<'static> = &[
    ("n", None),
    ("noise", Some("0.1")),
    ("seed", Some("0")),
    ("out", Some("data/discontinuous")),
];

pub const GEN_OPERATOR: Schema<'static> = &[
    ("n", None),
    ("l", Some("0.5")),
    ("noise", Some("0.01")),
    ("sensor_noise", Some("false")),
    ("seed", Some("0")),
    ("nx", Some("100")),
    ("nt", Some("100")),
    ("diffusion", Some("0.01")),
    ("reaction", Some("0.5")),
    ("out", Some("data/operator")),
];

pub const GEN_HOUSING: Schema<'static> = &[
    ("input", None),
    ("k", Some("20")),
    ("thresholds", Some("-1.2,-1.5,-2.0")),
    ("split_seed", Some("0")),
    ("expect_rows", Some("20640")),
    ("seed", Some("0")),
    ("out", Some("data/housing")),
];

/// Settings of one IB-UQ regression fit, shared with the β sweep.
const REGRESSION: &[Entry] = &[
    ("data", None),
    ("output_dim", Some("1")),
    ("seed", Some("0")),
    ("beta", Some("0.3")),
    ("iterations", Some("5000")),
    ("batch", Some("256")),
    ("wide_batch", Some("auto")),
    ("lr", Some("1e-3")),
    ("lr_decay", Some("0.1")),
    ("lr_every", Some("1000")),
    ("tau", Some("16")),
    ("latent_dim", Some("20")),
    ("hidden", Some("32,32")),
    ("mixup", Some("true")),
    ("mixup_alpha", Some("0.005")),
    ("standardize_targets", Some("true")),
    ("gin_iterations", Some("200")),
    ("gin_lr", Some("1e-3")),
    ("gin_lr_decay", Some("0.1")),
    ("gin_lr_every", Some("50")),
];

pub fn train_regression_schema() -> Vec<Entry> {
    let mut s = REGRESSION.to_vec();
    s.extend_from_slice(&[
        ("heldout", Some("")),
        ("samples", Some("64")),
        ("out", Some("runs/regression")),
    ]);
    s
}

pub fn sweep_schema() -> Vec<Entry> {
    let mut s: Vec<Entry> = REGRESSION
        .iter()
        .filter(|(k, _)| !matches!(*k, "beta" | "seed"))
        .copied()
        .collect();
    s.extend_from_slice(&[
        ("betas", Some("0.1,0.2,0.3,0.5,0.7,0.9")),
        ("seeds", Some("0,1,2")),
        ("workers", Some("1")),
        ("out", Some("runs/sweep")),
    ]);
    s
}

pub const TRAIN_OPERATOR: Schema<'static> = &[
    ("data", None),
    ("seed", Some("0")),
    ("beta", Some("0.3")),
    ("iterations", Some("600")),
    ("batch", Some("256")),
    ("wide_batch", Some("auto")),
    ("queries", Some("100")),
    ("lr", Some("1e-3")),
    ("lr_decay", Some("0.1")),
    ("lr_every", Some("200")),
    ("tau", Some("1.4")),
    ("latent_dim", Some("64")),
    ("hidden", Some("128,128,128")),
    ("head_hidden", Some("128,128,128")),
    ("features", Some("128")),
    ("gin_iterations", Some("100")),
    ("gin_lr", Some("1e-3")),
    ("out", Some("runs/operator")),
];

pub const TRAIN_ENSEMBLE: Schema<'static> = &[
    ("data", None),
    ("output_dim", Some("1")),
    ("seed", Some("0")),
    ("members", Some("20")),
    ("steps", Some("2000")),
    ("weight_decay", Some("4e-6")),
    ("lr", Some("1e-3")),
    ("hidden", Some("50,50")),
    ("batch", Some("256")),
    ("heldout", Some("")),
    ("out", Some("runs/ensemble")),
];

pub const EVAL_TABLE1: Schema<'static> = &[
    ("model", None),
    ("grid", Some("1001")),
    ("samples", Some("64")),
    ("seed", Some("0")),
    ("out", Some("runs/eval-table1")),
];

pub const EVAL_HOUSING: Schema<'static> = &[
    ("model", None),
    ("split", None),
    ("samples", Some("64")),
    ("seed", Some("0")),
    ("out", Some("runs/eval-housing")),
];

pub const EVAL_OPERATOR: Schema<'static> = &[
    ("model", None),
    ("lengths", Some("0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")),
    ("n_inputs", Some("100")),
    ("samples", Some("64")),
    ("test_noise", Some("0.01")),
    ("field_length", Some("")),
    ("seed", Some("0")),
    ("out", Some("runs/eval-operator")),
];

pub const PLOT: Schema<'static> = &[("input", None), ("train", Some("")), ("out", None)];

pub const FETCH: Schema<'static> = &[
    (
        "url",
        Some("https://www.dcc.fc.up.pt/~ltorgo/Regression/cal_housing.tgz"),
    ),
    ("out", Some("data/housing-raw")),
];

fn positive(c: &RunConfig, key: &str) -> CliResult<usize> {
    let v: usize = c.get(key)?;
    if v == 0 {
        return Err(CliError::usage(format!("`{key}` must be positive")));
    }
    Ok(v)
}

fn widths(c: &RunConfig, key: &str) -> CliResult<Vec<usize>> {
    let w: Vec<usize> = c.list(key)?;
    if w.is_empty() || w.contains(&0) {
        return Err(CliError::usage(format!("`{key}` needs positive widths")));
    }
    Ok(w)
}

/// Regression settings for `seed`, from the shared keys.
pub fn regression_config(
    c: &RunConfig,
    input_dim: usize,
    output_dim: usize,
    seed: u64,
    beta: f64,
) -> CliResult<RegressionConfig> {
    let mut cfg = RegressionConfig::new(input_dim, output_dim, seed);
    cfg.ib = cfg.ib.with_latent_dim(c.get("latent_dim")?);
    cfg.ib.hidden = widths(c, "hidden")?;
    cfg.ib.beta = beta;
    cfg.iterations = c.get("iterations")?;
    cfg.batch_size = positive(c, "batch")?;
    cfg.wide_batch = c.optional("wide_batch")?;
    cfg.schedule = c.schedule("lr", "lr_decay", "lr_every")?;
    cfg.tau = c.get("tau")?;
    cfg.mixup = MixupConfig {
        enabled: c.get("mixup")?,
        alpha: c.get("mixup_alpha")?,
    };
    cfg.standardize_targets = c.get("standardize_targets")?;
    cfg.gin_fit = FitConfig {
        iterations: c.get("gin_iterations")?,
        schedule: c.schedule("gin_lr", "gin_lr_decay", "gin_lr_every")?,
        ..FitConfig::gin_regression(seed.wrapping_add(2))
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

pub fn operator_config(c: &RunConfig, sensors: usize) -> CliResult<OperatorTrainConfig> {
    let seed = c.get("seed")?;
    let mut cfg = OperatorTrainConfig::new(sensors, seed);
    cfg.model = cfg.model.with_latent_dim(c.get("latent_dim")?);
    cfg.model.encoder_hidden = widths(c, "hidden")?;
    cfg.model.head_hidden = widths(c, "head_hidden")?;
    cfg.model.features = positive(c, "features")?;
    cfg.model.beta = c.get("beta")?;
    cfg.iterations = c.get("iterations")?;
    cfg.batch_size = positive(c, "batch")?;
    cfg.wide_batch = c.optional("wide_batch")?;
    cfg.queries_per_function = positive(c, "queries")?;
    cfg.schedule = c.schedule("lr", "lr_decay", "lr_every")?;
    cfg.tau = c.get("tau")?;
    let gin_lr: f64 = c.get("gin_lr")?;
    if !(gin_lr > 0.0) {
        return Err(CliError::usage("`gin_lr` must be positive"));
    }
    cfg.gin_fit.iterations = c.get("gin_iterations")?;
    cfg.gin_fit.schedule = ibuq::netcore::LrSchedule::constant(gin_lr);
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

pub fn ensemble_config(c: &RunConfig) -> CliResult<EnsembleConfig> {
    let cfg = EnsembleConfig {
        members: c.get("members")?,
        train_steps: c.get("steps")?,
        weight_decay: c.get("weight_decay")?,
        lr: c.get("lr")?,
        hidden: widths(c, "hidden")?,
        batch_size: positive(c, "batch")?,
        seed: c.get("seed")?,
        ..EnsembleConfig::default()
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_library_settings() {
        let c = RunConfig::resolve(
            "train ibuq-regression",
            &train_regression_schema(),
            None,
            &[("data".into(), "x.csv".into())],
        )
        .unwrap();
        assert_eq!(
            regression_config(&c, 1, 1, 0, 0.3).unwrap(),
            RegressionConfig::new(1, 1, 0)
        );

        let c = RunConfig::resolve(
            "train ibuq-operator",
            TRAIN_OPERATOR,
            None,
            &[("data".into(), "d".into())],
        )
        .unwrap();
        assert_eq!(
            operator_config(&c, 100).unwrap(),
            OperatorTrainConfig::new(100, 0)
        );

        let c = RunConfig::resolve(
            "train ensemble",
            TRAIN_ENSEMBLE,
            None,
            &[("data".into(), "x.csv".into())],
        )
        .unwrap();
        assert_eq!(ensemble_config(&c).unwrap(), EnsembleConfig::default());
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        let c = RunConfig::resolve(
            "train ibuq-regression",
            &train_regression_schema(),
            None,
            &[
                ("data".into(), "x.csv".into()),
                ("lr_decay".into(), "2".into()),
            ],
        )
        .unwrap();
        assert_eq!(
            regression_config(&c, 1, 1, 0, 0.3).unwrap_err().exit_code(),
            2
        );
    }
}
