use std::fs;
use std::path::Path;

use ibuq::baselines::{ensemble_predict, train_deep_ensemble};
use ibuq::datagen::{write_csv, OperatorDataset, RegressionData};
use ibuq::netcore::SeededRng;
use ibuq::operator::train_operator_with;
use ibuq::regression::{rl2e, train_regression_with, write_metrics_csv, TrainRecord};
use ndarray::{Array2, Axis};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::settings;

pub const MODEL_DIR: &str = "model";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn read_regression_data(path: &Path, output_dim: usize) -> CliResult<RegressionData> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "{} does not exist",
            path.display()
        )));
    }
    Ok(RegressionData::from_csv(path, output_dim)?)
}

/// Runs `train` and writes whatever records it produced, also on failure.
fn with_metrics<T>(
    out: &Path,
    train: impl FnOnce(&mut dyn FnMut(&TrainRecord)) -> ibuq::Result<T>,
) -> CliResult<(T, Vec<TrainRecord>)> {
    let mut trace = Vec::new();
    let result = train(&mut |r| trace.push(*r));
    write_metrics_csv(&out.join(METRICS_FILE), &trace)?;
    match result {
        Ok(v) => Ok((v, trace)),
        Err(e) => Err(e
            .context(format!(
                "training aborted after {} iterations; partial metrics in {}",
                trace.len(),
                out.join(METRICS_FILE).display()
            ))
            .into()),
    }
}

fn heldout_rl2e(
    c: &RunConfig,
    output_dim: usize,
    predict: impl Fn(&Array2<f64>) -> CliResult<Array2<f64>>,
) -> CliResult<Option<f64>> {
    let Some(path) = c.optional::<String>("heldout")? else {
        return Ok(None);
    };
    let data = read_regression_data(Path::new(&path), output_dim)?;
    let mean = predict(&data.x)?;
    let flat = |a: &Array2<f64>| a.iter().copied().collect::<ndarray::Array1<f64>>();
    Ok(Some(rl2e(flat(&mean).view(), flat(&data.y).view())?))
}

pub fn regression(c: &RunConfig) -> CliResult<()> {
    let output_dim: usize = c.get("output_dim")?;
    let data = read_regression_data(&c.path("data"), output_dim)?;
    let cfg = settings::regression_config(
        c,
        data.x.ncols(),
        output_dim,
        c.get("seed")?,
        c.get("beta")?,
    )?;
    let out = c.path("out");
    c.write(&out)?;
    if cfg.ib.beta == 0.0 {
        println!("beta = 0: the compression term is logged but does not enter the objective");
    }
    let (trained, _) = with_metrics(&out, |obs| train_regression_with(&data, &cfg, obs))?;
    trained.model.save(&out.join(MODEL_DIR))?;
    let t = trained.final_terms;
    let samples: usize = c.get("samples")?;
    let held = heldout_rl2e(c, output_dim, |x| {
        let mut rng = SeededRng::with_stream(cfg.seed, 5);
        Ok(trained.model.predict(x, samples, &mut rng)?.mean)
    })?;
    print_summary(t.objective, t.iyz, t.ixz, held);
    Ok(())
}

fn print_summary(objective: f64, iyz: f64, ixz: f64, held: Option<f64>) {
    let mut line = format!("final objective {objective:.6} (I(Y;Z) {iyz:.6}, I(X;Z) {ixz:.6})");
    if let Some(e) = held {
        line.push_str(&format!(", held-out RL2E {e:.6}"));
    }
    println!("{line}");
}

pub fn operator(c: &RunConfig) -> CliResult<()> {
    let dir = c.path("data");
    if !dir.join("manifest.txt").exists() {
        return Err(CliError::usage(format!(
            "{} is not an operator dataset directory",
            dir.display()
        )));
    }
    let data = OperatorDataset::load(&dir)?;
    let cfg = settings::operator_config(c, data.u.ncols())?;
    let out = c.path("out");
    c.write(&out)?;
    let (trained, trace) = with_metrics(&out, |obs| train_operator_with(&data, &cfg, obs))?;
    trained.model.save(&out.join(MODEL_DIR))?;
    match trace.last() {
        Some(r) => print_summary(r.objective, r.iyz, r.ixz, None),
        None => println!("no training iterations run"),
    }
    Ok(())
}

pub fn ensemble(c: &RunConfig) -> CliResult<()> {
    let output_dim: usize = c.get("output_dim")?;
    let data = read_regression_data(&c.path("data"), output_dim)?;
    let cfg = settings::ensemble_config(c)?;
    let out = c.path("out");
    c.write(&out)?;
    let ens = train_deep_ensemble(&data, &cfg)?;
    ens.save(&out.join(MODEL_DIR))?;

    // per-member training error on the original scale
    let preds = ens.member_predictions(&data.x)?;
    let table = Array2::from_shape_fn((preds.len(), 3), |(i, col)| match col {
        0 => i as f64,
        1 => ens.members[i].seed as f64,
        _ => (&preds[i] - &data.y).mapv(|v| v * v).mean().unwrap(),
    });
    write_csv(
        &out.join(METRICS_FILE),
        &["member", "seed", "train_mse"],
        &table,
    )?;
    let held = heldout_rl2e(c, output_dim, |x| Ok(ensemble_predict(&ens, x)?.0))?;
    let mse = table.column(2).mean_axis(Axis(0)).unwrap().into_scalar();
    let mut line = format!(
        "{} of {} members trained, mean train MSE {mse:.6}",
        ens.members.len(),
        cfg.members
    );
    if let Some(e) = held {
        line.push_str(&format!(", held-out RL2E {e:.6}"));
    }
    println!("{line}");
    Ok(())
}

/// Kind of checkpoint stored under `dir`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Checkpoint {
    Regression,
    Ensemble,
    Operator,
}

pub fn detect_checkpoint(dir: &Path) -> CliResult<Checkpoint> {
    let dir = if dir.join(MODEL_DIR).is_dir() {
        dir.join(MODEL_DIR)
    } else {
        dir.to_path_buf()
    };
    let read_type = |p: &Path| -> Option<String> {
        let text = fs::read_to_string(p).ok()?;
        text.lines()
            .find_map(|l| l.strip_prefix("type=").map(str::to_string))
    };
    let kind = read_type(&dir.join("ib").join("manifest.txt"))
        .or_else(|| read_type(&dir.join("manifest.txt")));
    match kind.as_deref() {
        Some("ibuq-regression") => Ok(Checkpoint::Regression),
        Some("ibuq-operator") => Ok(Checkpoint::Operator),
        Some("ensemble") => Ok(Checkpoint::Ensemble),
        _ => Err(CliError::usage(format!(
            "{} does not hold a model checkpoint",
            dir.display()
        ))),
    }
}

/// `dir/model` when a run directory is given, else `dir` itself.
pub fn model_dir(dir: &Path) -> std::path::PathBuf {
    if dir.join(MODEL_DIR).is_dir() {
        dir.join(MODEL_DIR)
    } else {
        dir.to_path_buf()
    }
}
