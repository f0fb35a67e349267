use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};

use super::model::{RegressionModel, TrainRecord};
use crate::datagen::{evaluation_grid, is_in_distribution, read_csv, write_csv};
use crate::ibcore::PredictiveDistribution;
use crate::netcore::SeededRng;
use crate::{Error, Result};

/// Relative L2 error `‖pred − target‖ / ‖target‖`.
pub fn rl2e(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            format!("{} predictions", target.len()),
            pred.len(),
        ));
    }
    let denom: f64 = target.iter().map(|t| t * t).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(
            "relative error of an all-zero target".into(),
        ));
    }
    let num: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((num / denom).sqrt())
}

/// ID/OOD errors and uncertainty summaries on the discontinuous benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub id_rl2e: f64,
    pub ood_rl2e: f64,
    pub id_mean_std: f64,
    pub ood_mean_std: f64,
    /// Mean gate over ID and OOD grid points (NaN when no gate is reported).
    pub id_mean_gate: f64,
    pub ood_mean_gate: f64,
}

impl BenchmarkReport {
    /// Splits a scalar prediction on grid `x` into the training intervals
    /// and their complement in `[-1, 1]`.
    pub fn from_predictions(
        x: ArrayView1<f64>,
        truth: ArrayView1<f64>,
        mean: ArrayView1<f64>,
        std: ArrayView1<f64>,
        gate: Option<ArrayView1<f64>>,
    ) -> Result<Self> {
        let (id, ood): (Vec<usize>, Vec<usize>) =
            (0..x.len()).partition(|&i| is_in_distribution(x[i]));
        if id.is_empty() || ood.is_empty() {
            return Err(Error::EmptyData("grid misses the ID or OOD region".into()));
        }
        let pick = |v: ArrayView1<f64>, rows: &[usize]| v.select(Axis(0), rows);
        let mean_of = |v: Array1<f64>| v.mean().unwrap_or(f64::NAN);
        Ok(Self {
            id_rl2e: rl2e(pick(mean, &id).view(), pick(truth, &id).view())?,
            ood_rl2e: rl2e(pick(mean, &ood).view(), pick(truth, &ood).view())?,
            id_mean_std: mean_of(pick(std, &id)),
            ood_mean_std: mean_of(pick(std, &ood)),
            id_mean_gate: gate.map_or(f64::NAN, |g| mean_of(pick(g, &id))),
            ood_mean_gate: gate.map_or(f64::NAN, |g| mean_of(pick(g, &ood))),
        })
    }
}

/// Predicts on an `n_grid`-point grid over `[-1, 1]` and summarizes it.
pub fn benchmark_report(
    model: &RegressionModel,
    n_grid: usize,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<(BenchmarkReport, PredictiveDistribution)> {
    let grid = evaluation_grid(n_grid);
    let p = model.predict(&grid.x, samples, rng)?;
    let gate = p.mean_gate();
    let report = BenchmarkReport::from_predictions(
        grid.x.column(0),
        grid.y.column(0),
        p.mean.column(0),
        p.std.column(0),
        Some(gate.view()),
    )?;
    Ok((report, p))
}

const METRIC_COLUMNS: [&str; 5] = ["iteration", "objective", "iyz", "ixz", "lr"];

pub fn write_metrics_csv(path: &Path, records: &[TrainRecord]) -> Result<()> {
    let table = Array2::from_shape_fn((records.len(), 5), |(i, c)| {
        let r = &records[i];
        match c {
            0 => r.iteration as f64,
            1 => r.objective,
            2 => r.iyz,
            3 => r.ixz,
            _ => r.lr,
        }
    });
    write_csv(path, &METRIC_COLUMNS, &table)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<TrainRecord>> {
    let (header, table) = read_csv(path)?;
    if header != METRIC_COLUMNS {
        return Err(Error::format(path, format!("unexpected header {header:?}")));
    }
    Ok(table
        .rows()
        .into_iter()
        .map(|r| TrainRecord {
            iteration: r[0] as usize,
            objective: r[1],
            iyz: r[2],
            ixz: r[3],
            lr: r[4],
        })
        .collect())
}

/// Columns `x, mean, std, gate` (indexed when multi-dimensional); `gate`
/// is averaged over latent coordinates.
pub fn write_prediction_csv(
    path: &Path,
    x: &Array2<f64>,
    p: &PredictiveDistribution,
) -> Result<()> {
    let dx = x.ncols();
    let dy = p.mean.ncols();
    let names = |base: &str, d: usize| -> Vec<String> {
        if d == 1 {
            vec![base.to_string()]
        } else {
            (0..d).map(|i| format!("{base}{i}")).collect()
        }
    };
    let mut header = names("x", dx);
    header.extend(names("mean", dy));
    header.extend(names("std", dy));
    header.push("gate".into());
    let gate = p.mean_gate().insert_axis(Axis(1));
    let table = concatenate(
        Axis(1),
        &[x.view(), p.mean.view(), p.std.view(), gate.view()],
    )
    .map_err(|_| Error::shape(format!("{} prediction rows", x.nrows()), p.mean.nrows()))?;
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &table)
}
