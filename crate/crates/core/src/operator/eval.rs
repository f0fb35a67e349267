use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{predict_field, FieldPrediction, OperatorModel};
use crate::datagen::{
    generate_pair, query_grid, write_csv, GrfConfig, GrfSampler, OperatorDataConfig, PdeConfig,
};
use crate::netcore::SeededRng;
use crate::{Error, Result};

/// Section-cut times used for the field figures.
pub const CUT_TIMES: [f64; 3] = [0.25, 0.5, 0.75];

/// Settings of the correlation-length study.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthStudyConfig {
    pub lengths: Vec<f64>,
    pub n_inputs: usize,
    /// Std of the noise added to each test field.
    pub test_noise: f64,
    /// Latent draws per prediction.
    pub samples: usize,
    pub pde: PdeConfig,
    pub seed: u64,
}

impl LengthStudyConfig {
    pub fn new(lengths: Vec<f64>, n_inputs: usize, seed: u64) -> Self {
        Self {
            lengths,
            n_inputs,
            test_noise: 0.01,
            samples: 64,
            pde: PdeConfig::default(),
            seed,
        }
    }
}

/// One row of the study, averaged over the inputs that solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthRow {
    pub length: f64,
    pub rmse: f64,
    pub mean_std: f64,
    pub mean_gate: f64,
    pub evaluated: usize,
    pub failures: usize,
}

/// Field RMSE of the predictive mean against noisy reference solutions, by
/// GRF correlation length. Input `i` at length index `j` draws from its own
/// stream, so results do not depend on evaluation order.
pub fn rmse_by_length(model: &OperatorModel, cfg: &LengthStudyConfig) -> Result<Vec<LengthRow>> {
    if cfg.n_inputs == 0 || cfg.samples == 0 {
        return Err(Error::InvalidParameter(
            "input and sample counts must be positive".into(),
        ));
    }
    if let Some(&l) = cfg.lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "correlation lengths must be positive, got {l}"
        )));
    }
    let sensors = model.ib.config().sensors;
    if cfg.pde.nx != sensors {
        return Err(Error::shape(format!("{sensors} sensors"), cfg.pde.nx));
    }
    let grid = query_grid(&cfg.pde);
    let mut rows = Vec::with_capacity(cfg.lengths.len());
    for (j, &length) in cfg.lengths.iter().enumerate() {
        let data_cfg = OperatorDataConfig {
            pde: cfg.pde.clone(),
            ..OperatorDataConfig::new(1, length, cfg.test_noise)
        };
        let sampler = GrfSampler::new(&GrfConfig::unit_interval(length, cfg.pde.nx))?;
        let (mut rmse, mut std, mut gate) = (0.0, 0.0, 0.0);
        let mut failures = 0;
        for i in 0..cfg.n_inputs {
            let stream = ((j as u64) << 32) | i as u64;
            let mut rng = SeededRng::with_stream(cfg.seed, stream);
            let pair = match generate_pair(&sampler, &data_cfg, &mut rng) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("length {length}, input {i}: {e}");
                    failures += 1;
                    continue;
                }
            };
            let pred = predict_field(model, &pair.u, &grid, cfg.samples, &mut rng)?;
            let sq: f64 = pred
                .mean
                .iter()
                .zip(pair.s.iter())
                .map(|(m, s)| (m - s).powi(2))
                .sum();
            rmse += (sq / grid.nrows() as f64).sqrt();
            std += pred.std.mean().unwrap();
            gate += pred.gate;
        }
        let evaluated = cfg.n_inputs - failures;
        let n = evaluated as f64;
        rows.push(LengthRow {
            length,
            rmse: rmse / n,
            mean_std: std / n,
            mean_gate: gate / n,
            evaluated,
            failures,
        });
    }
    Ok(rows)
}

pub fn write_length_csv(path: &Path, rows: &[LengthRow]) -> Result<()> {
    let table = Array2::from_shape_fn((rows.len(), 6), |(i, c)| {
        let r = &rows[i];
        match c {
            0 => r.length,
            1 => r.rmse,
            2 => r.mean_std,
            3 => r.mean_gate,
            4 => r.evaluated as f64,
            _ => r.failures as f64,
        }
    });
    write_csv(
        path,
        &[
            "length",
            "rmse",
            "mean_std",
            "mean_gate",
            "evaluated",
            "failures",
        ],
        &table,
    )
}

fn field_table(
    grid: &Array2<f64>,
    rows: &[usize],
    pred: &FieldPrediction,
    reference: Option<&Array1<f64>>,
) -> Array2<f64> {
    let cols = if reference.is_some() { 5 } else { 4 };
    Array2::from_shape_fn((rows.len(), cols), |(r, c)| {
        let k = rows[r];
        match c {
            0 => grid[[k, 0]],
            1 => grid[[k, 1]],
            2 => pred.mean[k],
            3 => pred.std[k],
            _ => reference.unwrap()[k],
        }
    })
}

fn field_header(reference: bool) -> Vec<&'static str> {
    let mut h = vec!["x", "t", "mean", "std"];
    if reference {
        h.push("reference");
    }
    h
}

fn check_field(
    grid: &Array2<f64>,
    pred: &FieldPrediction,
    reference: Option<&Array1<f64>>,
) -> Result<()> {
    let p = grid.nrows();
    if grid.ncols() != 2 || pred.mean.len() != p || pred.std.len() != p {
        return Err(Error::shape(
            format!("{p} points of (x, t)"),
            format!("{} means, {} stds", pred.mean.len(), pred.std.len()),
        ));
    }
    if let Some(r) = reference.filter(|r| r.len() != p) {
        return Err(Error::shape(format!("{p} reference values"), r.len()));
    }
    Ok(())
}

/// Writes `x, t, mean, std[, reference]` for every grid point.
pub fn write_field_csv(
    path: &Path,
    grid: &Array2<f64>,
    pred: &FieldPrediction,
    reference: Option<&Array1<f64>>,
) -> Result<()> {
    check_field(grid, pred, reference)?;
    let rows: Vec<usize> = (0..grid.nrows()).collect();
    write_csv(
        path,
        &field_header(reference.is_some()),
        &field_table(grid, &rows, pred, reference),
    )
}

/// Writes the grid rows whose time is nearest each of [`CUT_TIMES`].
pub fn write_cuts_csv(
    path: &Path,
    pde: &PdeConfig,
    pred: &FieldPrediction,
    reference: Option<&Array1<f64>>,
) -> Result<()> {
    let grid = query_grid(pde);
    check_field(&grid, pred, reference)?;
    let mut rows = Vec::new();
    for t in CUT_TIMES {
        let j = ((t / pde.dt()).round() as usize).min(pde.nt - 1);
        rows.extend((0..pde.nx).map(|i| i * pde.nt + j));
    }
    write_csv(
        path,
        &field_header(reference.is_some()),
        &field_table(&grid, &rows, pred, reference),
    )
}
