use std::path::Path;

use ibuq::baselines::{ensemble_predict, DeepEnsemble};
use ibuq::datagen::{
    build_operator_dataset, evaluation_grid, write_csv, Band, OperatorDataConfig, PdeConfig,
};
use ibuq::netcore::SeededRng;
use ibuq::operator::{
    predict_field, rmse_by_length, write_cuts_csv, write_field_csv, write_length_csv,
    LengthStudyConfig, OperatorModel,
};
use ibuq::regression::{BenchmarkReport, RegressionModel};
use ndarray::{concatenate, Array1, Array2, Axis};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::gen_data::{band_file, ID_TEST_FILE};
use crate::train::{detect_checkpoint, model_dir, read_regression_data, Checkpoint};

pub const REPORT_FILE: &str = "report.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const BANDS_FILE: &str = "bands.csv";
pub const LENGTHS_FILE: &str = "lengths.csv";
pub const FIELD_FILE: &str = "field.csv";
pub const CUTS_FILE: &str = "cuts.csv";
pub const INPUT_FILE: &str = "field_input.csv";

/// Pointwise predictive mean and spread, plus the gate when the model has one.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    pub gate: Option<Array1<f64>>,
}

pub trait Predictor {
    fn predict(&self, x: &Array2<f64>, rng: &mut SeededRng) -> CliResult<Prediction>;
}

pub struct IbuqPredictor {
    pub model: RegressionModel,
    pub samples: usize,
}

impl Predictor for IbuqPredictor {
    fn predict(&self, x: &Array2<f64>, rng: &mut SeededRng) -> CliResult<Prediction> {
        let p = self.model.predict(x, self.samples, rng)?;
        let gate = Some(p.mean_gate());
        Ok(Prediction {
            mean: p.mean,
            std: p.std,
            gate,
        })
    }
}

impl Predictor for DeepEnsemble {
    fn predict(&self, x: &Array2<f64>, _: &mut SeededRng) -> CliResult<Prediction> {
        let (mean, std) = ensemble_predict(self, x)?;
        Ok(Prediction {
            mean,
            std,
            gate: None,
        })
    }
}

fn load_predictor(dir: &Path, samples: usize) -> CliResult<Box<dyn Predictor>> {
    if !dir.exists() {
        return Err(CliError::usage(format!("{} does not exist", dir.display())));
    }
    let path = model_dir(dir);
    match detect_checkpoint(dir)? {
        Checkpoint::Regression => Ok(Box::new(IbuqPredictor {
            model: RegressionModel::load(&path)?,
            samples,
        })),
        Checkpoint::Ensemble => Ok(Box::new(DeepEnsemble::load(&path)?)),
        Checkpoint::Operator => Err(CliError::usage(format!(
            "{} holds an operator model; use `eval operator`",
            dir.display()
        ))),
    }
}

fn positive_samples(c: &RunConfig) -> CliResult<usize> {
    let s: usize = c.get("samples")?;
    if s == 0 {
        return Err(CliError::usage("`samples` must be positive"));
    }
    Ok(s)
}

/// Scores `predictor` on the discontinuous benchmark grid and writes the
/// report and the pointwise predictions into `out`.
pub fn table1_with(
    predictor: &dyn Predictor,
    n_grid: usize,
    seed: u64,
    out: &Path,
) -> CliResult<BenchmarkReport> {
    let grid = evaluation_grid(n_grid);
    let p = predictor.predict(&grid.x, &mut SeededRng::new(seed))?;
    if p.mean.ncols() != 1 {
        return Err(CliError::usage("the benchmark needs a scalar-output model"));
    }
    let report = BenchmarkReport::from_predictions(
        grid.x.column(0),
        grid.y.column(0),
        p.mean.column(0),
        p.std.column(0),
        p.gate.as_ref().map(|g| g.view()),
    )?;
    let row = [
        report.id_rl2e,
        report.ood_rl2e,
        report.id_mean_std,
        report.ood_mean_std,
        report.id_mean_gate,
        report.ood_mean_gate,
    ];
    write_csv(
        &out.join(REPORT_FILE),
        &[
            "id_rl2e",
            "ood_rl2e",
            "id_mean_std",
            "ood_mean_std",
            "id_mean_gate",
            "ood_mean_gate",
        ],
        &Array2::from_shape_vec((1, 6), row.to_vec()).unwrap(),
    )?;
    let mut header = vec!["x", "truth", "mean", "std"];
    let mut cols = vec![grid.x.view(), grid.y.view(), p.mean.view(), p.std.view()];
    let gate = p.gate.map(|g| g.insert_axis(Axis(1)));
    if let Some(g) = &gate {
        header.push("gate");
        cols.push(g.view());
    }
    write_csv(
        &out.join(PREDICTIONS_FILE),
        &header,
        &concatenate(Axis(1), &cols).unwrap(),
    )?;
    Ok(report)
}

pub fn table1(c: &RunConfig) -> CliResult<()> {
    let predictor = load_predictor(&c.path("model"), positive_samples(c)?)?;
    let n_grid: usize = c.get("grid")?;
    if n_grid < 3 {
        return Err(CliError::usage("`grid` needs at least 3 points"));
    }
    let out = c.path("out");
    c.write(&out)?;
    let r = table1_with(predictor.as_ref(), n_grid, c.get("seed")?, &out)?;
    println!(
        "RL2E id {:.4}, ood {:.4}; mean std id {:.4}, ood {:.4}",
        r.id_rl2e, r.ood_rl2e, r.id_mean_std, r.ood_mean_std
    );
    Ok(())
}

/// Per-band error and spread on a housing split directory.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub band: Band,
    pub n: usize,
    pub mae: f64,
    pub mean_std: f64,
    pub mean_gate: f64,
}

pub fn housing_with(predictor: &dyn Predictor, split: &Path, seed: u64) -> CliResult<Vec<BandRow>> {
    let mut rows = Vec::with_capacity(4);
    for (b, band) in Band::ALL.into_iter().enumerate() {
        let file = match band {
            Band::Id => split.join(ID_TEST_FILE),
            _ => split.join(band_file(band)),
        };
        let data = read_regression_data(&file, 1)?;
        if data.is_empty() {
            return Err(CliError::usage(format!("{} has no rows", file.display())));
        }
        let mut rng = SeededRng::with_stream(seed, b as u64);
        let p = predictor.predict(&data.x, &mut rng)?;
        let mae = (&p.mean - &data.y).mapv(f64::abs).mean().unwrap();
        rows.push(BandRow {
            band,
            n: data.len(),
            mae,
            mean_std: p.std.mean().unwrap(),
            mean_gate: p.gate.map_or(f64::NAN, |g| g.mean().unwrap()),
        });
    }
    Ok(rows)
}

pub fn housing(c: &RunConfig) -> CliResult<()> {
    let predictor = load_predictor(&c.path("model"), positive_samples(c)?)?;
    let split = c.path("split");
    let out = c.path("out");
    c.write(&out)?;
    let rows = housing_with(predictor.as_ref(), &split, c.get("seed")?)?;
    let table = Array2::from_shape_fn((rows.len(), 5), |(i, k)| {
        let r = &rows[i];
        match k {
            0 => i as f64,
            1 => r.n as f64,
            2 => r.mae,
            3 => r.mean_std,
            _ => r.mean_gate,
        }
    });
    write_csv(
        &out.join(BANDS_FILE),
        &["band", "n", "mae", "mean_std", "mean_gate"],
        &table,
    )?;
    for r in &rows {
        println!(
            "{:<10} n {:>6}  MAE {:.4}  mean std {:.4}",
            r.band.name(),
            r.n,
            r.mae,
            r.mean_std
        );
    }
    Ok(())
}

pub fn operator(c: &RunConfig) -> CliResult<()> {
    let dir = c.path("model");
    if detect_checkpoint(&dir)? != Checkpoint::Operator {
        return Err(CliError::usage(format!(
            "{} does not hold an operator model",
            dir.display()
        )));
    }
    let model = OperatorModel::load(&model_dir(&dir))?;
    let seed: u64 = c.get("seed")?;
    let pde = PdeConfig {
        nx: model.ib.config().sensors,
        ..PdeConfig::default()
    };
    let study = LengthStudyConfig {
        test_noise: c.get("test_noise")?,
        samples: positive_samples(c)?,
        pde: pde.clone(),
        ..LengthStudyConfig::new(c.list("lengths")?, c.get("n_inputs")?, seed)
    };
    let out = c.path("out");
    c.write(&out)?;
    let rows = rmse_by_length(&model, &study)?;
    write_length_csv(&out.join(LENGTHS_FILE), &rows)?;
    for r in &rows {
        println!(
            "l = {:<5} RMSE {:.4}  mean std {:.4}  gate {:.4}  ({} failed)",
            r.length, r.rmse, r.mean_std, r.mean_gate, r.failures
        );
    }

    if let Some(length) = c.optional::<f64>("field_length")? {
        let cfg = OperatorDataConfig {
            pde: pde.clone(),
            ..OperatorDataConfig::new(1, length, 0.0)
        };
        let data = build_operator_dataset(&cfg, seed)?;
        let grid = data.query_grid();
        let reference: Array1<f64> = data
            .s_clean
            .index_axis(Axis(0), 0)
            .iter()
            .copied()
            .collect();
        let u = data.u.row(0).to_vec();
        let pred = predict_field(&model, &u, &grid, study.samples, &mut SeededRng::new(seed))?;
        write_field_csv(&out.join(FIELD_FILE), &grid, &pred, Some(&reference))?;
        write_cuts_csv(&out.join(CUTS_FILE), &pde, &pred, Some(&reference))?;
        let xs = pde.x_grid();
        let input = Array2::from_shape_fn((u.len(), 2), |(i, k)| if k == 0 { xs[i] } else { u[i] });
        write_csv(&out.join(INPUT_FILE), &["x", "u"], &input)?;
    }
    Ok(())
}
