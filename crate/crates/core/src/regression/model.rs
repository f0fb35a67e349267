use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::datagen::RegressionData;
use crate::flows::{FitConfig, GinModel};
use crate::ibcore::{mixup_batch, IbConfig, IbModel, IbTerms, MixupConfig, PredictiveDistribution};
use crate::netcore::checkpoint::format_f64_list;
use crate::netcore::{AdamState, LrSchedule, Manifest, SeededRng};
use crate::{Error, Result};

/// Draws averaged when evaluating the final objective components.
const FINAL_EVAL_DRAWS: usize = 16;

/// Per-column affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    /// Population statistics of `x`; constant columns keep unit scale.
    pub fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty data");
        let std = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }

    pub fn invert(&self, x: &Array2<f64>) -> Array2<f64> {
        x * &self.std + &self.mean
    }

    fn write(&self, m: &mut Manifest, prefix: &str) {
        m.set(
            format!("{prefix}.mean"),
            format_f64_list(self.mean.as_slice().unwrap()),
        );
        m.set(
            format!("{prefix}.std"),
            format_f64_list(self.std.as_slice().unwrap()),
        );
    }

    fn read(m: &Manifest, prefix: &str, path: &Path) -> Result<Self> {
        let mean = Array1::from(m.parse_list(&format!("{prefix}.mean"), path)?);
        let std = Array1::from(m.parse_list(&format!("{prefix}.std"), path)?);
        if mean.len() != std.len() {
            return Err(Error::format(path, format!("{prefix}: length mismatch")));
        }
        Ok(Self { mean, std })
    }
}

/// Training settings; [`RegressionConfig::new`] gives the benchmark defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    pub ib: IbConfig,
    pub iterations: usize,
    pub batch_size: usize,
    /// Size of the tempered GIN batch used in the compression term;
    /// `None` matches the effective mini-batch size `min(N, batch_size)`.
    pub wide_batch: Option<usize>,
    pub schedule: LrSchedule,
    pub tau: f64,
    pub mixup: MixupConfig,
    pub gin_fit: FitConfig,
    pub standardize_targets: bool,
    pub seed: u64,
}

impl RegressionConfig {
    /// 5000 Adam iterations at lr 1e-3 decayed ×0.1 every 1000, batch 256,
    /// τ = 16, d_z = 20, β = 0.3, mixup α = 0.005.
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            ib: IbConfig::regression(input_dim, output_dim),
            iterations: 5000,
            batch_size: 256,
            wide_batch: None,
            schedule: LrSchedule::new(1e-3, 0.1, 1000),
            tau: 16.0,
            mixup: MixupConfig {
                enabled: true,
                alpha: 0.005,
            },
            gin_fit: FitConfig::gin_regression(seed.wrapping_add(2)),
            standardize_targets: true,
            seed,
        }
    }

    /// Same settings with `seed` driving every random choice.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.gin_fit.seed = seed.wrapping_add(2);
        self
    }

    /// Wide-batch size for a training set of `n` rows.
    pub fn wide_size(&self, n: usize) -> usize {
        self.wide_batch.unwrap_or(n.min(self.batch_size))
    }

    pub fn validate(&self) -> Result<()> {
        self.ib.validate()?;
        if self.batch_size == 0 || self.wide_batch == Some(0) {
            return Err(Error::InvalidParameter(
                "batch sizes must be positive".into(),
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if self.mixup.enabled && !(self.mixup.alpha > 0.0 && self.mixup.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mixup alpha must be positive, got {}",
                self.mixup.alpha
            )));
        }
        Ok(())
    }

    pub fn write_manifest(&self, m: &mut Manifest) {
        self.ib.write_manifest(m);
        m.set("reg.iterations", self.iterations);
        m.set("reg.batch_size", self.batch_size);
        m.set(
            "reg.wide_batch",
            self.wide_batch
                .map_or("auto".to_string(), |w| w.to_string()),
        );
        write_schedule(m, "reg.lr", &self.schedule);
        m.set("reg.tau", self.tau);
        m.set("reg.mixup", self.mixup.enabled);
        m.set("reg.mixup_alpha", self.mixup.alpha);
        m.set("reg.gin.iterations", self.gin_fit.iterations);
        m.set("reg.gin.batch_size", self.gin_fit.batch_size);
        write_schedule(m, "reg.gin.lr", &self.gin_fit.schedule);
        m.set("reg.gin.seed", self.gin_fit.seed);
        m.set("reg.standardize_targets", self.standardize_targets);
        m.set("reg.seed", self.seed);
    }

    pub fn read_manifest(m: &Manifest, path: &Path) -> Result<Self> {
        Ok(Self {
            ib: IbConfig::read_manifest(m, path)?,
            iterations: m.parse_key("reg.iterations", path)?,
            batch_size: m.parse_key("reg.batch_size", path)?,
            wide_batch: match m.get("reg.wide_batch") {
                Some("auto") => None,
                _ => Some(m.parse_key("reg.wide_batch", path)?),
            },
            schedule: read_schedule(m, "reg.lr", path)?,
            tau: m.parse_key("reg.tau", path)?,
            mixup: MixupConfig {
                enabled: m.parse_key("reg.mixup", path)?,
                alpha: m.parse_key("reg.mixup_alpha", path)?,
            },
            gin_fit: FitConfig {
                iterations: m.parse_key("reg.gin.iterations", path)?,
                batch_size: m.parse_key("reg.gin.batch_size", path)?,
                schedule: read_schedule(m, "reg.gin.lr", path)?,
                seed: m.parse_key("reg.gin.seed", path)?,
            },
            standardize_targets: m.parse_key("reg.standardize_targets", path)?,
            seed: m.parse_key("reg.seed", path)?,
        })
    }
}

pub(crate) fn write_schedule(m: &mut Manifest, prefix: &str, s: &LrSchedule) {
    m.set(format!("{prefix}.base"), s.base_lr);
    m.set(format!("{prefix}.decay_factor"), s.decay_factor);
    m.set(format!("{prefix}.decay_every"), s.decay_every);
}

pub(crate) fn read_schedule(m: &Manifest, prefix: &str, path: &Path) -> Result<LrSchedule> {
    let s = LrSchedule {
        base_lr: m.parse_key(&format!("{prefix}.base"), path)?,
        decay_factor: m.parse_key(&format!("{prefix}.decay_factor"), path)?,
        decay_every: m.parse_key(&format!("{prefix}.decay_every"), path)?,
    };
    if !(s.base_lr > 0.0 && s.decay_factor > 0.0 && s.decay_factor <= 1.0 && s.decay_every > 0) {
        return Err(Error::format(path, format!("invalid schedule {prefix}")));
    }
    Ok(s)
}

/// One logged optimizer step; the terms are evaluated before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub objective: f64,
    pub iyz: f64,
    pub ixz: f64,
    pub lr: f64,
}

/// Trained IB model, its input GIN, and the data scalings.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub ib: IbModel,
    pub gin: GinModel,
    pub x_scale: Standardizer,
    pub y_scale: Standardizer,
    pub config: RegressionConfig,
}

impl RegressionModel {
    pub fn input_dim(&self) -> usize {
        self.x_scale.dim()
    }

    /// Predictive mean and std on the original target scale. The gate is
    /// reported per latent coordinate.
    pub fn predict(
        &self,
        x: &Array2<f64>,
        samples: usize,
        rng: &mut SeededRng,
    ) -> Result<PredictiveDistribution> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                x.ncols(),
            ));
        }
        let p = self.ib.predict(&self.x_scale.apply(x), samples, rng)?;
        Ok(PredictiveDistribution {
            mean: self.y_scale.invert(&p.mean),
            std: &p.std * &self.y_scale.std,
            gate: p.gate,
            n_samples: p.n_samples,
        })
    }

    /// Objective components on the (standardized) training data, averaged
    /// over several noise and wide-batch draws.
    pub fn evaluate_terms(&self, data: &RegressionData, rng: &mut SeededRng) -> Result<IbTerms> {
        let x = self.x_scale.apply(&data.x);
        let y = self.y_scale.apply(&data.y);
        let mut sum = IbTerms {
            objective: 0.0,
            iyz: 0.0,
            ixz: 0.0,
        };
        for _ in 0..FINAL_EVAL_DRAWS {
            let wide = self
                .gin
                .sample(self.config.wide_size(x.nrows()), self.config.tau, rng)?;
            let t = self.ib.ib_loss(&x, &y, &wide, rng)?;
            sum.objective += t.objective;
            sum.iyz += t.iyz;
            sum.ixz += t.ixz;
        }
        let n = FINAL_EVAL_DRAWS as f64;
        Ok(IbTerms {
            objective: sum.objective / n,
            iyz: sum.iyz / n,
            ixz: sum.ixz / n,
        })
    }

    /// Writes `ib/` and `gin/` checkpoint directories under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut m = Manifest::new();
        m.set("type", "ibuq-regression");
        self.config.write_manifest(&mut m);
        self.x_scale.write(&mut m, "scale.x");
        self.y_scale.write(&mut m, "scale.y");
        self.ib.save(&dir.join("ib"), &m)?;
        self.gin.save(&dir.join("gin"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (ib, m) = IbModel::load(&dir.join("ib"))?;
        let path = dir.join("ib").join("manifest.txt");
        if m.get("type") != Some("ibuq-regression") {
            return Err(Error::format(&path, "not a regression checkpoint"));
        }
        let config = RegressionConfig::read_manifest(&m, &path)?;
        let x_scale = Standardizer::read(&m, "scale.x", &path)?;
        let y_scale = Standardizer::read(&m, "scale.y", &path)?;
        let gin = GinModel::load(&dir.join("gin"))?;
        if x_scale.dim() != config.ib.input_dim || gin.data_dim() != config.ib.input_dim {
            return Err(Error::format(&path, "input dimensions disagree"));
        }
        Ok(Self {
            ib,
            gin,
            x_scale,
            y_scale,
            config,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedRegression {
    pub model: RegressionModel,
    pub trace: Vec<TrainRecord>,
    pub gin_trace: Vec<f64>,
    /// Averaged objective components after the last update.
    pub final_terms: IbTerms,
}

pub fn train_regression(
    data: &RegressionData,
    cfg: &RegressionConfig,
) -> Result<TrainedRegression> {
    train_regression_with(data, cfg, &mut |_| {})
}

/// Fits the input GIN, then runs Adam ascent on the IB objective for a
/// fixed number of iterations. `observe` sees every record as it is made,
/// so callers can persist partial traces if training aborts.
pub fn train_regression_with(
    data: &RegressionData,
    cfg: &RegressionConfig,
    observe: &mut dyn FnMut(&TrainRecord),
) -> Result<TrainedRegression> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::EmptyData(format!(
            "training needs at least 2 samples, got {}",
            data.len()
        )));
    }
    if data.x.ncols() != cfg.ib.input_dim || data.y.ncols() != cfg.ib.output_dim {
        return Err(Error::shape(
            format!("{}→{} data", cfg.ib.input_dim, cfg.ib.output_dim),
            format!("{}→{}", data.x.ncols(), data.y.ncols()),
        ));
    }
    let x_scale = Standardizer::fit(&data.x);
    let y_scale = if cfg.standardize_targets {
        Standardizer::fit(&data.y)
    } else {
        Standardizer::identity(data.y.ncols())
    };
    let x = x_scale.apply(&data.x);
    let y = y_scale.apply(&data.y);

    let mut gin = GinModel::new(x.ncols(), cfg.tau, cfg.seed.wrapping_add(1))?;
    let gin_trace = gin
        .fit(&x, &cfg.gin_fit)
        .map_err(|e| e.context("fitting input GIN"))?;

    let mut ib = IbModel::new(cfg.ib.clone(), cfg.seed)?;
    let mut adam = AdamState::new(&ib.store);
    let mut rng = SeededRng::with_stream(cfg.seed, 3);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let lr = cfg.schedule.lr_at(it);
        let rows = rng.batch_indices(x.nrows(), cfg.batch_size);
        let (xb, yb) = mixup_batch(
            &x.select(Axis(0), &rows),
            &y.select(Axis(0), &rows),
            &cfg.mixup,
            &mut rng,
        )?;
        let wide = gin.sample(cfg.wide_size(x.nrows()), cfg.tau, &mut rng)?;
        let (terms, grads) = ib
            .ib_gradient(&xb, &yb, &wide, &mut rng)
            .map_err(|e| e.context(format!("iteration {it}")))?;
        let record = TrainRecord {
            iteration: it,
            objective: terms.objective,
            iyz: terms.iyz,
            ixz: terms.ixz,
            lr,
        };
        observe(&record);
        trace.push(record);
        adam.step(&mut ib.store, &grads, lr)
            .map_err(|e| e.context(format!("iteration {it}")))?;
    }
    let model = RegressionModel {
        ib,
        gin,
        x_scale,
        y_scale,
        config: cfg.clone(),
    };
    let final_terms = model.evaluate_terms(data, &mut SeededRng::with_stream(cfg.seed, 4))?;
    Ok(TrainedRegression {
        model,
        trace,
        gin_trace,
        final_terms,
    })
}
