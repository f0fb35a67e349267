use std::path::Path;

use ndarray::{s, Array1, Array2};

use super::realnvp::{fit_density, pad_columns, DensityModel, FitConfig, FlowConfig};
use crate::netcore::checkpoint::format_f64_list;
use crate::netcore::{Manifest, SeededRng};
use crate::{Error, Result};

/// Volume-preserving flow used to draw wide, tempered input samples.
///
/// One-dimensional inputs cannot be split by a coupling layer, so `pad_dims`
/// standard-normal channels are appended during fitting and dropped again
/// after sampling.
#[derive(Debug, Clone)]
pub struct GinModel {
    pub density: DensityModel,
    data_dim: usize,
    pad_dims: usize,
    tau: f64,
}

impl GinModel {
    /// Default architecture for `data_dim`-dimensional inputs with sampling
    /// temperature `tau`.
    pub fn new(data_dim: usize, tau: f64, seed: u64) -> Result<Self> {
        let pad_dims = usize::from(data_dim < 2);
        Self::with_config(FlowConfig::gin(data_dim + pad_dims), data_dim, tau, seed)
    }

    pub fn with_config(config: FlowConfig, data_dim: usize, tau: f64, seed: u64) -> Result<Self> {
        if data_dim == 0 || config.dim < data_dim || config.dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "flow dimension {} cannot model {data_dim}-dimensional data",
                config.dim
            )));
        }
        if !config.volume_preserving {
            return Err(Error::InvalidParameter(
                "GIN layers must be volume-preserving".into(),
            ));
        }
        check_tau(tau)?;
        let pad_dims = config.dim - data_dim;
        Ok(Self {
            density: DensityModel::new(config, seed),
            data_dim,
            pad_dims,
            tau,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn pad_dims(&self) -> usize {
        self.pad_dims
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Learned base covariance diagonal Σ_z.
    pub fn sigma_z(&self) -> Vec<f64> {
        self.density.flow.base_variances(&self.density.store)
    }

    /// Maximum-likelihood fit; fresh pad noise is drawn for every batch.
    pub fn fit(&mut self, data: &Array2<f64>, cfg: &FitConfig) -> Result<Vec<f64>> {
        let flow = self.density.flow.clone();
        fit_density(&mut self.density.store, &flow, data, self.pad_dims, cfg)
    }

    /// `n` samples at temperature `tau`, pad channels removed.
    pub fn sample(&self, n: usize, tau: f64, rng: &mut SeededRng) -> Result<Array2<f64>> {
        check_tau(tau)?;
        let x = self
            .density
            .flow
            .sample_batch(&self.density.store, n, tau, rng)?;
        Ok(x.slice(s![.., ..self.data_dim]).to_owned())
    }

    /// `n` samples at the model's own temperature.
    pub fn sample_tempered(&self, n: usize, rng: &mut SeededRng) -> Result<Array2<f64>> {
        self.sample(n, self.tau, rng)
    }

    /// Per-sample log-determinant of the full map on padded points.
    pub fn logdet(&self, data: &Array2<f64>, rng: &mut SeededRng) -> Result<Array1<f64>> {
        self.check_data(data)?;
        let padded = pad_columns(data, self.pad_dims, rng);
        Ok(self
            .density
            .flow
            .inverse_batch(&self.density.store, &padded)?
            .1)
    }

    fn check_data(&self, data: &Array2<f64>) -> Result<()> {
        if data.ncols() != self.data_dim {
            return Err(Error::shape(
                format!("{} columns", self.data_dim),
                data.ncols(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut m = Manifest::new();
        m.set("kind", "gin");
        m.set("gin.data_dim", self.data_dim);
        m.set("gin.pad_dims", self.pad_dims);
        m.set("gin.tau", format!("{:e}", self.tau));
        m.set("gin.sigma_z", format_f64_list(&self.sigma_z()));
        self.density.save(dir, &m)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (density, m) = DensityModel::load(dir)?;
        let path = dir.join("manifest.txt");
        let data_dim: usize = m.parse_key("gin.data_dim", &path)?;
        let pad_dims: usize = m.parse_key("gin.pad_dims", &path)?;
        let tau: f64 = m.parse_key("gin.tau", &path)?;
        if data_dim + pad_dims != density.flow.dim() {
            return Err(Error::format(&path, "gin dimensions disagree with flow"));
        }
        Ok(Self {
            density,
            data_dim,
            pad_dims,
            tau,
        })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Fits a GIN to `data` and returns it with the loss trace.
pub fn gin_fit(data: &Array2<f64>, tau: f64, cfg: &FitConfig) -> Result<(GinModel, Vec<f64>)> {
    let mut model = GinModel::new(data.ncols(), tau, cfg.seed)?;
    let trace = model.fit(data, cfg)?;
    Ok((model, trace))
}
