use nalgebra::{Cholesky, DMatrix};
use ndarray::Array1;

use crate::netcore::SeededRng;
use crate::{Error, Result};

const MAX_JITTER: f64 = 1e-6;

/// Zero-mean Gaussian random field with squared-exponential kernel
/// `k(a, b) = exp(−|a − b|² / (2 l²))` on a fixed 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GrfConfig {
    pub length: f64,
    pub grid: Vec<f64>,
    /// Initial diagonal jitter; raised ×10 on factorization failure.
    pub jitter: f64,
}

impl GrfConfig {
    /// `m` equispaced sensors on `[0, 1]`.
    pub fn unit_interval(length: f64, m: usize) -> Self {
        Self {
            length,
            grid: Array1::linspace(0.0, 1.0, m).to_vec(),
            jitter: 1e-10,
        }
    }
}

pub fn rbf_kernel(a: f64, b: f64, length: f64) -> f64 {
    (-(a - b).powi(2) / (2.0 * length * length)).exp()
}

/// Factorized covariance, reusable across draws.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl GrfSampler {
    pub fn new(cfg: &GrfConfig) -> Result<Self> {
        if !(cfg.length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "correlation length must be positive, got {}",
                cfg.length
            )));
        }
        if cfg.grid.is_empty() {
            return Err(Error::EmptyData("GRF grid is empty".into()));
        }
        let m = cfg.grid.len();
        let k = DMatrix::from_fn(m, m, |i, j| {
            rbf_kernel(cfg.grid[i], cfg.grid[j], cfg.length)
        });
        let mut jitter = cfg.jitter.max(f64::MIN_POSITIVE);
        loop {
            let mut kj = k.clone();
            for i in 0..m {
                kj[(i, i)] += jitter;
            }
            if let Some(ch) = Cholesky::new(kj) {
                if jitter > cfg.jitter {
                    log::debug!("GRF factorization needed jitter {jitter:e}");
                }
                return Ok(Self {
                    lower: ch.l(),
                    jitter,
                });
            }
            if jitter >= MAX_JITTER {
                return Err(Error::Factorization(format!(
                    "covariance for l = {} not positive definite with jitter {jitter:e}",
                    cfg.length
                )));
            }
            jitter = (jitter * 10.0).min(MAX_JITTER);
        }
    }

    /// Jitter actually used by the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Vec<f64> {
        let m = self.lower.nrows();
        let xi = nalgebra::DVector::from_fn(m, |_, _| rng.normal());
        (&self.lower * xi).iter().copied().collect()
    }
}

/// One draw from `N(0, K + jitter·I)`.
pub fn grf_sample(cfg: &GrfConfig, rng: &mut SeededRng) -> Result<Vec<f64>> {
    Ok(GrfSampler::new(cfg)?.sample(rng))
}
