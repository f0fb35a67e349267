use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};

use super::grf::{GrfConfig, GrfSampler};
use super::pde::{solve_diffusion_reaction, PdeConfig};
use crate::netcore::checkpoint::{read_f64_block, write_f64_block};
use crate::netcore::{Manifest, SeededRng};
use crate::{Error, Result};

/// Settings for generating input/output function pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorDataConfig {
    pub n_functions: usize,
    pub length: f64,
    /// Std of Gaussian noise added to the stored `s` fields.
    pub noise_std: f64,
    /// Also add noise to the sensor values `u`.
    pub sensor_noise: bool,
    pub pde: PdeConfig,
}

impl OperatorDataConfig {
    pub fn new(n_functions: usize, length: f64, noise_std: f64) -> Self {
        Self {
            n_functions,
            length,
            noise_std,
            sensor_noise: false,
            pde: PdeConfig::default(),
        }
    }
}

/// Sensor inputs and solution fields on the full space-time grid.
///
/// Function `i` is generated from stream `i` of `seed`, so any single pair
/// can be regenerated from `(seed, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorDataset {
    pub config: OperatorDataConfig,
    pub seed: u64,
    /// `N × m` sensor values (the spatial grid).
    pub u: Array2<f64>,
    /// `N × nx × nt` noise-free solutions.
    pub s_clean: Array3<f64>,
    /// `N × nx × nt` stored (noisy) solutions.
    pub s: Array3<f64>,
}

impl OperatorDataset {
    pub fn len(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.u.nrows() == 0
    }

    pub fn sensors(&self) -> Vec<f64> {
        self.config.pde.x_grid().to_vec()
    }

    /// Query locations `(x, t)` in row-major order `k = i·nt + j`.
    pub fn query_grid(&self) -> Array2<f64> {
        query_grid(&self.config.pde)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = &self.config;
        let mut m = Manifest::new();
        m.set("type", "operator");
        m.set("format_version", 1);
        m.set("n_functions", c.n_functions);
        m.set("length", format!("{:e}", c.length));
        m.set("noise_std", format!("{:e}", c.noise_std));
        m.set("sensor_noise", c.sensor_noise);
        m.set("seed", self.seed);
        m.set("diffusion", format!("{:e}", c.pde.diffusion));
        m.set("reaction", format!("{:e}", c.pde.reaction));
        m.set("nx", c.pde.nx);
        m.set("nt", c.pde.nt);
        m.set("t_final", format!("{:e}", c.pde.t_final));
        m.set("newton_tol", format!("{:e}", c.pde.newton_tol));
        m.set("newton_max_iters", c.pde.newton_max_iters);
        m.set(
            "blocks",
            "u.f64 (N x nx), s.f64 (N x nx x nt), s_clean.f64 (N x nx x nt)",
        );
        write_f64_block(&dir.join("u.f64"), self.u.iter().copied())?;
        write_f64_block(&dir.join("s.f64"), self.s.iter().copied())?;
        write_f64_block(&dir.join("s_clean.f64"), self.s_clean.iter().copied())?;
        m.write(&dir.join("manifest.txt"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let m = Manifest::read(&path)?;
        if m.get("type") != Some("operator") {
            return Err(Error::format(&path, "not an operator dataset"));
        }
        let pde = PdeConfig {
            diffusion: m.parse_key("diffusion", &path)?,
            reaction: m.parse_key("reaction", &path)?,
            nx: m.parse_key("nx", &path)?,
            nt: m.parse_key("nt", &path)?,
            t_final: m.parse_key("t_final", &path)?,
            newton_tol: m.parse_key("newton_tol", &path)?,
            newton_max_iters: m.parse_key("newton_max_iters", &path)?,
        };
        let config = OperatorDataConfig {
            n_functions: m.parse_key("n_functions", &path)?,
            length: m.parse_key("length", &path)?,
            noise_std: m.parse_key("noise_std", &path)?,
            sensor_noise: m.parse_key("sensor_noise", &path)?,
            pde,
        };
        let (n, nx, nt) = (config.n_functions, config.pde.nx, config.pde.nt);
        let block2 = |name: &str| -> Result<Array2<f64>> {
            let p = dir.join(name);
            Array2::from_shape_vec((n, nx), read_f64_block(&p)?)
                .map_err(|_| Error::format(&p, "wrong length"))
        };
        let block3 = |name: &str| -> Result<Array3<f64>> {
            let p = dir.join(name);
            Array3::from_shape_vec((n, nx, nt), read_f64_block(&p)?)
                .map_err(|_| Error::format(&p, "wrong length"))
        };
        Ok(Self {
            seed: m.parse_key("seed", &path)?,
            u: block2("u.f64")?,
            s: block3("s.f64")?,
            s_clean: block3("s_clean.f64")?,
            config,
        })
    }
}

pub(crate) fn query_grid(pde: &PdeConfig) -> Array2<f64> {
    let xs = pde.x_grid();
    let ts = pde.t_grid();
    Array2::from_shape_fn((pde.nx * pde.nt, 2), |(k, c)| {
        if c == 0 {
            xs[k / pde.nt]
        } else {
            ts[k % pde.nt]
        }
    })
}

/// One GRF input, its clean solution, and the noisy copies.
pub(crate) struct OperatorPair {
    pub u: Vec<f64>,
    pub s_clean: Array2<f64>,
    pub s: Array2<f64>,
}

pub(crate) fn generate_pair(
    sampler: &GrfSampler,
    cfg: &OperatorDataConfig,
    rng: &mut SeededRng,
) -> Result<OperatorPair> {
    let u_clean = sampler.sample(rng);
    let s_clean = solve_diffusion_reaction(&u_clean, &cfg.pde)?;
    let s = s_clean.mapv(|v| v + cfg.noise_std * rng.normal());
    let u = if cfg.sensor_noise {
        u_clean
            .iter()
            .map(|v| v + cfg.noise_std * rng.normal())
            .collect()
    } else {
        u_clean.clone()
    };
    Ok(OperatorPair { u, s_clean, s })
}

/// `N` GRF inputs at correlation length `l`, each solved on the full grid.
pub fn build_operator_dataset(cfg: &OperatorDataConfig, seed: u64) -> Result<OperatorDataset> {
    if cfg.n_functions == 0 {
        return Err(Error::EmptyData(
            "operator dataset needs at least one function".into(),
        ));
    }
    if !(cfg.noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise std must be non-negative, got {}",
            cfg.noise_std
        )));
    }
    let (nx, nt) = (cfg.pde.nx, cfg.pde.nt);
    let sampler = GrfSampler::new(&GrfConfig::unit_interval(cfg.length, nx))?;
    let mut u = Array2::zeros((cfg.n_functions, nx));
    let mut s = Array3::zeros((cfg.n_functions, nx, nt));
    let mut s_clean = Array3::zeros((cfg.n_functions, nx, nt));
    for i in 0..cfg.n_functions {
        let mut rng = SeededRng::with_stream(seed, i as u64);
        let pair = generate_pair(&sampler, cfg, &mut rng)
            .map_err(|e| e.context(format!("function {i}")))?;
        u.row_mut(i).assign(&ndarray::ArrayView1::from(&pair.u));
        s.index_axis_mut(Axis(0), i).assign(&pair.s);
        s_clean.index_axis_mut(Axis(0), i).assign(&pair.s_clean);
    }
    Ok(OperatorDataset {
        config: cfg.clone(),
        seed,
        u,
        s_clean,
        s,
    })
}
