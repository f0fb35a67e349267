use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis};

use super::coupling::{CouplingLayer, CouplingSpec};
use crate::netcore::checkpoint::format_f64_list;
use crate::netcore::{
    gradient, Activation, AdamState, Bound, LrSchedule, Manifest, ParamId, ParamStore, SeededRng,
    Tape, Var,
};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Architecture of a coupling-layer flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub dim: usize,
    pub n_layers: usize,
    /// Hidden widths of every `s`/`t` net.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub scale_bound: f64,
    pub volume_preserving: bool,
}

impl FlowConfig {
    /// Six coupling layers, `s`/`t` nets with one hidden layer of width 256.
    pub fn realnvp(dim: usize) -> Self {
        Self {
            dim,
            n_layers: 6,
            hidden: vec![256],
            activation: Activation::Tanh,
            scale_bound: 5.0,
            volume_preserving: false,
        }
    }

    pub fn gin(dim: usize) -> Self {
        Self {
            volume_preserving: true,
            ..Self::realnvp(dim)
        }
    }

    /// Passive block size: half the dimensions, rounded up.
    pub fn split(&self) -> usize {
        self.dim.div_ceil(2)
    }

    pub fn write_manifest(&self, m: &mut Manifest, prefix: &str) {
        m.set(format!("{prefix}.dim"), self.dim);
        m.set(format!("{prefix}.layers"), self.n_layers);
        m.set(
            format!("{prefix}.hidden"),
            self.hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.set(format!("{prefix}.activation"), self.activation);
        m.set(
            format!("{prefix}.scale_bound"),
            format!("{:e}", self.scale_bound),
        );
        m.set(
            format!("{prefix}.volume_preserving"),
            self.volume_preserving,
        );
        m.set(
            format!("{prefix}.splits"),
            (0..self.n_layers)
                .map(|_| self.split().to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    }

    pub fn read_manifest(m: &Manifest, prefix: &str, path: &Path) -> Result<Self> {
        let hidden_raw: String = m.parse_key(&format!("{prefix}.hidden"), path)?;
        let hidden = hidden_raw
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format(path, format!("bad {prefix}.hidden")))?;
        let act: String = m.parse_key(&format!("{prefix}.activation"), path)?;
        Ok(Self {
            dim: m.parse_key(&format!("{prefix}.dim"), path)?,
            n_layers: m.parse_key(&format!("{prefix}.layers"), path)?,
            hidden,
            activation: act.parse()?,
            scale_bound: m.parse_key(&format!("{prefix}.scale_bound"), path)?,
            volume_preserving: m.parse_key(&format!("{prefix}.volume_preserving"), path)?,
        })
    }
}

/// Stack of coupling layers over a zero-mean diagonal Gaussian base with
/// learnable log-variances. The forward map sends base samples `z` to data
/// `x = f(z)`.
#[derive(Debug, Clone)]
pub struct RealNvpFlow {
    config: FlowConfig,
    layers: Vec<CouplingLayer>,
    base_log_var: ParamId,
}

impl RealNvpFlow {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        config: FlowConfig,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(
            config.dim >= 2,
            "coupling flows need at least two dimensions"
        );
        let layers = (0..config.n_layers)
            .map(|k| {
                let spec = Self::spec(&config, k);
                CouplingLayer::new(store, &format!("{prefix}.layer{k}"), &spec, rng)
            })
            .collect();
        let base_log_var = store.add(
            format!("{prefix}.base_log_var"),
            Array2::zeros((1, config.dim)),
        );
        Self {
            config,
            layers,
            base_log_var,
        }
    }

    pub fn attach(store: &ParamStore, prefix: &str, config: FlowConfig) -> Result<Self> {
        let layers = (0..config.n_layers)
            .map(|k| {
                let spec = Self::spec(&config, k);
                CouplingLayer::attach(store, &format!("{prefix}.layer{k}"), &spec)
            })
            .collect::<Result<Vec<_>>>()?;
        let name = format!("{prefix}.base_log_var");
        let base_log_var = store
            .id(&name)
            .ok_or_else(|| Error::InvalidParameter(format!("missing parameter {name}")))?;
        Ok(Self {
            config,
            layers,
            base_log_var,
        })
    }

    fn spec(config: &FlowConfig, k: usize) -> CouplingSpec<'_> {
        CouplingSpec {
            dim: config.dim,
            split: config.split(),
            parity: k % 2 == 1,
            hidden: &config.hidden,
            activation: config.activation,
            volume_preserving: config.volume_preserving,
            scale_bound: config.scale_bound,
        }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn base_log_var(&self) -> ParamId {
        self.base_log_var
    }

    /// Diagonal of the base covariance.
    pub fn base_variances(&self, store: &ParamStore) -> Vec<f64> {
        store
            .get(self.base_log_var)
            .iter()
            .map(|v| v.exp())
            .collect()
    }

    pub fn forward_var(&self, tape: &Tape, bound: &Bound, z: Var) -> (Var, Var) {
        let mut h = z;
        let mut logdet: Option<Var> = None;
        for layer in &self.layers {
            let (next, ld) = layer.forward_var(tape, bound, h);
            h = next;
            logdet = Some(match logdet {
                Some(acc) => tape.add(acc, ld),
                None => ld,
            });
        }
        let n = tape.shape(z).0;
        (
            h,
            logdet.unwrap_or_else(|| tape.constant(Array2::zeros((n, 1)))),
        )
    }

    pub fn inverse_var(&self, tape: &Tape, bound: &Bound, x: Var) -> (Var, Var) {
        let mut h = x;
        let mut logdet: Option<Var> = None;
        for layer in self.layers.iter().rev() {
            let (next, ld) = layer.inverse_var(tape, bound, h);
            h = next;
            logdet = Some(match logdet {
                Some(acc) => tape.add(acc, ld),
                None => ld,
            });
        }
        let n = tape.shape(x).0;
        (
            h,
            logdet.unwrap_or_else(|| tape.constant(Array2::zeros((n, 1)))),
        )
    }

    /// Base log-density per row (`n×1`).
    pub fn base_log_prob_var(&self, tape: &Tape, bound: &Bound, z: Var) -> Var {
        let phi = bound.var(self.base_log_var);
        let quad = tape.mul(tape.square(z), tape.exp(tape.neg(phi)));
        let per_row = tape.sum_cols(tape.add(quad, phi));
        tape.add_scalar(
            tape.scale(per_row, -0.5),
            -0.5 * self.config.dim as f64 * LN_2PI,
        )
    }

    /// `log p_X(x)` per row (`n×1`): base density at `f⁻¹(x)` plus the
    /// inverse-map log-determinant.
    pub fn log_prob_var(&self, tape: &Tape, bound: &Bound, x: Var) -> Var {
        let (z, ld) = self.inverse_var(tape, bound, x);
        tape.add(self.base_log_prob_var(tape, bound, z), ld)
    }

    fn check_cols(&self, a: &Array2<f64>) -> Result<()> {
        if a.ncols() != self.config.dim {
            return Err(Error::shape(
                format!("{} columns", self.config.dim),
                a.ncols(),
            ));
        }
        Ok(())
    }

    pub fn forward_batch(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_cols(z)?;
        let mut h = z.clone();
        let mut logdet = Array1::zeros(z.nrows());
        for (k, layer) in self.layers.iter().enumerate() {
            let (next, ld) = layer.forward_batch(store, &h)?;
            if let Some(bad) = next.iter().find(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("flow layer {k} output"), *bad));
            }
            h = next;
            logdet += &ld;
        }
        Ok((h, logdet))
    }

    pub fn inverse_batch(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_cols(x)?;
        let mut h = x.clone();
        let mut logdet = Array1::zeros(x.nrows());
        for layer in self.layers.iter().rev() {
            let (next, ld) = layer.inverse_batch(store, &h)?;
            h = next;
            logdet += &ld;
        }
        Ok((h, logdet))
    }

    pub fn base_log_prob_batch(&self, store: &ParamStore, z: &Array2<f64>) -> Array1<f64> {
        let phi = store.get(self.base_log_var).row(0).to_owned();
        let inv_var = phi.mapv(|p| (-p).exp());
        let phi_sum = phi.sum();
        z.rows()
            .into_iter()
            .map(|row| {
                let quad: f64 = row.iter().zip(&inv_var).map(|(z, iv)| z * z * iv).sum();
                -0.5 * (quad + phi_sum + self.config.dim as f64 * LN_2PI)
            })
            .collect()
    }

    pub fn log_prob_batch(&self, store: &ParamStore, x: &Array2<f64>) -> Result<Array1<f64>> {
        let (z, ld) = self.inverse_batch(store, x)?;
        Ok(self.base_log_prob_batch(store, &z) + ld)
    }

    /// Single-point forward map `z → (x, log|det ∂x/∂z|)`.
    pub fn forward_map(&self, store: &ParamStore, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (x, ld) = self.forward_batch(store, &row(z))?;
        Ok((x.row(0).to_vec(), ld[0]))
    }

    /// Single-point inverse map `x → (z, log|det ∂z/∂x|)`.
    pub fn inverse_map(&self, store: &ParamStore, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (z, ld) = self.inverse_batch(store, &row(x))?;
        Ok((z.row(0).to_vec(), ld[0]))
    }

    pub fn log_prob(&self, store: &ParamStore, x: &[f64]) -> Result<f64> {
        Ok(self.log_prob_batch(store, &row(x))?[0])
    }

    /// `n` draws `x = f(√τ · z)`, `z ~ N(0, diag(base variances))`.
    pub fn sample_batch(
        &self,
        store: &ParamStore,
        n: usize,
        tau: f64,
        rng: &mut SeededRng,
    ) -> Result<Array2<f64>> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {tau}"
            )));
        }
        let std: Vec<f64> = self
            .base_variances(store)
            .iter()
            .map(|v| (tau * v).sqrt())
            .collect();
        let mut z = rng.normal_matrix(n, self.config.dim);
        for mut r in z.rows_mut() {
            r.iter_mut().zip(&std).for_each(|(v, s)| *v *= s);
        }
        Ok(self.forward_batch(store, &z)?.0)
    }
}

fn row(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector")
}

/// Optimizer settings for maximum-likelihood flow fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl FitConfig {
    /// GIN settings for the regression problems: 200 iterations, lr 1e-3
    /// decayed ×0.1 every 50 iterations.
    pub fn gin_regression(seed: u64) -> Self {
        Self {
            iterations: 200,
            batch_size: 256,
            schedule: LrSchedule::new(1e-3, 0.1, 50),
            seed,
        }
    }

    /// GIN settings for operator learning: 100 iterations at constant lr 1e-3.
    pub fn gin_operator(seed: u64) -> Self {
        Self {
            iterations: 100,
            batch_size: 256,
            schedule: LrSchedule::constant(1e-3),
            seed,
        }
    }
}

/// A flow together with its own parameters.
#[derive(Debug, Clone)]
pub struct DensityModel {
    pub store: ParamStore,
    pub flow: RealNvpFlow,
}

impl DensityModel {
    pub fn new(config: FlowConfig, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(seed);
        let flow = RealNvpFlow::new(&mut store, "flow", config, &mut rng);
        Self { store, flow }
    }

    pub fn log_prob_batch(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.flow.log_prob_batch(&self.store, x)
    }

    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Result<Array2<f64>> {
        self.flow.sample_batch(&self.store, n, 1.0, rng)
    }

    pub fn save(&self, dir: &Path, manifest: &Manifest) -> Result<()> {
        let mut m = manifest.clone();
        self.flow.config().write_manifest(&mut m, "flow");
        m.set(
            "flow.base_variances",
            format_f64_list(&self.flow.base_variances(&self.store)),
        );
        crate::netcore::save_checkpoint(dir, &self.store, &m)
    }

    pub fn load(dir: &Path) -> Result<(Self, Manifest)> {
        let (store, m) = crate::netcore::load_checkpoint(dir)?;
        let config = FlowConfig::read_manifest(&m, "flow", &dir.join("manifest.txt"))?;
        let flow = RealNvpFlow::attach(&store, "flow", config)?;
        Ok((Self { store, flow }, m))
    }
}

/// Adds `pad_dims` fresh standard-normal columns.
pub(crate) fn pad_columns(x: &Array2<f64>, pad_dims: usize, rng: &mut SeededRng) -> Array2<f64> {
    if pad_dims == 0 {
        return x.clone();
    }
    let pad = rng.normal_matrix(x.nrows(), pad_dims);
    concatenate(Axis(1), &[x.view(), pad.view()]).unwrap()
}

/// Replaces constant columns by the constant plus N(0, 1e-6²) jitter.
fn jitter_degenerate(data: &Array2<f64>, rng: &mut SeededRng) -> Array2<f64> {
    let mut out = data.clone();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            log::warn!("flow fit: coordinate {j} has zero variance; adding 1e-6 jitter");
            col.mapv_inplace(|v| v + 1e-6 * rng.normal());
        }
    }
    out
}

/// Maximum-likelihood fit with Adam on the mean negative log-likelihood.
/// `pad_dims` standard-normal channels are appended to every mini-batch.
pub(crate) fn fit_density(
    store: &mut ParamStore,
    flow: &RealNvpFlow,
    data: &Array2<f64>,
    pad_dims: usize,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    if data.nrows() < 2 {
        return Err(Error::EmptyData(format!(
            "flow fit needs at least 2 points, got {}",
            data.nrows()
        )));
    }
    if data.ncols() + pad_dims != flow.dim() {
        return Err(Error::shape(
            format!("{} data columns", flow.dim() - pad_dims),
            data.ncols(),
        ));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let data = jitter_degenerate(data, &mut rng);
    let mut adam = AdamState::new(store);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let idx = rng.batch_indices(data.nrows(), cfg.batch_size);
        let batch = pad_columns(&data.select(Axis(0), &idx), pad_dims, &mut rng);
        let (loss, grads) = gradient(store, |t, b| {
            let x = t.constant(batch.clone());
            Ok(t.neg(t.mean(flow.log_prob_var(t, b, x))))
        })
        .map_err(|e| e.context(format!("flow fit iteration {it}")))?;
        adam.step(store, &grads, cfg.schedule.lr_at(it))?;
        trace.push(loss);
    }
    Ok(trace)
}

/// Fits `model` to `data` by maximum likelihood; returns the per-iteration
/// mean negative log-likelihood.
pub fn fit_flow(model: &mut DensityModel, data: &Array2<f64>, cfg: &FitConfig) -> Result<Vec<f64>> {
    let flow = model.flow.clone();
    fit_density(&mut model.store, &flow, data, 0, cfg)
}
