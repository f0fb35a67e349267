use std::path::Path;

use ndarray::{Array1, Array2};

use super::decoder::GaussianDecoder;
use super::encoder::Encoder;
use crate::flows::{FlowConfig, RealNvpFlow};
use crate::netcore::{Activation, Bound, Manifest, ParamStore, SeededRng, Tape, Var};
use crate::{Error, Result};

/// Architecture and trade-off weight of an [`IbModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct IbConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    /// Hidden widths shared by the gate, latent-mean and decoder nets.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub gate_eps: f64,
    pub sigma_floor: f64,
    /// Architecture of the marginal `e(z)`; its `dim` must equal `latent_dim`.
    pub marginal: FlowConfig,
    pub beta: f64,
}

impl IbConfig {
    /// Function-regression defaults: `d_z = 20`, nets 32×2 tanh, β = 0.3.
    pub fn regression(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            latent_dim: 20,
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            gate_eps: 1e-3,
            sigma_floor: 1e-4,
            marginal: FlowConfig::realnvp(20),
            beta: 0.3,
        }
    }

    pub fn with_latent_dim(mut self, latent_dim: usize) -> Self {
        self.latent_dim = latent_dim;
        self.marginal.dim = latent_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("input and output dimensions must be positive".into());
        }
        if self.latent_dim < 2 {
            return bad(format!(
                "latent dimension must be at least 2, got {}",
                self.latent_dim
            ));
        }
        if self.marginal.dim != self.latent_dim {
            return bad(format!(
                "marginal flow dimension {} differs from latent dimension {}",
                self.marginal.dim, self.latent_dim
            ));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.gate_eps > 0.0 && self.gate_eps < 0.5) {
            return bad(format!(
                "gate epsilon must lie in (0, 0.5), got {}",
                self.gate_eps
            ));
        }
        if !(self.sigma_floor > 0.0) {
            return bad(format!(
                "sigma floor must be positive, got {}",
                self.sigma_floor
            ));
        }
        Ok(())
    }

    pub fn write_manifest(&self, m: &mut Manifest) {
        m.set("ib.input_dim", self.input_dim);
        m.set("ib.output_dim", self.output_dim);
        m.set("ib.latent_dim", self.latent_dim);
        m.set("ib.hidden", join(&self.hidden));
        m.set("ib.activation", self.activation);
        m.set("ib.gate_eps", format!("{:e}", self.gate_eps));
        m.set("ib.sigma_floor", format!("{:e}", self.sigma_floor));
        m.set("ib.beta", format!("{:e}", self.beta));
        self.marginal.write_manifest(m, "marginal");
    }

    pub fn read_manifest(m: &Manifest, path: &Path) -> Result<Self> {
        let hidden: String = m.parse_key("ib.hidden", path)?;
        let act: String = m.parse_key("ib.activation", path)?;
        let cfg = Self {
            input_dim: m.parse_key("ib.input_dim", path)?,
            output_dim: m.parse_key("ib.output_dim", path)?,
            latent_dim: m.parse_key("ib.latent_dim", path)?,
            hidden: split_usize(&hidden).map_err(|_| Error::format(path, "bad ib.hidden"))?,
            activation: act.parse()?,
            gate_eps: m.parse_key("ib.gate_eps", path)?,
            sigma_floor: m.parse_key("ib.sigma_floor", path)?,
            marginal: FlowConfig::read_manifest(m, "marginal", path)?,
            beta: m.parse_key("ib.beta", path)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn join(v: &[usize]) -> String {
    v.iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn split_usize(s: &str) -> std::result::Result<Vec<usize>, std::num::ParseIntError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse())
        .collect()
}

/// Monte Carlo estimates of one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbTerms {
    /// `Î(Y;Z) − β Î(X;Z)`, to be maximized.
    pub objective: f64,
    pub iyz: f64,
    pub ixz: f64,
}

/// Predictive mean and total standard deviation from `S` latent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    /// Gate `m(x)` per input.
    pub gate: Array2<f64>,
    pub n_samples: usize,
}

impl PredictiveDistribution {
    /// Mean gate value per input.
    pub fn mean_gate(&self) -> Array1<f64> {
        self.gate.mean_axis(ndarray::Axis(1)).unwrap()
    }
}

/// Running moments for the total-variance combination.
pub(crate) struct MomentAccumulator {
    count: usize,
    mean_mu: Array2<f64>,
    m2_mu: Array2<f64>,
    sum_var: Array2<f64>,
}

impl MomentAccumulator {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        Self {
            count: 0,
            mean_mu: Array2::zeros((rows, cols)),
            m2_mu: Array2::zeros((rows, cols)),
            sum_var: Array2::zeros((rows, cols)),
        }
    }

    pub(crate) fn push(&mut self, mu: &Array2<f64>, log_sigma: &Array2<f64>) {
        self.count += 1;
        let n = self.count as f64;
        ndarray::Zip::from(&mut self.mean_mu)
            .and(&mut self.m2_mu)
            .and(&mut self.sum_var)
            .and(mu)
            .and(log_sigma)
            .for_each(|mean, m2, sv, &m, &ls| {
                let delta = m - *mean;
                *mean += delta / n;
                *m2 += delta * (m - *mean);
                *sv += (2.0 * ls).exp();
            });
    }

    /// `(mean of μ, sqrt(mean σ² + var μ))`.
    pub(crate) fn finish(self) -> (Array2<f64>, Array2<f64>) {
        let n = self.count as f64;
        let std = (&self.sum_var / n + &self.m2_mu / n).mapv(f64::sqrt);
        (self.mean_mu, std)
    }
}

/// Encoder, Gaussian decoder and flow marginal `e(z)` over one parameter store.
#[derive(Debug, Clone)]
pub struct IbModel {
    pub store: ParamStore,
    config: IbConfig,
    encoder: Encoder,
    decoder: GaussianDecoder,
    marginal: RealNvpFlow,
}

impl IbModel {
    pub fn new(config: IbConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(seed);
        let c = &config;
        let encoder = Encoder::new(
            &mut store,
            "encoder",
            c.input_dim,
            &c.hidden,
            c.latent_dim,
            c.activation,
            c.gate_eps,
            &mut rng,
        );
        let decoder = GaussianDecoder::new(
            &mut store,
            "decoder",
            c.latent_dim,
            &c.hidden,
            c.output_dim,
            c.activation,
            c.sigma_floor,
            &mut rng,
        );
        let marginal = RealNvpFlow::new(&mut store, "marginal", c.marginal.clone(), &mut rng);
        Ok(Self {
            store,
            config,
            encoder,
            decoder,
            marginal,
        })
    }

    fn attach(store: ParamStore, config: IbConfig) -> Result<Self> {
        let c = &config;
        let encoder = Encoder::attach(
            &store,
            "encoder",
            c.input_dim,
            &c.hidden,
            c.latent_dim,
            c.activation,
            c.gate_eps,
        )?;
        let decoder = GaussianDecoder::attach(
            &store,
            "decoder",
            c.latent_dim,
            &c.hidden,
            c.output_dim,
            c.activation,
            c.sigma_floor,
        )?;
        let marginal = RealNvpFlow::attach(&store, "marginal", c.marginal.clone())?;
        Ok(Self {
            store,
            config,
            encoder,
            decoder,
            marginal,
        })
    }

    pub fn config(&self) -> &IbConfig {
        &self.config
    }

    pub fn beta(&self) -> f64 {
        self.config.beta
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &GaussianDecoder {
        &self.decoder
    }

    pub fn marginal(&self) -> &RealNvpFlow {
        &self.marginal
    }

    fn check_inputs(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::shape(
                format!("{} input columns", self.config.input_dim),
                x.ncols(),
            ));
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyData("batch is empty".into()));
        }
        Ok(())
    }

    pub fn encode_sample(
        &self,
        x: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_inputs(x)?;
        self.encoder.encode_sample(&self.store, x, rng)
    }

    pub fn encoder_log_prob(&self, z: &Array2<f64>, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_inputs(x)?;
        self.encoder.log_prob(&self.store, z, x)
    }

    pub fn decoder_log_prob(&self, y: &Array2<f64>, z: &Array2<f64>) -> Result<Array1<f64>> {
        self.decoder.log_prob(&self.store, y, z)
    }

    pub fn marginal_log_prob(&self, z: &Array2<f64>) -> Result<Array1<f64>> {
        self.marginal.log_prob_batch(&self.store, z)
    }

    /// Relevance term `(1/B) Σ log q_D(y_b|z_b)` on the tape.
    pub fn iyz_var(
        &self,
        tape: &Tape,
        bound: &Bound,
        x: &Array2<f64>,
        y: &Array2<f64>,
        z0: &Array2<f64>,
    ) -> Var {
        let xv = tape.constant(x.clone());
        let enc = self
            .encoder
            .encode_var(tape, bound, xv, tape.constant(z0.clone()));
        let yv = tape.constant(y.clone());
        tape.mean(self.decoder.log_prob_var(tape, bound, yv, enc.z))
    }

    /// Compression term on the tape.
    pub fn ixz_var(
        &self,
        tape: &Tape,
        bound: &Bound,
        x_wide: &Array2<f64>,
        z0: &Array2<f64>,
    ) -> Var {
        compression_var(tape, bound, &self.encoder, &self.marginal, x_wide, z0)
    }

    /// Objective and its components for explicit encoder noise.
    pub fn terms_var(
        &self,
        tape: &Tape,
        bound: &Bound,
        batch: (&Array2<f64>, &Array2<f64>),
        z0: &Array2<f64>,
        x_wide: &Array2<f64>,
        z0_wide: &Array2<f64>,
    ) -> (Var, Var, Var) {
        let iyz = self.iyz_var(tape, bound, batch.0, batch.1, z0);
        let ixz = self.ixz_var(tape, bound, x_wide, z0_wide);
        let obj = tape.sub(iyz, tape.scale(ixz, self.config.beta));
        (obj, iyz, ixz)
    }

    fn check_batches(&self, x: &Array2<f64>, y: &Array2<f64>, x_wide: &Array2<f64>) -> Result<()> {
        self.check_inputs(x)?;
        self.check_inputs(x_wide)?;
        if y.nrows() != x.nrows() || y.ncols() != self.config.output_dim {
            return Err(Error::shape(
                format!("{}x{} targets", x.nrows(), self.config.output_dim),
                format!("{}x{}", y.nrows(), y.ncols()),
            ));
        }
        Ok(())
    }

    /// `(1/B) Σ log q_D(y_b|z_b)`, `z_b` drawn from the encoder.
    pub fn estimate_iyz(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<f64> {
        self.check_batches(x, y, x)?;
        let z0 = rng.normal_matrix(x.nrows(), self.config.latent_dim);
        let tape = Tape::new();
        let bound = self.store.bind_frozen(&tape);
        Ok(tape.scalar(self.iyz_var(&tape, &bound, x, y, &z0)))
    }

    /// `(1/B) Σ [log q_E(z̃_b|x̃_b) − log e(z̃_b)]` on a wide batch.
    pub fn estimate_izx(&self, x_wide: &Array2<f64>, rng: &mut SeededRng) -> Result<f64> {
        self.check_inputs(x_wide)?;
        let z0 = rng.normal_matrix(x_wide.nrows(), self.config.latent_dim);
        let tape = Tape::new();
        let bound = self.store.bind_frozen(&tape);
        Ok(tape.scalar(self.ixz_var(&tape, &bound, x_wide, &z0)))
    }

    /// Noise is drawn for the training batch first, then the wide batch.
    pub fn ib_loss(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        x_wide: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<IbTerms> {
        self.check_batches(x, y, x_wide)?;
        let z0 = rng.normal_matrix(x.nrows(), self.config.latent_dim);
        let z0_wide = rng.normal_matrix(x_wide.nrows(), self.config.latent_dim);
        self.ib_terms_with_noise((x, y), &z0, x_wide, &z0_wide)
    }

    pub fn ib_terms_with_noise(
        &self,
        batch: (&Array2<f64>, &Array2<f64>),
        z0: &Array2<f64>,
        x_wide: &Array2<f64>,
        z0_wide: &Array2<f64>,
    ) -> Result<IbTerms> {
        let tape = Tape::new();
        let bound = self.store.bind_frozen(&tape);
        let (obj, iyz, ixz) = self.terms_var(&tape, &bound, batch, z0, x_wide, z0_wide);
        checked_terms(&tape, obj, iyz, ixz)
    }

    /// Objective components and gradients of the negated objective, in store
    /// order, for one Adam descent step.
    pub fn ib_gradient(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        x_wide: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<(IbTerms, Vec<Array2<f64>>)> {
        self.check_batches(x, y, x_wide)?;
        let z0 = rng.normal_matrix(x.nrows(), self.config.latent_dim);
        let z0_wide = rng.normal_matrix(x_wide.nrows(), self.config.latent_dim);
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let (obj, iyz, ixz) = self.terms_var(&tape, &bound, (x, y), &z0, x_wide, &z0_wide);
        let terms = checked_terms(&tape, obj, iyz, ixz)?;
        let mut grads = tape.backward(tape.neg(obj));
        Ok((terms, bound.vars().iter().map(|&v| grads.take(v)).collect()))
    }

    /// `S` latent draws per input; `std² = mean σ² + var μ`.
    pub fn predict(
        &self,
        x: &Array2<f64>,
        samples: usize,
        rng: &mut SeededRng,
    ) -> Result<PredictiveDistribution> {
        if samples == 0 {
            return Err(Error::InvalidParameter(
                "sample count must be at least 1".into(),
            ));
        }
        self.check_inputs(x)?;
        let gate = self.encoder.gate(&self.store, x)?;
        let mean_z = &gate * &self.encoder.latent_mean(&self.store, x)?;
        let spread = 1.0 - &gate;
        let mut acc = MomentAccumulator::new(x.nrows(), self.config.output_dim);
        for _ in 0..samples {
            let z = &mean_z + &(&spread * &rng.normal_matrix(x.nrows(), self.config.latent_dim));
            let (mu, log_sigma) = self.decoder.params(&self.store, &z)?;
            acc.push(&mu, &log_sigma);
        }
        let (mean, std) = acc.finish();
        Ok(PredictiveDistribution {
            mean,
            std,
            gate,
            n_samples: samples,
        })
    }

    /// Writes parameters and architecture; `extra` entries are kept.
    pub fn save(&self, dir: &Path, extra: &Manifest) -> Result<()> {
        let mut m = extra.clone();
        m.set("kind", "ib");
        self.config.write_manifest(&mut m);
        crate::netcore::save_checkpoint(dir, &self.store, &m)
    }

    pub fn load(dir: &Path) -> Result<(Self, Manifest)> {
        let (store, m) = crate::netcore::load_checkpoint(dir)?;
        let config = IbConfig::read_manifest(&m, &dir.join("manifest.txt"))?;
        Ok((Self::attach(store, config)?, m))
    }
}

/// `(1/B) Σ [log q_E(z̃|x̃) − log e(z̃)]` with `z̃` drawn from `x̃` itself.
pub(crate) fn compression_var(
    tape: &Tape,
    bound: &Bound,
    encoder: &Encoder,
    marginal: &RealNvpFlow,
    x_wide: &Array2<f64>,
    z0: &Array2<f64>,
) -> Var {
    let xv = tape.constant(x_wide.clone());
    let enc = encoder.encode_var(tape, bound, xv, tape.constant(z0.clone()));
    let log_q = encoder.log_prob_var(tape, &enc, enc.z);
    let log_e = marginal.log_prob_var(tape, bound, enc.z);
    tape.mean(tape.sub(log_q, log_e))
}

pub(crate) fn checked_terms(tape: &Tape, obj: Var, iyz: Var, ixz: Var) -> Result<IbTerms> {
    let terms = IbTerms {
        objective: tape.scalar(obj),
        iyz: tape.scalar(iyz),
        ixz: tape.scalar(ixz),
    };
    if !terms.iyz.is_finite() {
        return Err(Error::non_finite("relevance term I(Y;Z)", terms.iyz));
    }
    if !terms.ixz.is_finite() {
        return Err(Error::non_finite("compression term I(X;Z)", terms.ixz));
    }
    if !terms.objective.is_finite() {
        return Err(Error::non_finite("objective", terms.objective));
    }
    Ok(terms)
}
