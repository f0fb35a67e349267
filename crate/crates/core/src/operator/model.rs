use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::head::DeepONetHead;
use crate::datagen::OperatorDataset;
use crate::flows::{FitConfig, FlowConfig, GinModel, RealNvpFlow};
use crate::ibcore::{
    checked_terms, compression_var, diag_gaussian_log_prob, diag_gaussian_log_prob_var, join,
    split_usize, Encoder, IbTerms, MomentAccumulator,
};
use crate::netcore::{
    Activation, AdamState, Bound, LrSchedule, Manifest, ParamStore, SeededRng, Tape, Var,
};
use crate::regression::{read_schedule, write_schedule, Standardizer, TrainRecord};
use crate::{Error, Result};

/// Architecture and objective weight of the IB-DeepONet.
#[derive(Debug, Clone, PartialEq)]
pub struct IbOnetConfig {
    /// Number of sensors `m`.
    pub sensors: usize,
    pub query_dim: usize,
    pub latent_dim: usize,
    /// Hidden widths of the gate and latent-mean nets.
    pub encoder_hidden: Vec<usize>,
    /// Hidden widths of the branch and trunk nets.
    pub head_hidden: Vec<usize>,
    /// Features per output channel.
    pub features: usize,
    pub activation: Activation,
    pub gate_eps: f64,
    pub sigma_floor: f64,
    pub marginal: FlowConfig,
    pub beta: f64,
}

impl IbOnetConfig {
    /// `d_z = 64`, 128×3 tanh nets everywhere, `n = 128`, β = 0.3.
    pub fn new(sensors: usize) -> Self {
        Self {
            sensors,
            query_dim: 2,
            latent_dim: 64,
            encoder_hidden: vec![128; 3],
            head_hidden: vec![128; 3],
            features: 128,
            activation: Activation::Tanh,
            gate_eps: 1e-3,
            sigma_floor: 1e-4,
            marginal: FlowConfig::realnvp(64),
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
        if self.sensors == 0 || self.query_dim == 0 || self.features == 0 {
            return bad("sensor, query and feature counts must be positive".into());
        }
        if self.latent_dim < 2 || self.marginal.dim != self.latent_dim {
            return bad(format!(
                "latent dimension {} must be at least 2 and match the marginal flow ({})",
                self.latent_dim, self.marginal.dim
            ));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.gate_eps > 0.0 && self.gate_eps < 0.5) || !(self.sigma_floor > 0.0) {
            return bad("gate epsilon must lie in (0, 0.5) and sigma floor be positive".into());
        }
        Ok(())
    }

    fn write_manifest(&self, m: &mut Manifest) {
        m.set("onet.sensors", self.sensors);
        m.set("onet.query_dim", self.query_dim);
        m.set("onet.latent_dim", self.latent_dim);
        m.set("onet.encoder_hidden", join(&self.encoder_hidden));
        m.set("onet.head_hidden", join(&self.head_hidden));
        m.set("onet.features", self.features);
        m.set("onet.activation", self.activation);
        m.set("onet.gate_eps", format!("{:e}", self.gate_eps));
        m.set("onet.sigma_floor", format!("{:e}", self.sigma_floor));
        m.set("onet.beta", format!("{:e}", self.beta));
        self.marginal.write_manifest(m, "marginal");
    }

    fn read_manifest(m: &Manifest, path: &Path) -> Result<Self> {
        let widths = |key: &str| -> Result<Vec<usize>> {
            let raw: String = m.parse_key(key, path)?;
            split_usize(&raw).map_err(|_| Error::format(path, format!("bad {key}")))
        };
        let act: String = m.parse_key("onet.activation", path)?;
        let cfg = Self {
            sensors: m.parse_key("onet.sensors", path)?,
            query_dim: m.parse_key("onet.query_dim", path)?,
            latent_dim: m.parse_key("onet.latent_dim", path)?,
            encoder_hidden: widths("onet.encoder_hidden")?,
            head_hidden: widths("onet.head_hidden")?,
            features: m.parse_key("onet.features", path)?,
            activation: act.parse()?,
            gate_eps: m.parse_key("onet.gate_eps", path)?,
            sigma_floor: m.parse_key("onet.sigma_floor", path)?,
            marginal: FlowConfig::read_manifest(m, "marginal", path)?,
            beta: m.parse_key("onet.beta", path)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Training settings; [`OperatorTrainConfig::new`] gives the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTrainConfig {
    pub model: IbOnetConfig,
    pub iterations: usize,
    /// Functions per mini-batch.
    pub batch_size: usize,
    /// Tempered sensor vectors per step; `None` matches the mini-batch.
    pub wide_batch: Option<usize>,
    /// Query points drawn per function and step.
    pub queries_per_function: usize,
    pub schedule: LrSchedule,
    pub tau: f64,
    pub gin_fit: FitConfig,
    pub seed: u64,
}

impl OperatorTrainConfig {
    /// 600 iterations at lr 1e-3 decayed ×0.1 every 200, 256 functions per
    /// batch, 100 query points each, τ = 1.4.
    pub fn new(sensors: usize, seed: u64) -> Self {
        Self {
            model: IbOnetConfig::new(sensors),
            iterations: 600,
            batch_size: 256,
            wide_batch: None,
            queries_per_function: 100,
            schedule: LrSchedule::new(1e-3, 0.1, 200),
            tau: 1.4,
            gin_fit: FitConfig::gin_operator(seed.wrapping_add(2)),
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.gin_fit.seed = seed.wrapping_add(2);
        self
    }

    pub fn wide_size(&self, n: usize) -> usize {
        self.wide_batch.unwrap_or(n.min(self.batch_size))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.queries_per_function == 0 || self.wide_batch == Some(0) {
            return Err(Error::InvalidParameter(
                "batch, wide-batch and query counts must be positive".into(),
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    pub fn write_manifest(&self, m: &mut Manifest) {
        self.model.write_manifest(m);
        m.set("op.iterations", self.iterations);
        m.set("op.batch_size", self.batch_size);
        m.set(
            "op.wide_batch",
            self.wide_batch
                .map_or("auto".to_string(), |w| w.to_string()),
        );
        m.set("op.queries_per_function", self.queries_per_function);
        write_schedule(m, "op.lr", &self.schedule);
        m.set("op.tau", self.tau);
        m.set("op.gin.iterations", self.gin_fit.iterations);
        m.set("op.gin.batch_size", self.gin_fit.batch_size);
        write_schedule(m, "op.gin.lr", &self.gin_fit.schedule);
        m.set("op.gin.seed", self.gin_fit.seed);
        m.set("op.seed", self.seed);
    }

    pub fn read_manifest(m: &Manifest, path: &Path) -> Result<Self> {
        Ok(Self {
            model: IbOnetConfig::read_manifest(m, path)?,
            iterations: m.parse_key("op.iterations", path)?,
            batch_size: m.parse_key("op.batch_size", path)?,
            wide_batch: match m.get("op.wide_batch") {
                Some("auto") => None,
                _ => Some(m.parse_key("op.wide_batch", path)?),
            },
            queries_per_function: m.parse_key("op.queries_per_function", path)?,
            schedule: read_schedule(m, "op.lr", path)?,
            tau: m.parse_key("op.tau", path)?,
            gin_fit: FitConfig {
                iterations: m.parse_key("op.gin.iterations", path)?,
                batch_size: m.parse_key("op.gin.batch_size", path)?,
                schedule: read_schedule(m, "op.gin.lr", path)?,
                seed: m.parse_key("op.gin.seed", path)?,
            },
            seed: m.parse_key("op.seed", path)?,
        })
    }
}

/// One input function at the sensors and noisy output values at `M` points.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSample {
    pub u_sensors: Vec<f64>,
    /// `M × d_q` query locations.
    pub query_points: Array2<f64>,
    pub s_values: Vec<f64>,
    pub provenance_seed: u64,
}

impl OperatorSample {
    /// Sample `i` of `data` restricted to grid points `picks`.
    pub fn from_dataset(data: &OperatorDataset, i: usize, picks: &[usize]) -> Self {
        let grid = data.query_grid();
        let nt = data.config.pde.nt;
        Self {
            u_sensors: data.u.row(i).to_vec(),
            query_points: grid.select(Axis(0), picks),
            s_values: picks.iter().map(|&k| data.s[[i, k / nt, k % nt]]).collect(),
            provenance_seed: data.seed,
        }
    }
}

/// Flattened batch: unique query points and (function, point) pairs.
#[derive(Debug, Clone)]
pub(crate) struct PairBatch {
    /// `B × m` standardized sensors.
    pub u: Array2<f64>,
    /// `U × d_q` distinct query points.
    pub query: Array2<f64>,
    pub owner: Vec<usize>,
    pub point: Vec<usize>,
    /// `K × 1` targets.
    pub s: Array2<f64>,
}

impl PairBatch {
    pub(crate) fn from_samples(samples: &[OperatorSample], scale: &Standardizer) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::EmptyData("operator batch is empty".into()));
        };
        let m = first.u_sensors.len();
        if m != scale.dim() {
            return Err(Error::shape(format!("{} sensors", scale.dim()), m));
        }
        let dq = first.query_points.ncols();
        let mut u = Array2::zeros((samples.len(), m));
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut query = Vec::new();
        let (mut owner, mut point, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (b, sample) in samples.iter().enumerate() {
            if sample.u_sensors.len() != m {
                return Err(Error::shape(format!("{m} sensors"), sample.u_sensors.len()));
            }
            if sample.query_points.ncols() != dq
                || sample.query_points.nrows() != sample.s_values.len()
            {
                return Err(Error::shape(
                    format!("{} query points of dimension {dq}", sample.s_values.len()),
                    format!("{:?}", sample.query_points.dim()),
                ));
            }
            u.row_mut(b).assign(&ArrayView1::from(&sample.u_sensors));
            for (q, &sv) in sample.query_points.rows().into_iter().zip(&sample.s_values) {
                let key: Vec<u64> = q.iter().map(|v| v.to_bits()).collect();
                let next = index.len();
                let id = *index.entry(key).or_insert_with(|| {
                    query.extend(q.iter().copied());
                    next
                });
                owner.push(b);
                point.push(id);
                s.push(sv);
            }
        }
        let k = s.len();
        Ok(Self {
            u: scale.apply(&u),
            query: Array2::from_shape_vec((index.len(), dq), query).unwrap(),
            owner,
            point,
            s: Array2::from_shape_vec((k, 1), s).unwrap(),
        })
    }

    /// Functions `rows` of `data`, each at its own grid points `picks[b]`.
    pub(crate) fn from_grid(
        data: &OperatorDataset,
        grid: &Array2<f64>,
        rows: &[usize],
        picks: &[Vec<usize>],
        scale: &Standardizer,
    ) -> Self {
        let nt = data.config.pde.nt;
        let mut slot = vec![usize::MAX; grid.nrows()];
        let mut used = Vec::new();
        let (mut owner, mut point, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (b, (&i, pk)) in rows.iter().zip(picks).enumerate() {
            for &k in pk {
                if slot[k] == usize::MAX {
                    slot[k] = used.len();
                    used.push(k);
                }
                owner.push(b);
                point.push(slot[k]);
                s.push(data.s[[i, k / nt, k % nt]]);
            }
        }
        let n = s.len();
        Self {
            u: scale.apply(&data.u.select(Axis(0), rows)),
            query: grid.select(Axis(0), &used),
            owner,
            point,
            s: Array2::from_shape_vec((n, 1), s).unwrap(),
        }
    }
}

/// IB-DeepONet: the encoder reads only the sensors; the head decodes a
/// latent at any query point.
#[derive(Debug, Clone)]
pub struct IbOnetModel {
    pub store: ParamStore,
    config: IbOnetConfig,
    encoder: Encoder,
    head: DeepONetHead,
    marginal: RealNvpFlow,
}

impl IbOnetModel {
    pub fn new(config: IbOnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(seed);
        let c = &config;
        let encoder = Encoder::new(
            &mut store,
            "encoder",
            c.sensors,
            &c.encoder_hidden,
            c.latent_dim,
            c.activation,
            c.gate_eps,
            &mut rng,
        );
        let head = DeepONetHead::new(
            &mut store,
            "head",
            c.latent_dim,
            c.query_dim,
            &c.head_hidden,
            c.features,
            c.activation,
            c.sigma_floor,
            &mut rng,
        );
        let marginal = RealNvpFlow::new(&mut store, "marginal", c.marginal.clone(), &mut rng);
        Ok(Self {
            store,
            config,
            encoder,
            head,
            marginal,
        })
    }

    fn attach(store: ParamStore, config: IbOnetConfig) -> Result<Self> {
        let c = &config;
        let encoder = Encoder::attach(
            &store,
            "encoder",
            c.sensors,
            &c.encoder_hidden,
            c.latent_dim,
            c.activation,
            c.gate_eps,
        )?;
        let head = DeepONetHead::attach(
            &store,
            "head",
            c.latent_dim,
            c.query_dim,
            &c.head_hidden,
            c.features,
            c.activation,
            c.sigma_floor,
        )?;
        let marginal = RealNvpFlow::attach(&store, "marginal", c.marginal.clone())?;
        Ok(Self {
            store,
            config,
            encoder,
            head,
            marginal,
        })
    }

    pub fn config(&self) -> &IbOnetConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head(&self) -> &DeepONetHead {
        &self.head
    }

    pub fn marginal(&self) -> &RealNvpFlow {
        &self.marginal
    }

    /// Per-pair `log N(s | μ, σ²)` (`K × 1`) on the tape.
    fn pair_log_prob_var(
        &self,
        tape: &Tape,
        bound: &Bound,
        batch: &PairBatch,
        z0: &Array2<f64>,
    ) -> Var {
        let u = tape.constant(batch.u.clone());
        let enc = self
            .encoder
            .encode_var(tape, bound, u, tape.constant(z0.clone()));
        let q = tape.constant(batch.query.clone());
        let (mu, log_sigma) =
            self.head
                .eval_pairs_var(tape, bound, enc.z, q, &batch.owner, &batch.point);
        diag_gaussian_log_prob_var(tape, tape.constant(batch.s.clone()), mu, log_sigma)
    }

    /// `(objective, Î(G;Z), Î(U;Z))` nodes; the relevance term sums the
    /// log-densities of each function's points and averages over functions.
    pub(crate) fn terms_var(
        &self,
        tape: &Tape,
        bound: &Bound,
        batch: &PairBatch,
        z0: &Array2<f64>,
        u_wide: &Array2<f64>,
        z0_wide: &Array2<f64>,
    ) -> (Var, Var, Var, Var) {
        let per_pair = self.pair_log_prob_var(tape, bound, batch, z0);
        let iyz = tape.scale(tape.sum(per_pair), 1.0 / batch.u.nrows() as f64);
        let ixz = compression_var(tape, bound, &self.encoder, &self.marginal, u_wide, z0_wide);
        let obj = tape.sub(iyz, tape.scale(ixz, self.config.beta));
        (obj, iyz, ixz, per_pair)
    }

    fn check_batch(&self, batch: &PairBatch, u_wide: &Array2<f64>) -> Result<()> {
        let c = &self.config;
        if batch.u.ncols() != c.sensors || u_wide.ncols() != c.sensors {
            return Err(Error::shape(
                format!("{} sensors", c.sensors),
                format!("{} and {}", batch.u.ncols(), u_wide.ncols()),
            ));
        }
        if batch.query.ncols() != c.query_dim {
            return Err(Error::shape(
                format!("{}-d queries", c.query_dim),
                batch.query.ncols(),
            ));
        }
        if batch.u.nrows() == 0 || u_wide.nrows() == 0 || batch.s.is_empty() {
            return Err(Error::EmptyData("operator batches must be nonempty".into()));
        }
        Ok(())
    }

    fn draw_noise(
        &self,
        batch: &PairBatch,
        u_wide: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> (Array2<f64>, Array2<f64>) {
        let d = self.config.latent_dim;
        let z0 = rng.normal_matrix(batch.u.nrows(), d);
        let z0_wide = rng.normal_matrix(u_wide.nrows(), d);
        (z0, z0_wide)
    }

    fn evaluate(
        &self,
        batch: &PairBatch,
        u_wide: &Array2<f64>,
        z0: &Array2<f64>,
        z0_wide: &Array2<f64>,
        grad: bool,
    ) -> Result<(IbTerms, Option<Vec<Array2<f64>>>)> {
        let tape = Tape::new();
        let bound = if grad {
            self.store.bind(&tape)
        } else {
            self.store.bind_frozen(&tape)
        };
        let (obj, iyz, ixz, per_pair) = self.terms_var(&tape, &bound, batch, z0, u_wide, z0_wide);
        let terms = checked_terms(&tape, obj, iyz, ixz).map_err(|e| {
            let values = tape.value(per_pair);
            match values.iter().position(|v| !v.is_finite()) {
                Some(k) => e.context(format!("sample {}", batch.owner[k])),
                None => e,
            }
        })?;
        if !grad {
            return Ok((terms, None));
        }
        let mut grads = tape.backward(tape.neg(obj));
        Ok((
            terms,
            Some(bound.vars().iter().map(|&v| grads.take(v)).collect()),
        ))
    }

    /// Objective and components for explicit encoder noise.
    #[cfg(test)]
    pub(crate) fn terms_with_noise(
        &self,
        batch: &PairBatch,
        u_wide: &Array2<f64>,
        z0: &Array2<f64>,
        z0_wide: &Array2<f64>,
    ) -> Result<IbTerms> {
        self.check_batch(batch, u_wide)?;
        Ok(self.evaluate(batch, u_wide, z0, z0_wide, false)?.0)
    }

    pub(crate) fn gradient(
        &self,
        batch: &PairBatch,
        u_wide: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<(IbTerms, Vec<Array2<f64>>)> {
        self.check_batch(batch, u_wide)?;
        let (z0, z0_wide) = self.draw_noise(batch, u_wide, rng);
        let (t, g) = self.evaluate(batch, u_wide, &z0, &z0_wide, true)?;
        Ok((t, g.unwrap()))
    }

    pub(crate) fn loss(
        &self,
        batch: &PairBatch,
        u_wide: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<IbTerms> {
        self.check_batch(batch, u_wide)?;
        let (z0, z0_wide) = self.draw_noise(batch, u_wide, rng);
        Ok(self.evaluate(batch, u_wide, &z0, &z0_wide, false)?.0)
    }

    /// `log q_D(G|z)` of one sample's output values for an explicit latent.
    pub fn decoder_log_prob(&self, sample: &OperatorSample, z: &Array1<f64>) -> Result<f64> {
        let z = z.clone().insert_axis(Axis(0));
        let (mu, log_sigma) = self.head.eval(&self.store, &z, &sample.query_points)?;
        let s = ArrayView1::from(&sample.s_values)
            .insert_axis(Axis(0))
            .to_owned();
        if s.dim() != mu.dim() {
            return Err(Error::shape(
                format!("{} output values", mu.ncols()),
                s.ncols(),
            ));
        }
        Ok(diag_gaussian_log_prob(&s, &mu, &log_sigma)[0])
    }
}

/// Trained IB-DeepONet with its sensor GIN and sensor scaling.
#[derive(Debug, Clone)]
pub struct OperatorModel {
    pub ib: IbOnetModel,
    pub gin: GinModel,
    pub u_scale: Standardizer,
    pub config: OperatorTrainConfig,
}

impl OperatorModel {
    /// `(1/B) Σ_b [log q_D(G_b|z_b) − β (log q_E(z̃_b|Ũ_b) − log e(z̃_b))]`
    /// on raw samples and raw (unscaled) wide sensor vectors. Noise is drawn
    /// for the batch first, then the wide batch.
    pub fn ibonet_loss(
        &self,
        batch: &[OperatorSample],
        wide_sensors: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<IbTerms> {
        let sensors = self.ib.config.sensors;
        if wide_sensors.ncols() != sensors {
            return Err(Error::shape(
                format!("{sensors} sensors"),
                wide_sensors.ncols(),
            ));
        }
        let pairs = PairBatch::from_samples(batch, &self.u_scale)?;
        self.ib.loss(&pairs, &self.u_scale.apply(wide_sensors), rng)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut m = Manifest::new();
        m.set("type", "ibuq-operator");
        self.config.write_manifest(&mut m);
        m.set(
            "scale.u.mean",
            crate::netcore::checkpoint::format_f64_list(self.u_scale.mean.as_slice().unwrap()),
        );
        m.set(
            "scale.u.std",
            crate::netcore::checkpoint::format_f64_list(self.u_scale.std.as_slice().unwrap()),
        );
        crate::netcore::save_checkpoint(&dir.join("ib"), &self.ib.store, &m)?;
        self.gin.save(&dir.join("gin"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (store, m) = crate::netcore::load_checkpoint(&dir.join("ib"))?;
        let path = dir.join("ib").join("manifest.txt");
        if m.get("type") != Some("ibuq-operator") {
            return Err(Error::format(&path, "not an operator checkpoint"));
        }
        let config = OperatorTrainConfig::read_manifest(&m, &path)?;
        let u_scale = Standardizer {
            mean: m.parse_list("scale.u.mean", &path)?.into(),
            std: m.parse_list("scale.u.std", &path)?.into(),
        };
        let gin = GinModel::load(&dir.join("gin"))?;
        if u_scale.dim() != config.model.sensors || gin.data_dim() != config.model.sensors {
            return Err(Error::format(&path, "sensor dimensions disagree"));
        }
        Ok(Self {
            ib: IbOnetModel::attach(store, config.model.clone())?,
            gin,
            u_scale,
            config,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedOperator {
    pub model: OperatorModel,
    pub trace: Vec<TrainRecord>,
    pub gin_trace: Vec<f64>,
}

/// Picks `k` distinct entries of `0..pool.len()` by partial Fisher–Yates on
/// a persistent pool.
fn pick_points(pool: &mut [usize], k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let n = pool.len();
    for j in 0..k {
        let r = j + rng.below(n - j);
        pool.swap(j, r);
    }
    pool[..k].to_vec()
}

pub fn train_operator(
    data: &OperatorDataset,
    cfg: &OperatorTrainConfig,
) -> Result<TrainedOperator> {
    train_operator_with(data, cfg, &mut |_| {})
}

/// Fits the sensor GIN, then runs Adam ascent with fresh query points for
/// every function at every step.
pub fn train_operator_with(
    data: &OperatorDataset,
    cfg: &OperatorTrainConfig,
    observe: &mut dyn FnMut(&TrainRecord),
) -> Result<TrainedOperator> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData("operator dataset is empty".into()));
    }
    if data.u.ncols() != cfg.model.sensors {
        return Err(Error::shape(
            format!("{} sensors", cfg.model.sensors),
            data.u.ncols(),
        ));
    }
    let grid = data.query_grid();
    if cfg.queries_per_function > grid.nrows() {
        return Err(Error::InvalidParameter(format!(
            "{} query points requested from a grid of {}",
            cfg.queries_per_function,
            grid.nrows()
        )));
    }
    let u_scale = Standardizer::fit(&data.u);
    let u = u_scale.apply(&data.u);
    let mut gin = GinModel::new(u.ncols(), cfg.tau, cfg.seed.wrapping_add(1))?;
    let gin_trace = gin
        .fit(&u, &cfg.gin_fit)
        .map_err(|e| e.context("fitting sensor GIN"))?;

    let mut ib = IbOnetModel::new(cfg.model.clone(), cfg.seed)?;
    let mut adam = AdamState::new(&ib.store);
    let mut rng = SeededRng::with_stream(cfg.seed, 3);
    let mut pool: Vec<usize> = (0..grid.nrows()).collect();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let lr = cfg.schedule.lr_at(it);
        let rows = rng.batch_indices(data.len(), cfg.batch_size);
        let picks: Vec<Vec<usize>> = rows
            .iter()
            .map(|_| pick_points(&mut pool, cfg.queries_per_function, &mut rng))
            .collect();
        let batch = PairBatch::from_grid(data, &grid, &rows, &picks, &u_scale);
        let wide = gin.sample(cfg.wide_size(data.len()), cfg.tau, &mut rng)?;
        let (terms, grads) = ib
            .gradient(&batch, &wide, &mut rng)
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
    Ok(TrainedOperator {
        model: OperatorModel {
            ib,
            gin,
            u_scale,
            config: cfg.clone(),
        },
        trace,
        gin_trace,
    })
}

/// Predictive mean and total std of a field, plus the mean gate.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPrediction {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    pub gate: f64,
}

/// Predicts every row of `u` (raw sensor values) at `query`; the trunk is
/// evaluated once and the branch once per latent draw.
pub fn predict_fields(
    model: &OperatorModel,
    u: &Array2<f64>,
    query: &Array2<f64>,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<Vec<FieldPrediction>> {
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let ib = &model.ib;
    if u.ncols() != ib.config.sensors {
        return Err(Error::shape(
            format!("{} sensors", ib.config.sensors),
            u.ncols(),
        ));
    }
    if query.ncols() != ib.config.query_dim {
        return Err(Error::shape(
            format!("{}-d queries", ib.config.query_dim),
            query.ncols(),
        ));
    }
    let trunk = ib.head.trunk_features(&ib.store, query)?;
    let us = model.u_scale.apply(u);
    let mut out = Vec::with_capacity(u.nrows());
    for row in us.rows() {
        let x = row.to_owned().insert_axis(Axis(0));
        let reps = x.broadcast((samples, x.ncols())).unwrap().to_owned();
        let (z, gate) = ib.encoder.encode_sample(&ib.store, &reps, rng)?;
        let (mu, log_sigma) = ib.head.eval_with_trunk(&ib.store, &z, &trunk)?;
        let mut acc = MomentAccumulator::new(1, query.nrows());
        for s in 0..samples {
            acc.push(
                &mu.row(s).to_owned().insert_axis(Axis(0)),
                &log_sigma.row(s).to_owned().insert_axis(Axis(0)),
            );
        }
        let (mean, std) = acc.finish();
        out.push(FieldPrediction {
            mean: mean.row(0).to_owned(),
            std: std.row(0).to_owned(),
            gate: gate.row(0).mean().unwrap(),
        });
    }
    Ok(out)
}

pub fn predict_field(
    model: &OperatorModel,
    u_sensors: &[f64],
    query: &Array2<f64>,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<FieldPrediction> {
    let u = Array2::from_shape_vec((1, u_sensors.len()), u_sensors.to_vec()).expect("one row");
    Ok(predict_fields(model, &u, query, samples, rng)?.remove(0))
}
