//! Deep-ensemble baseline: independently initialized MLPs trained on the same
//! data, combined by their sample mean and spread.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::datagen::RegressionData;
use crate::netcore::{
    load_checkpoint, save_checkpoint, Activation, AdamState, DenseNet, Init, Manifest, ParamStore,
    SeededRng,
};
use crate::regression::Standardizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub members: usize,
    pub train_steps: usize,
    pub weight_decay: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Mini-batch size; data sets no larger than this train full-batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    /// 20 members of 50×2 tanh nets, 2000 Adam steps at lr 1e-3, weight
    /// decay 4e-6.
    fn default() -> Self {
        Self {
            members: 20,
            train_steps: 2000,
            weight_decay: 4e-6,
            lr: 1e-3,
            hidden: vec![50, 50],
            activation: Activation::Tanh,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    /// Per-member seeds drawn from the master seed.
    pub fn member_seeds(&self) -> Vec<u64> {
        let mut rng = SeededRng::new(self.seed);
        (0..self.members).map(|_| rng.next_u64()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.members < 2 {
            return Err(Error::InvalidParameter(format!(
                "an ensemble needs at least 2 members, got {}",
                self.members
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "ensemble lr and batch size must be positive, weight decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub store: ParamStore,
    pub net: DenseNet,
    pub seed: u64,
}

impl EnsembleMember {
    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        (0..self.net.num_layers())
            .map(|l| {
                self.store
                    .get(self.net.weight(l))
                    .iter()
                    .map(|w| w * w)
                    .sum::<f64>()
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct DeepEnsemble {
    pub members: Vec<EnsembleMember>,
    pub x_scale: Standardizer,
    pub y_scale: Standardizer,
    pub config: EnsembleConfig,
}

fn widths(cfg: &EnsembleConfig, dx: usize, dy: usize) -> Vec<usize> {
    let mut w = vec![dx];
    w.extend(&cfg.hidden);
    w.push(dy);
    w
}

/// Trains one member on standardized data; `Ok(None)` if it diverged.
fn train_member(
    x: &Array2<f64>,
    y: &Array2<f64>,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<Option<EnsembleMember>> {
    let mut rng = SeededRng::new(seed);
    let mut store = ParamStore::new();
    let net = DenseNet::new(
        &mut store,
        "net",
        &widths(cfg, x.ncols(), y.ncols()),
        cfg.activation,
        Init::XavierNormal,
        &mut rng,
    );
    let mut adam = AdamState::new(&store);
    adam.weight_decay = cfg.weight_decay;
    for step in 0..cfg.train_steps {
        let rows = if x.nrows() <= cfg.batch_size {
            None
        } else {
            Some(rng.batch_indices(x.nrows(), cfg.batch_size))
        };
        let (xb, yb) = match &rows {
            None => (x.clone(), y.clone()),
            Some(r) => (x.select(Axis(0), r), y.select(Axis(0), r)),
        };
        let result = crate::netcore::gradient(&store, |tape, bound| {
            let pred = net.forward_var(tape, bound, tape.constant(xb));
            let err = tape.sub(pred, tape.constant(yb));
            Ok(tape.mean(tape.square(err)))
        })
        .and_then(|(_, grads)| adam.step(&mut store, &grads, cfg.lr));
        match result {
            Ok(()) => {}
            Err(e) if e.is_divergence() => {
                log::warn!("ensemble member (seed {seed}) diverged at step {step}: {e}");
                return Ok(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Some(EnsembleMember { store, net, seed }))
}

/// Trains `cfg.members` nets with MSE loss, each from its own seed.
/// Diverged members are dropped; at least two must survive.
pub fn train_deep_ensemble(data: &RegressionData, cfg: &EnsembleConfig) -> Result<DeepEnsemble> {
    cfg.validate()?;
    train_members(data, cfg, &cfg.member_seeds())
}

/// As [`train_deep_ensemble`] with explicit member seeds.
pub fn train_members(
    data: &RegressionData,
    cfg: &EnsembleConfig,
    seeds: &[u64],
) -> Result<DeepEnsemble> {
    if data.is_empty() {
        return Err(Error::EmptyData("ensemble training data is empty".into()));
    }
    let x_scale = Standardizer::fit(&data.x);
    let y_scale = Standardizer::fit(&data.y);
    let x = x_scale.apply(&data.x);
    let y = y_scale.apply(&data.y);
    let mut members = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        if let Some(m) = train_member(&x, &y, cfg, seed)? {
            members.push(m);
        }
    }
    if members.len() < 2 {
        return Err(Error::non_finite(
            format!(
                "ensemble: only {} of {} members survived",
                members.len(),
                seeds.len()
            ),
            f64::NAN,
        ));
    }
    Ok(DeepEnsemble {
        members,
        x_scale,
        y_scale,
        config: cfg.clone(),
    })
}

impl DeepEnsemble {
    /// Per-member predictions on the original scale.
    pub fn member_predictions(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let xs = self.x_scale.apply(x);
        self.members
            .iter()
            .map(|m| Ok(self.y_scale.invert(&m.net.forward_batch(&m.store, &xs)?)))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = &self.config;
        let mut m = Manifest::new();
        m.set("type", "ensemble");
        m.set("members", self.members.len());
        m.set("train_steps", c.train_steps);
        m.set("weight_decay", c.weight_decay);
        m.set("lr", c.lr);
        m.set(
            "hidden",
            c.hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.set("activation", c.activation);
        m.set("batch_size", c.batch_size);
        m.set("seed", c.seed);
        m.set(
            "member_seeds",
            self.members
                .iter()
                .map(|m| m.seed.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        let fmt = crate::netcore::checkpoint::format_f64_list;
        m.set("scale.x.mean", fmt(self.x_scale.mean.as_slice().unwrap()));
        m.set("scale.x.std", fmt(self.x_scale.std.as_slice().unwrap()));
        m.set("scale.y.mean", fmt(self.y_scale.mean.as_slice().unwrap()));
        m.set("scale.y.std", fmt(self.y_scale.std.as_slice().unwrap()));
        for (i, member) in self.members.iter().enumerate() {
            let mut mm = Manifest::new();
            mm.set("kind", "ensemble-member");
            mm.set(
                "widths",
                member
                    .net
                    .widths()
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            save_checkpoint(&dir.join(format!("member{i}")), &member.store, &mm)?;
        }
        m.write(&dir.join("manifest.txt"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let m = Manifest::read(&path)?;
        if m.get("type") != Some("ensemble") {
            return Err(Error::format(&path, "not an ensemble checkpoint"));
        }
        let usizes = |key: &str| -> Result<Vec<usize>> {
            m.get(key)
                .ok_or_else(|| Error::format(&path, format!("missing key {key}")))?
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::format(&path, format!("bad {key}")))
                })
                .collect()
        };
        let config = EnsembleConfig {
            members: m.parse_key("members", &path)?,
            train_steps: m.parse_key("train_steps", &path)?,
            weight_decay: m.parse_key("weight_decay", &path)?,
            lr: m.parse_key("lr", &path)?,
            hidden: usizes("hidden")?,
            activation: m.parse_key("activation", &path)?,
            batch_size: m.parse_key("batch_size", &path)?,
            seed: m.parse_key("seed", &path)?,
        };
        let seeds: Vec<u64> = m
            .get("member_seeds")
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::format(&path, "bad member seed"))
            })
            .collect::<Result<_>>()?;
        let scale = |p: &str| -> Result<Standardizer> {
            Ok(Standardizer {
                mean: m.parse_list(&format!("{p}.mean"), &path)?.into(),
                std: m.parse_list(&format!("{p}.std"), &path)?.into(),
            })
        };
        let x_scale = scale("scale.x")?;
        let y_scale = scale("scale.y")?;
        let w = widths(&config, x_scale.dim(), y_scale.dim());
        let members = seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| {
                let (store, _) = load_checkpoint(&dir.join(format!("member{i}")))?;
                let net = DenseNet::attach(&store, "net", &w, config.activation)?;
                Ok(EnsembleMember { store, net, seed })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            x_scale,
            y_scale,
            config,
        })
    }
}

/// Mean and population standard deviation across members. Member outputs
/// are reduced in sorted order, so the result does not depend on member
/// order down to the last bit.
pub fn ensemble_predict(
    ensemble: &DeepEnsemble,
    x: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let preds = ensemble.member_predictions(x)?;
    let n = preds.len() as f64;
    let dim = preds[0].dim();
    let mut mean = Array2::zeros(dim);
    let mut std = Array2::zeros(dim);
    let mut vals = vec![0.0; preds.len()];
    for idx in ndarray::indices(dim) {
        for (v, p) in vals.iter_mut().zip(&preds) {
            *v = p[idx];
        }
        vals.sort_by(f64::total_cmp);
        let mu = vals.iter().sum::<f64>() / n;
        mean[idx] = mu;
        std[idx] = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
    }
    Ok((mean, std))
}
