use ndarray::{Array1, Array2};

use crate::netcore::{
    clamped_sigmoid, Activation, Bound, DenseNet, Init, ParamStore, SeededRng, Tape, Var,
};
use crate::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gated stochastic encoder `z = m(x) ⊙ z̄(x) + (1 − m(x)) ⊙ z₀`, `z₀ ~ N(0, I)`.
///
/// The gate `m` is a sigmoid squashed into `[ε, 1 − ε]`, so the conditional
/// `q_E(z|x) = N(m ⊙ z̄, diag(1 − m)²)` never degenerates.
#[derive(Debug, Clone)]
pub struct Encoder {
    m_net: DenseNet,
    zbar_net: DenseNet,
    latent_dim: usize,
    gate_eps: f64,
}

/// Tape nodes of one encoder pass.
#[derive(Debug, Clone, Copy)]
pub struct EncodedVar {
    pub z: Var,
    pub gate: Var,
    /// `m ⊙ z̄`
    pub mean: Var,
    /// `1 − m`
    pub std: Var,
}

impl Encoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        activation: Activation,
        gate_eps: f64,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(
            gate_eps > 0.0 && gate_eps < 0.5,
            "gate epsilon must lie in (0, 0.5)"
        );
        let widths = widths(input_dim, hidden, latent_dim);
        let m_net = DenseNet::new(
            store,
            &format!("{prefix}.m"),
            &widths,
            activation,
            Init::XavierNormal,
            rng,
        );
        let zbar_net = DenseNet::new(
            store,
            &format!("{prefix}.zbar"),
            &widths,
            activation,
            Init::XavierNormal,
            rng,
        );
        Self {
            m_net,
            zbar_net,
            latent_dim,
            gate_eps,
        }
    }

    pub fn attach(
        store: &ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        activation: Activation,
        gate_eps: f64,
    ) -> Result<Self> {
        let widths = widths(input_dim, hidden, latent_dim);
        Ok(Self {
            m_net: DenseNet::attach(store, &format!("{prefix}.m"), &widths, activation)?,
            zbar_net: DenseNet::attach(store, &format!("{prefix}.zbar"), &widths, activation)?,
            latent_dim,
            gate_eps,
        })
    }

    pub fn m_net(&self) -> &DenseNet {
        &self.m_net
    }

    pub fn zbar_net(&self) -> &DenseNet {
        &self.zbar_net
    }

    pub fn input_dim(&self) -> usize {
        self.m_net.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn gate_eps(&self) -> f64 {
        self.gate_eps
    }

    pub fn gate_var(&self, tape: &Tape, bound: &Bound, x: Var) -> Var {
        let raw = self.m_net.forward_var(tape, bound, x);
        let e = self.gate_eps;
        tape.add_scalar(tape.scale(tape.sigmoid(raw), 1.0 - 2.0 * e), e)
    }

    /// Reparameterized draw with the standard-normal noise `z0` supplied.
    pub fn encode_var(&self, tape: &Tape, bound: &Bound, x: Var, z0: Var) -> EncodedVar {
        let gate = self.gate_var(tape, bound, x);
        let zbar = self.zbar_net.forward_var(tape, bound, x);
        let mean = tape.mul(gate, zbar);
        let std = tape.add_scalar(tape.neg(gate), 1.0);
        let z = tape.add(mean, tape.mul(std, z0));
        EncodedVar { z, gate, mean, std }
    }

    /// `log q_E(z|x)` per row (`n×1`).
    pub fn log_prob_var(&self, tape: &Tape, enc: &EncodedVar, z: Var) -> Var {
        diag_gaussian_log_prob_var(tape, z, enc.mean, tape.ln(enc.std))
    }

    pub fn gate(&self, store: &ParamStore, x: &Array2<f64>) -> Result<Array2<f64>> {
        let e = self.gate_eps;
        Ok(self
            .m_net
            .forward_batch(store, x)?
            .mapv(|v| clamped_sigmoid(v, e)))
    }

    pub fn latent_mean(&self, store: &ParamStore, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.zbar_net.forward_batch(store, x)
    }

    /// `(z, m(x))` for the given noise.
    pub fn encode_with_noise(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        z0: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let gate = self.gate(store, x)?;
        let zbar = self.latent_mean(store, x)?;
        if z0.dim() != gate.dim() {
            return Err(Error::shape(
                format!("{:?} noise", gate.dim()),
                format!("{:?}", z0.dim()),
            ));
        }
        let z = &gate * &zbar + &(1.0 - &gate) * z0;
        Ok((z, gate))
    }

    pub fn encode_sample(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        rng: &mut SeededRng,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let z0 = rng.normal_matrix(x.nrows(), self.latent_dim);
        self.encode_with_noise(store, x, &z0)
    }

    /// `log q_E(z|x)` per row.
    pub fn log_prob(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
        x: &Array2<f64>,
    ) -> Result<Array1<f64>> {
        let gate = self.gate(store, x)?;
        let zbar = self.latent_mean(store, x)?;
        if z.dim() != gate.dim() {
            return Err(Error::shape(
                format!("{:?} latents", gate.dim()),
                format!("{:?}", z.dim()),
            ));
        }
        let mean = &gate * &zbar;
        let log_std = (1.0 - &gate).mapv(f64::ln);
        Ok(diag_gaussian_log_prob(z, &mean, &log_std))
    }
}

fn widths(input_dim: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut w = vec![input_dim];
    w.extend_from_slice(hidden);
    w.push(out);
    w
}

pub(crate) fn net_widths(input_dim: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    widths(input_dim, hidden, out)
}

/// Diagonal Gaussian log-density per row (`n×1`).
pub(crate) fn diag_gaussian_log_prob_var(tape: &Tape, v: Var, mean: Var, log_std: Var) -> Var {
    let d = tape.shape(v).1 as f64;
    let r = tape.mul(tape.sub(v, mean), tape.exp(tape.neg(log_std)));
    let per = tape.add(tape.scale(tape.square(r), 0.5), log_std);
    tape.add_scalar(tape.neg(tape.sum_cols(per)), -0.5 * d * LN_2PI)
}

pub(crate) fn diag_gaussian_log_prob(
    v: &Array2<f64>,
    mean: &Array2<f64>,
    log_std: &Array2<f64>,
) -> Array1<f64> {
    let d = v.ncols() as f64;
    let mut out = Array1::from_elem(v.nrows(), -0.5 * d * LN_2PI);
    for (i, o) in out.iter_mut().enumerate() {
        for j in 0..v.ncols() {
            let ls = log_std[[i, j]];
            let r = (v[[i, j]] - mean[[i, j]]) * (-ls).exp();
            *o -= 0.5 * r * r + ls;
        }
    }
    out
}
