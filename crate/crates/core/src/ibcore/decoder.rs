use ndarray::{s, Array1, Array2};

use super::encoder::{diag_gaussian_log_prob, diag_gaussian_log_prob_var, net_widths};
use crate::netcore::{Activation, Bound, DenseNet, Init, ParamStore, SeededRng, Tape, Var};
use crate::{Error, Result};

/// Upper clamp on `log σ`; keeps `exp` finite early in training.
const LOG_SIGMA_MAX: f64 = 20.0;

/// Diagonal Gaussian `q_D(y|z) = N(μ(z), diag σ(z)²)`. The net's output
/// is `(μ, log σ)` stacked, with `log σ` clamped below at `log σ_floor`.
#[derive(Debug, Clone)]
pub struct GaussianDecoder {
    net: DenseNet,
    output_dim: usize,
    sigma_floor: f64,
}

impl GaussianDecoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        latent_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        sigma_floor: f64,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(sigma_floor > 0.0, "sigma floor must be positive");
        let widths = net_widths(latent_dim, hidden, 2 * output_dim);
        let net = DenseNet::new(store, prefix, &widths, activation, Init::XavierNormal, rng);
        Self {
            net,
            output_dim,
            sigma_floor,
        }
    }

    pub fn attach(
        store: &ParamStore,
        prefix: &str,
        latent_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        sigma_floor: f64,
    ) -> Result<Self> {
        let widths = net_widths(latent_dim, hidden, 2 * output_dim);
        Ok(Self {
            net: DenseNet::attach(store, prefix, &widths, activation)?,
            output_dim,
            sigma_floor,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    /// `(μ, log σ)` nodes, each `n×d_y`.
    pub fn params_var(&self, tape: &Tape, bound: &Bound, z: Var) -> (Var, Var) {
        let out = self.net.forward_var(tape, bound, z);
        let d = self.output_dim;
        let mu = tape.slice_cols(out, 0, d);
        let log_sigma = tape.clamp(
            tape.slice_cols(out, d, 2 * d),
            self.sigma_floor.ln(),
            LOG_SIGMA_MAX,
        );
        (mu, log_sigma)
    }

    /// `log q_D(y|z)` per row (`n×1`).
    pub fn log_prob_var(&self, tape: &Tape, bound: &Bound, y: Var, z: Var) -> Var {
        let (mu, log_sigma) = self.params_var(tape, bound, z);
        diag_gaussian_log_prob_var(tape, y, mu, log_sigma)
    }

    pub fn params(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = self.net.forward_batch(store, z)?;
        let d = self.output_dim;
        let lo = self.sigma_floor.ln();
        let mu = out.slice(s![.., ..d]).to_owned();
        let log_sigma = out.slice(s![.., d..]).mapv(|v| v.clamp(lo, LOG_SIGMA_MAX));
        Ok((mu, log_sigma))
    }

    pub fn log_prob(
        &self,
        store: &ParamStore,
        y: &Array2<f64>,
        z: &Array2<f64>,
    ) -> Result<Array1<f64>> {
        if y.ncols() != self.output_dim || y.nrows() != z.nrows() {
            return Err(Error::shape(
                format!("{}x{} targets", z.nrows(), self.output_dim),
                format!("{}x{}", y.nrows(), y.ncols()),
            ));
        }
        let (mu, log_sigma) = self.params(store, z)?;
        Ok(diag_gaussian_log_prob(y, &mu, &log_sigma))
    }
}
