use std::cell::Cell;

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::ibcore::net_widths;
use crate::netcore::{Activation, Bound, DenseNet, Init, ParamStore, SeededRng, Tape, Var};
use crate::{Error, Result};

/// Upper clamp on `log σ`, as in the regression decoder.
const LOG_SIGMA_MAX: f64 = 20.0;

/// Two-channel DeepONet: branch `ℝ^{d_z} → ℝ^{2n}`, trunk `ℝ^{d_q} → ℝ^{2n}`,
/// and `(μ, log σ) = (Σ_{i<n} b_i t_i, Σ_{i≥n} b_i t_i)`.
///
/// `log σ` is clamped below at `log σ_floor`.
#[derive(Debug, Clone)]
pub struct DeepONetHead {
    branch: DenseNet,
    trunk: DenseNet,
    features: usize,
    sigma_floor: f64,
    branch_rows: Cell<usize>,
}

impl DeepONetHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        latent_dim: usize,
        query_dim: usize,
        hidden: &[usize],
        features: usize,
        activation: Activation,
        sigma_floor: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let branch = DenseNet::new(
            store,
            &format!("{prefix}.branch"),
            &net_widths(latent_dim, hidden, 2 * features),
            activation,
            Init::XavierNormal,
            rng,
        );
        let trunk = DenseNet::new(
            store,
            &format!("{prefix}.trunk"),
            &net_widths(query_dim, hidden, 2 * features),
            activation,
            Init::XavierNormal,
            rng,
        );
        Self::from_nets(branch, trunk, sigma_floor)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn attach(
        store: &ParamStore,
        prefix: &str,
        latent_dim: usize,
        query_dim: usize,
        hidden: &[usize],
        features: usize,
        activation: Activation,
        sigma_floor: f64,
    ) -> Result<Self> {
        let branch = DenseNet::attach(
            store,
            &format!("{prefix}.branch"),
            &net_widths(latent_dim, hidden, 2 * features),
            activation,
        )?;
        let trunk = DenseNet::attach(
            store,
            &format!("{prefix}.trunk"),
            &net_widths(query_dim, hidden, 2 * features),
            activation,
        )?;
        Ok(Self::from_nets(branch, trunk, sigma_floor))
    }

    /// Wraps existing nets; both must end in the same even width.
    pub fn from_nets(branch: DenseNet, trunk: DenseNet, sigma_floor: f64) -> Self {
        assert_eq!(
            branch.output_dim(),
            trunk.output_dim(),
            "branch and trunk widths differ"
        );
        assert!(
            branch.output_dim().is_multiple_of(2),
            "output width must be even"
        );
        assert!(sigma_floor > 0.0, "sigma floor must be positive");
        Self {
            features: branch.output_dim() / 2,
            branch,
            trunk,
            sigma_floor,
            branch_rows: Cell::new(0),
        }
    }

    pub fn branch(&self) -> &DenseNet {
        &self.branch
    }

    pub fn trunk(&self) -> &DenseNet {
        &self.trunk
    }

    /// Features per channel (`n`).
    pub fn features(&self) -> usize {
        self.features
    }

    pub fn latent_dim(&self) -> usize {
        self.branch.input_dim()
    }

    pub fn query_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    /// Number of latent rows pushed through the branch net so far.
    pub fn branch_evaluations(&self) -> usize {
        self.branch_rows.get()
    }

    pub fn trunk_features(&self, store: &ParamStore, query: &Array2<f64>) -> Result<Array2<f64>> {
        self.trunk.forward_batch(store, query)
    }

    /// `(μ, log σ)`, each `k × P`, for `k` latents and precomputed trunk
    /// features of `P` points. The branch runs once per latent row.
    pub fn eval_with_trunk(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
        trunk: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::shape(
                format!("{} latent columns", self.latent_dim()),
                z.ncols(),
            ));
        }
        let b = self.branch.forward_batch(store, z)?;
        self.branch_rows.set(self.branch_rows.get() + z.nrows());
        let n = self.features;
        let mu = b.slice(s![.., ..n]).dot(&trunk.slice(s![.., ..n]).t());
        let lo = self.sigma_floor.ln();
        let log_sigma = b
            .slice(s![.., n..])
            .dot(&trunk.slice(s![.., n..]).t())
            .mapv(|v| v.clamp(lo, LOG_SIGMA_MAX));
        Ok((mu, log_sigma))
    }

    pub fn eval(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
        query: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        if query.ncols() != self.query_dim() {
            return Err(Error::shape(
                format!("{} query columns", self.query_dim()),
                query.ncols(),
            ));
        }
        let t = self.trunk_features(store, query)?;
        self.eval_with_trunk(store, z, &t)
    }

    /// Taped evaluation at `K` (latent row, query row) pairs: `z` is `B × d_z`,
    /// `query` is `U × d_q`, and pair `k` uses rows `owner[k]` and `point[k]`.
    /// Returns `(μ, log σ)`, each `K × 1`.
    pub fn eval_pairs_var(
        &self,
        tape: &Tape,
        bound: &Bound,
        z: Var,
        query: Var,
        owner: &[usize],
        point: &[usize],
    ) -> (Var, Var) {
        let b = self.branch.forward_var(tape, bound, z);
        let t = self.trunk.forward_var(tape, bound, query);
        let prod = tape.mul(tape.gather_rows(b, owner), tape.gather_rows(t, point));
        let n = self.features;
        let mu = tape.sum_cols(tape.slice_cols(prod, 0, n));
        let log_sigma = tape.clamp(
            tape.sum_cols(tape.slice_cols(prod, n, 2 * n)),
            self.sigma_floor.ln(),
            LOG_SIGMA_MAX,
        );
        (mu, log_sigma)
    }
}

/// `(μ, log σ)` at every query point for a single latent `z`.
pub fn onet_eval(
    head: &DeepONetHead,
    store: &ParamStore,
    z: ArrayView1<f64>,
    query: &Array2<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let z = z.to_owned().insert_axis(ndarray::Axis(0));
    let (mu, log_sigma) = head.eval(store, &z, query)?;
    Ok((mu.row(0).to_owned(), log_sigma.row(0).to_owned()))
}
