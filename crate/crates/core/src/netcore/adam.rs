use ndarray::{Array2, Zip};

use super::params::ParamStore;
use crate::{Error, Result};

/// Adam moment accumulators and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: Vec<Array2<f64>>,
    pub second_moment: Vec<Array2<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty coefficient folded into the gradient (`g + wd·θ`).
    pub weight_decay: f64,
}

impl AdamState {
    /// Zeroed accumulators shaped like `store`, with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(store: &ParamStore) -> Self {
        Self::with_hyper(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Array2<f64>> = store
            .values()
            .iter()
            .map(|v| Array2::zeros(v.dim()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1,
            beta2,
            eps,
            weight_decay: 0.0,
        }
    }

    /// One bias-corrected Adam descent step on `store`.
    ///
    /// Rejects the whole update (and leaves state untouched) if any gradient
    /// entry is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Array2<f64>], lr: f64) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::shape(
                format!("{} gradient tensors", store.len()),
                grads.len(),
            ));
        }
        for (i, (g, p)) in grads.iter().zip(store.values()).enumerate() {
            if g.dim() != p.dim() {
                return Err(Error::shape(
                    format!("{:?}", p.dim()),
                    format!("{:?}", g.dim()),
                ));
            }
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::non_finite(
                    format!("gradient of {}", store.name(super::params::ParamId(i))),
                    *bad,
                ));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for ((p, g), (m, v)) in store.values_mut().iter_mut().zip(grads).zip(
            self.first_moment
                .iter_mut()
                .zip(self.second_moment.iter_mut()),
        ) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g + wd * *p;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
