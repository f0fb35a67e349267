use ndarray::{Array2, Axis};
use rand_distr::{Beta, Distribution};

use crate::netcore::SeededRng;
use crate::{Error, Result};

/// Mixup augmentation: convex combinations of each sample with a randomly
/// permuted partner, `λ ~ Beta(α, α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupConfig {
    pub enabled: bool,
    pub alpha: f64,
}

impl MixupConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mixup alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            enabled: true,
            alpha,
        })
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            alpha: 1.0,
        }
    }
}

/// Draws one `λ ~ Beta(α, α)`.
pub fn sample_lambda(alpha: f64, rng: &mut SeededRng) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::InvalidParameter(format!("Beta({alpha}, {alpha}): {e}")))?;
    Ok(beta.sample(rng))
}

/// `λ_b x_b + (1 − λ_b) x_{perm_b}`, and likewise for `y`.
pub fn mixup_with(
    x: &Array2<f64>,
    y: &Array2<f64>,
    perm: &[usize],
    lambdas: &[f64],
) -> (Array2<f64>, Array2<f64>) {
    let xp = x.select(Axis(0), perm);
    let yp = y.select(Axis(0), perm);
    let mix = |a: &Array2<f64>, b: &Array2<f64>| {
        let mut out = a.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let l = lambdas[i];
            row.zip_mut_with(&b.row(i), |v, w| *v = l * *v + (1.0 - l) * w);
        }
        out
    };
    (mix(x, &xp), mix(y, &yp))
}

/// Applies mixup with a fresh permutation and fresh `λ`s; identity when
/// disabled.
pub fn mixup_batch(
    x: &Array2<f64>,
    y: &Array2<f64>,
    cfg: &MixupConfig,
    rng: &mut SeededRng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.nrows() == 0 {
        return Err(Error::EmptyData("mixup batch is empty".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::shape(
            format!("{} target rows", x.nrows()),
            y.nrows(),
        ));
    }
    if !cfg.enabled {
        return Ok((x.clone(), y.clone()));
    }
    let perm = rng.permutation(x.nrows());
    let beta = Beta::new(cfg.alpha, cfg.alpha)
        .map_err(|e| Error::InvalidParameter(format!("Beta({a}, {a}): {e}", a = cfg.alpha)))?;
    let lambdas: Vec<f64> = (0..x.nrows()).map(|_| beta.sample(rng)).collect();
    Ok(mixup_with(x, y, &perm, &lambdas))
}
