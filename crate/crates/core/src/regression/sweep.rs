use std::path::Path;

use ndarray::Array2;

use super::model::{train_regression, RegressionConfig};
use crate::datagen::{write_csv, RegressionData};
use crate::ibcore::IbTerms;
use crate::{Error, Result};

/// Selected run for one β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub seed: u64,
    pub objective: f64,
    pub iyz: f64,
    pub ixz: f64,
    /// Runs dropped because they diverged.
    pub excluded: usize,
}

fn finite(t: &IbTerms) -> bool {
    t.objective.is_finite() && t.iyz.is_finite() && t.ixz.is_finite()
}

/// The run with the largest finite objective; earlier seeds win ties.
pub fn select_best(runs: &[(u64, IbTerms)]) -> Option<(u64, IbTerms)> {
    runs.iter()
        .filter(|(_, t)| finite(t))
        .fold(None, |best: Option<(u64, IbTerms)>, &(s, t)| match best {
            Some((_, b)) if b.objective >= t.objective => best,
            _ => Some((s, t)),
        })
}

/// Runs `run(β, seed)` for every pair and keeps the best run per β.
/// Diverged runs are skipped; any other error aborts the sweep.
pub fn sweep_with(
    betas: &[f64],
    seeds: &[u64],
    run: &mut dyn FnMut(f64, u64) -> Result<IbTerms>,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one seed".into(),
        ));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut runs = Vec::with_capacity(seeds.len());
        let mut excluded = 0;
        for &seed in seeds {
            match run(beta, seed) {
                Ok(t) if finite(&t) => runs.push((seed, t)),
                Ok(_) => excluded += 1,
                Err(e) if e.is_divergence() => {
                    log::warn!("beta {beta}, seed {seed} diverged: {e}");
                    excluded += 1;
                }
                Err(e) => return Err(e.context(format!("beta {beta}, seed {seed}"))),
            }
        }
        let (seed, t) = select_best(&runs)
            .ok_or_else(|| Error::non_finite(format!("every run at beta {beta}"), f64::NAN))?;
        rows.push(SweepRow {
            beta,
            seed,
            objective: t.objective,
            iyz: t.iyz,
            ixz: t.ixz,
            excluded,
        });
    }
    Ok(rows)
}

/// Trains one model per (β, seed) and reports each β's best final terms.
pub fn info_plane_sweep(
    data: &RegressionData,
    base: &RegressionConfig,
    betas: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    sweep_with(betas, seeds, &mut |beta, seed| {
        let mut cfg = base.clone().with_seed(seed);
        cfg.ib.beta = beta;
        Ok(train_regression(data, &cfg)?.final_terms)
    })
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let table = Array2::from_shape_fn((rows.len(), 6), |(i, c)| {
        let r = &rows[i];
        match c {
            0 => r.beta,
            1 => r.seed as f64,
            2 => r.objective,
            3 => r.iyz,
            4 => r.ixz,
            _ => r.excluded as f64,
        }
    });
    write_csv(
        path,
        &["beta", "seed", "objective", "iyz", "ixz", "excluded"],
        &table,
    )
}
