use std::thread;

use ibuq::ibcore::IbTerms;
use ibuq::regression::{sweep_with, train_regression, write_sweep_csv};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::settings;
use crate::train::read_regression_data;

pub const SWEEP_FILE: &str = "sweep.csv";

/// Trains every (β, seed) pair, `workers` at a time, and keeps the best
/// seed per β. Results do not depend on the worker count.
pub fn run(c: &RunConfig) -> CliResult<()> {
    let output_dim: usize = c.get("output_dim")?;
    let data = read_regression_data(&c.path("data"), output_dim)?;
    let betas: Vec<f64> = c.list("betas")?;
    let seeds: Vec<u64> = c.list("seeds")?;
    let workers: usize = c.get("workers")?;
    if betas.is_empty() || seeds.is_empty() || workers == 0 {
        return Err(CliError::usage(
            "`betas` and `seeds` must be non-empty and `workers` positive",
        ));
    }
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0)) {
        return Err(CliError::usage(format!("β must be non-negative, got {b}")));
    }
    let mut configs = Vec::with_capacity(betas.len() * seeds.len());
    for &beta in &betas {
        for &seed in &seeds {
            configs.push(settings::regression_config(
                c,
                data.x.ncols(),
                output_dim,
                seed,
                beta,
            )?);
        }
    }
    let out = c.path("out");
    c.write(&out)?;

    let mut results: Vec<Option<ibuq::Result<IbTerms>>> =
        (0..configs.len()).map(|_| None).collect();
    let chunk = configs.len().div_ceil(workers);
    thread::scope(|s| {
        for (cfgs, slots) in configs.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let data = &data;
            s.spawn(move || {
                for (cfg, slot) in cfgs.iter().zip(slots) {
                    *slot = Some(train_regression(data, cfg).map(|t| t.final_terms));
                }
            });
        }
    });

    let mut results = results.into_iter().map(|r| r.expect("every run finished"));
    let rows = sweep_with(&betas, &seeds, &mut |_, _| results.next().unwrap())?;
    write_sweep_csv(&out.join(SWEEP_FILE), &rows)?;
    for r in &rows {
        println!(
            "β = {:<4} seed {}  I(Y;Z) {:.4}  I(X;Z) {:.4}  ({} excluded)",
            r.beta, r.seed, r.iyz, r.ixz, r.excluded
        );
    }
    Ok(())
}
