use std::path::Path;

use ibuq::datagen::{
    build_operator_dataset, sample_discontinuous, split_housing, Band, HousingSplitConfig,
    HousingTable, OperatorDataConfig, PdeConfig,
};
use ibuq::netcore::SeededRng;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const DISCONTINUOUS_FILE: &str = "data.csv";

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn discontinuous(c: &RunConfig) -> CliResult<()> {
    let n: usize = c.get("n")?;
    let noise: f64 = c.get("noise")?;
    let seed: u64 = c.get("seed")?;
    let out = c.path("out");
    let data = sample_discontinuous(n, noise, &mut SeededRng::new(seed))
        .map_err(|e| CliError::usage(e.to_string()))?;
    c.write(&out)?;
    data.to_csv(&out.join(DISCONTINUOUS_FILE))?;
    let (my, sy) = mean_std(data.y.iter().copied());
    println!(
        "wrote {} samples to {} (y mean {my:.4}, std {sy:.4})",
        data.len(),
        out.join(DISCONTINUOUS_FILE).display()
    );
    Ok(())
}

pub fn operator(c: &RunConfig) -> CliResult<()> {
    let pde = PdeConfig {
        nx: c.get("nx")?,
        nt: c.get("nt")?,
        diffusion: c.get("diffusion")?,
        reaction: c.get("reaction")?,
        ..PdeConfig::default()
    };
    if pde.nx < 3 || pde.nt < 2 {
        return Err(CliError::usage("the grid needs nx >= 3 and nt >= 2"));
    }
    let cfg = OperatorDataConfig {
        sensor_noise: c.get("sensor_noise")?,
        pde,
        ..OperatorDataConfig::new(c.get("n")?, c.get("l")?, c.get("noise")?)
    };
    if !(cfg.length > 0.0) {
        return Err(CliError::usage("`l` must be positive"));
    }
    let out = c.path("out");
    let data = build_operator_dataset(&cfg, c.get("seed")?)?;
    c.write(&out)?;
    data.save(&out)?;
    let (mu, su) = mean_std(data.u.iter().copied());
    let (ms, ss) = mean_std(data.s_clean.iter().copied());
    println!(
        "wrote {} functions to {} (D = {}, k = {}; u mean {mu:.4}, std {su:.4}; s mean {ms:.4}, std {ss:.4})",
        data.len(),
        out.display(),
        data.config.pde.diffusion,
        data.config.pde.reaction
    );
    Ok(())
}

pub fn band_file(band: Band) -> String {
    format!("{}.csv", band.name())
}

pub const ID_TRAIN_FILE: &str = "id_train.csv";
pub const ID_TEST_FILE: &str = "id_test.csv";

pub fn housing_split(c: &RunConfig) -> CliResult<()> {
    let thresholds: Vec<f64> = c.list("thresholds")?;
    let thresholds: [f64; 3] = thresholds
        .try_into()
        .map_err(|_| CliError::usage("`thresholds` needs exactly three values"))?;
    let cfg = HousingSplitConfig {
        k: c.get("k")?,
        thresholds,
        split_seed: c.get("split_seed")?,
        expected_rows: c.optional("expect_rows")?,
    };
    let input = c.path("input");
    if !input.exists() {
        return Err(CliError::usage(format!(
            "{} does not exist",
            input.display()
        )));
    }
    let table = HousingTable::from_csv(&input)?;
    let split = split_housing(&table, &cfg)?;
    let out = c.path("out");
    c.write(&out)?;
    write_split(&split, &out)?;
    let sizes = split.band_sizes();
    println!(
        "bands (id, ood1, ood2, ood3) = {:?}; id train {}, id test {}",
        sizes,
        split.id_train.len(),
        split.id_test.len()
    );
    Ok(())
}

fn write_split(split: &ibuq::datagen::HousingSplit, out: &Path) -> CliResult<()> {
    split
        .data(&split.id_train)
        .to_csv(&out.join(ID_TRAIN_FILE))?;
    split.data(&split.id_test).to_csv(&out.join(ID_TEST_FILE))?;
    for band in [Band::Part1, Band::Part2, Band::Part3] {
        split
            .data(&split.rows(band))
            .to_csv(&out.join(band_file(band)))?;
    }
    Ok(())
}
