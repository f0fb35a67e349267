use std::fs;
use std::io::Read;

use flate2::read::GzDecoder;
use ibuq::datagen::HousingTable;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const HOUSING_FILE: &str = "housing.csv";
const MEMBER: &str = "cal_housing.data";

/// Pulls `cal_housing.data` out of a gzipped tarball.
pub fn extract_statlib(archive: &[u8]) -> CliResult<String> {
    let mut tar = tar::Archive::new(GzDecoder::new(archive));
    let entries = tar
        .entries()
        .map_err(|e| CliError::Fetch(format!("unreadable archive: {e}")))?;
    for entry in entries {
        let mut entry = entry.map_err(|e| CliError::Fetch(format!("unreadable archive: {e}")))?;
        let is_data = entry
            .path()
            .ok()
            .and_then(|p| p.file_name().map(|f| f == MEMBER))
            .unwrap_or(false);
        if is_data {
            let mut text = String::new();
            entry
                .read_to_string(&mut text)
                .map_err(|e| CliError::Fetch(format!("{MEMBER}: {e}")))?;
            return Ok(text);
        }
    }
    Err(CliError::Fetch(format!("archive has no {MEMBER}")))
}

pub fn run(c: &RunConfig) -> CliResult<()> {
    let url = c.raw("url");
    let out = c.path("out");
    let response = ureq::get(url)
        .call()
        .map_err(|e| CliError::Fetch(format!("{url}: {e}")))?;
    let mut archive = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut archive)
        .map_err(|e| CliError::Fetch(format!("{url}: {e}")))?;
    let text = extract_statlib(&archive)?;
    let table = HousingTable::from_statlib(&text).map_err(CliError::Fetch)?;
    c.write(&out)?;
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    table.to_csv(&out.join(HOUSING_FILE))?;
    println!(
        "wrote {} rows to {}",
        table.len(),
        out.join(HOUSING_FILE).display()
    );
    Ok(())
}
