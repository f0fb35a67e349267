//! Checkpoint directories: a `manifest.txt` of `key=value` lines plus one raw
//! little-endian `f64` file per named parameter.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::params::ParamStore;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const FORMAT_VERSION: &str = "1";

/// Ordered `key=value` text record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        assert!(
            !key.contains('=') && !key.contains('\n'),
            "bad manifest key {key:?}"
        );
        assert!(!value.contains('\n'), "manifest values must be single-line");
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Looks up `key` and parses it, naming `path` in errors.
    pub fn parse_key<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format(path, format!("missing key {key}")))?;
        raw.trim()
            .parse()
            .map_err(|_| Error::format(path, format!("bad value for {key}: {raw}")))
    }

    pub fn parse_list(&self, key: &str, path: &Path) -> Result<Vec<f64>> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format(path, format!("missing key {key}")))?;
        parse_f64_list(raw).map_err(|msg| Error::format(path, format!("{key}: {msg}")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut m = Manifest::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text).map_err(|msg| Error::format(path, msg))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

/// Formats floats so that they parse back bit-exactly.
pub fn format_f64_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_f64_list(raw: &str) -> std::result::Result<Vec<f64>, String> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {s:?}"))
        })
        .collect()
}

pub fn write_f64_block(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_block(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, "length is not a multiple of 8 bytes"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes `store` and `manifest` into `dir` (created if needed). Parameter
/// shapes are recorded in the manifest as `param.<name>=rows,cols`.
pub fn save_checkpoint(dir: &Path, store: &ParamStore, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = manifest.clone();
    m.set("format_version", FORMAT_VERSION);
    m.set("param_count", store.len());
    for (name, value) in store.iter() {
        m.set(
            format!("param.{name}"),
            format!("{},{}", value.nrows(), value.ncols()),
        );
        write_f64_block(&dir.join(format!("{name}.f64")), value.iter().copied())?;
    }
    m.write(&dir.join(MANIFEST_FILE))
}

/// Reads a checkpoint written by [`save_checkpoint`]; parameters come back in
/// manifest order.
pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, Manifest)> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest = Manifest::read(&mpath)?;
    let mut store = ParamStore::new();
    for (key, shape) in manifest.entries() {
        let Some(name) = key.strip_prefix("param.") else {
            continue;
        };
        let (r, c) = shape
            .split_once(',')
            .and_then(|(r, c)| {
                Some((
                    r.trim().parse::<usize>().ok()?,
                    c.trim().parse::<usize>().ok()?,
                ))
            })
            .ok_or_else(|| Error::format(&mpath, format!("bad shape for {name}: {shape}")))?;
        let path = dir.join(format!("{name}.f64"));
        let data = read_f64_block(&path)?;
        let arr = Array2::from_shape_vec((r, c), data)
            .map_err(|_| Error::format(&path, format!("expected {r}x{c} values")))?;
        store.add(name, arr);
    }
    let expected: usize = manifest.parse_key("param_count", &mpath)?;
    if expected != store.len() {
        return Err(Error::format(&mpath, "param_count disagrees with entries"));
    }
    Ok((store, manifest))
}
