//! Flat `key=value` run configuration: defaults, then a config file, then
//! flags. The resolved set is written next to every run's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ibuq::netcore::{LrSchedule, Manifest};

use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.txt";

/// Keys a command accepts, each with its default (`None` = required).
pub type Schema<'a> = &'a [(&'static str, Option<&'static str>)];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    command: String,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Layers `file` and then `overrides` over the schema defaults. The
    /// file may carry a `command` key, which must match.
    pub fn resolve(
        command: &str,
        schema: Schema,
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> CliResult<Self> {
        let mut values: BTreeMap<String, String> = schema
            .iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v.to_string())))
            .collect();
        let mut set = |k: &str, v: &str, origin: &str| -> CliResult<()> {
            if !schema.iter().any(|(key, _)| *key == k) {
                let known: Vec<&str> = schema.iter().map(|(k, _)| *k).collect();
                return Err(CliError::usage(format!(
                    "unknown setting `{k}` ({origin}); `{command}` accepts: {}",
                    known.join(", ")
                )));
            }
            values.insert(k.to_string(), v.to_string());
            Ok(())
        };
        if let Some(path) = file {
            let m = Manifest::read(path)?;
            for (k, v) in m.entries() {
                if k == "command" {
                    if v != command {
                        return Err(CliError::usage(format!(
                            "{} was written by `{v}`, not `{command}`",
                            path.display()
                        )));
                    }
                    continue;
                }
                set(k, v, &path.display().to_string())?;
            }
        }
        for (k, v) in overrides {
            set(k, v, "flag")?;
        }
        let missing: Vec<String> = schema
            .iter()
            .filter(|(k, _)| !values.contains_key(*k))
            .map(|(k, _)| format!("--{}", k.replace('_', "-")))
            .collect();
        if !missing.is_empty() {
            return Err(CliError::usage(format!(
                "`{command}` requires {}",
                missing.join(", ")
            )));
        }
        Ok(Self {
            command: command.to_string(),
            values,
        })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not in the schema"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::usage(format!("invalid value `{raw}` for `{key}`")))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }

    /// `None` for an empty value or `auto`.
    pub fn optional<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.raw(key) {
            "" | "auto" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::usage(format!("invalid entry `{s}` in `{key}`")))
            })
            .collect()
    }

    pub fn schedule(&self, base: &str, factor: &str, every: &str) -> CliResult<LrSchedule> {
        let (b, f, e): (f64, f64, usize) = (self.get(base)?, self.get(factor)?, self.get(every)?);
        if !(b > 0.0 && f > 0.0 && f <= 1.0 && e > 0) {
            return Err(CliError::usage(format!(
                "learning-rate schedule needs {base} > 0, 0 < {factor} <= 1 and {every} > 0"
            )));
        }
        Ok(LrSchedule::new(b, f, e))
    }

    pub fn render(&self) -> String {
        let mut m = Manifest::new();
        m.set("command", &self.command);
        for (k, v) in &self.values {
            m.set(k.as_str(), v);
        }
        m.render()
    }

    /// Writes `config.txt` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, self.render()).map_err(|e| CliError::io(path, e))
    }
}
