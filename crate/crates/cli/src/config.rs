//! Layered configuration: defaults, then command-line flags, then the
//! config file, then (for sweeps) one `[[sweep]]` entry.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::CliError;

pub const SWEEP_KEY: &str = "sweep";

pub fn load_table(path: &Path) -> Result<Table, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    raw.parse::<Table>()
        .map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))
}

/// Merge `top` into `base`; nested tables merge key by key.
pub fn overlay(base: &mut Table, top: &Table) {
    for (key, value) in top {
        match (base.get_mut(key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => overlay(b, t),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

/// `flags` overlaid with each of `layers` in turn, read back as `T`.
/// Unknown keys are rejected by name.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, layers: &[&Table], origin: &str) -> Result<T, CliError> {
    let mut table = Table::try_from(flags).map_err(|e| CliError::usage(format!("flags: {e}")))?;
    for layer in layers {
        overlay(&mut table, layer);
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::usage(format!("{origin}: {}", e.message())))
}

/// The config file without its sweep list, and the sweep entries.
pub fn split_sweep(mut table: Table) -> Result<(Table, Vec<Table>), CliError> {
    let sweep = match table.remove(SWEEP_KEY) {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::Table(t) => Ok(t),
                other => Err(CliError::usage(format!(
                    "sweep entries must be tables, found {}",
                    other.type_str()
                ))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(CliError::usage(format!(
                "`sweep` must be an array of tables, found {}",
                other.type_str()
            )))
        }
    };
    Ok((table, sweep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ttlqa::ttl::{Mode, TtlConfig};

    #[test]
    fn file_overrides_flags_and_sweeps_override_file() {
        let flags = TtlConfig {
            k: 3,
            steps: Some(50),
            ..TtlConfig::default()
        };
        let file: Table = "mode = \"k_neighbor\"\nsteps = 80\n[model]\nd = 16\n[[sweep]]\nsteps = 120\n"
            .parse()
            .unwrap();
        let (base, sweep) = split_sweep(file).unwrap();
        let cfg: TtlConfig = resolve(&flags, &[&base], "cfg").unwrap();
        assert_eq!(
            (cfg.mode, cfg.k, cfg.steps, cfg.model.d),
            (Mode::KNeighbor, 3, Some(80), 16)
        );
        assert_eq!(cfg.model.pmax, 384);
        let swept: TtlConfig = resolve(&flags, &[&base, &sweep[0]], "cfg").unwrap();
        assert_eq!(swept.steps, Some(120));
    }

    #[test]
    fn unknown_keys_are_named() {
        let file: Table = "neighbours = 4".parse().unwrap();
        let e = resolve(&TtlConfig::default(), &[&file], "cfg.toml").unwrap_err();
        assert_eq!(e.code(), 2);
        assert!(e.to_string().contains("neighbours"), "{e}");
    }
}
