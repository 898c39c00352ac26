use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::config_error;

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope written to `summary.json` by every command.
#[derive(Debug, Serialize)]
pub struct Summary<'a, C: Serialize, B: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    /// Unit of each numeric field, keyed by its dotted path in this document.
    pub units: BTreeMap<&'static str, &'static str>,
    pub config: &'a C,
    #[serde(flatten)]
    pub body: B,
}

/// An output directory whose files have been checked against clobbering.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    /// Creates `root` if needed and refuses to proceed when any of `files`
    /// already exists, unless `force` is set.
    pub fn prepare(root: &Path, files: &[&str], force: bool) -> Result<Self> {
        if root.exists() && !root.is_dir() {
            return Err(config_error(format!(
                "output path {} is not a directory",
                root.display()
            )));
        }
        if !force {
            if let Some(f) = files.iter().map(|f| root.join(f)).find(|p| p.exists()) {
                return Err(config_error(format!(
                    "{} already exists; pass --force to overwrite",
                    f.display()
                )));
            }
        }
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

pub fn units(entries: &[(&'static str, &'static str)]) -> BTreeMap<&'static str, &'static str> {
    entries.iter().copied().collect()
}
