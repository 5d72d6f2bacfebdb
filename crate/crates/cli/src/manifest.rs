//! Flat `key = value` record of a run: resolved settings, input paths with
//! their SHA-256 digests, and the tool version.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::io::{read_text, write_text};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("tool", "wcl");
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| CliError::Input(format!("manifest is missing {key:?}")))
    }

    /// Records `path` and the digest of its contents under `key`.
    pub fn set_input(&mut self, key: &str, path: &Path) -> CliResult<()> {
        self.set(key, path.display());
        self.set(&format!("{key}_sha256"), file_digest(path)?);
        Ok(())
    }

    /// Checks that the file recorded under `key` still has its digest.
    pub fn verify_input(&self, key: &str) -> CliResult<&Path> {
        let path = Path::new(self.require(key)?);
        let expected = self.require(&format!("{key}_sha256"))?;
        let actual = file_digest(path)?;
        if actual != expected {
            return Err(CliError::Input(format!(
                "{} changed since the manifest was written",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn parse(path: &Path, text: &str) -> CliResult<Self> {
        let mut m = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| CliError::at_line(path, i + 1, "expected `key = value`"))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::parse(path, &read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.render())
    }
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
