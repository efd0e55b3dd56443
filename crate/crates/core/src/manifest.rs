//! Run manifests and atomic file writes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(Error::io_at(&tmp))?;
    f.write_all(bytes).map_err(Error::io_at(&tmp))?;
    f.sync_all().map_err(Error::io_at(&tmp))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(Error::io_at(path))?;
    Ok(())
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Hex SHA-256 of a file's contents.
pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(Error::io_at(path))?))
}

/// Human-readable `key = value` record written next to command outputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub wall_seconds: f64,
    /// Free-form series such as a loss curve, one value per line entry.
    pub series: BTreeMap<String, Vec<f64>>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        RunManifest { command: command.into(), seed, ..Default::default() }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.config.insert(key.into(), value.to_string());
        self
    }

    pub fn input(&mut self, name: impl Into<String>, path: &Path) -> Result<&mut Self> {
        let hash = hash_file(path)?;
        self.inputs.insert(name.into(), format!("{} sha256:{hash}", path.display()));
        Ok(self)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "wall_seconds = {:.6}", self.wall_seconds);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        for (k, v) in &self.inputs {
            let _ = writeln!(s, "input.{k} = {v}");
        }
        for (i, p) in self.outputs.iter().enumerate() {
            let _ = writeln!(s, "output.{i} = {}", p.display());
        }
        for (k, vals) in &self.series {
            let joined: Vec<String> = vals.iter().map(|v| format!("{v:.9e}")).collect();
            let _ = writeln!(s, "series.{k} = {}", joined.join(","));
        }
        s
    }

    /// Parses the `key = value` text back into a flat map.
    pub fn parse(text: &str) -> BTreeMap<String, String> {
        text.lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}
