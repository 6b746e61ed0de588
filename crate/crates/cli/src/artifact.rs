use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// All artifact writes go through a temp file in the same directory followed
/// by a rename, so a crash never leaves a half-written file behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(tmp, path).with_context(|| format!("cannot move into place {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read artifact {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed artifact {}", path.display()))
}

/// Column-labeled CSV with the effective config hash on a comment line, so
/// every plot-data file is traceable to the exact configuration.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(config_hash: &str, columns: &[&str]) -> Self {
        let mut text = format!("# config_hash={config_hash}\n");
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.text.as_bytes())
    }
}

/// Shortest round-trip decimal form; identical configs therefore produce
/// bit-identical CSV bytes.
pub fn num(v: f64) -> String {
    format!("{v}")
}
