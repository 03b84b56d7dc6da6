//! Run directories: one per `sir` invocation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::Failure;

pub const SEQUENCE: &str = "sequence.json";
pub const GRID: &str = "grid.json";
pub const SETTINGS: &str = "settings.json";
pub const HASH: &str = "inputs.sha256";

#[derive(Debug, Serialize, Deserialize)]
pub struct Settings {
    pub schema_version: u32,
    pub tool_version: String,
    pub input: String,
    pub variable_nodes: Vec<String>,
    pub rounds: usize,
    pub grid_k: usize,
    pub pump_ids: Vec<String>,
    pub pump_states: Vec<bool>,
    pub sign_pattern: Vec<i8>,
    pub energy_cost: f64,
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Write-temp-then-rename in the target's directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| Failure::Error(format!("cannot write {}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn create(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Error(format!("cannot create {}: {e}", dir.display())))
}

pub fn read<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T, Failure> {
    let path = dir.join(name);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}
