//! Run directories: write-once files plus a checksummed manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Failure, Outcome};

/// Comma-separated row; `{:.16e}` keeps all 17 significant digits.
pub fn csv_row(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    format!("{}\n", cells.join(","))
}

#[derive(Serialize)]
struct Entry {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a str,
    command: &'a str,
    seed: u64,
    files: &'a [Entry],
}

pub struct RunDir {
    root: PathBuf,
    files: Vec<Entry>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root).map_err(|e| Failure::Io(format!("{}: {e}", root.display())))?;
        Ok(RunDir { root: root.to_path_buf(), files: Vec::new() })
    }

    /// Writes `name` unless an identical file is already there; a file
    /// with different content is never overwritten.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Outcome {
        let path = self.root.join(name);
        match std::fs::read(&path) {
            Ok(existing) if existing == bytes => {}
            Ok(_) => {
                return Err(Failure::Io(format!("{} exists with different content; use a fresh --out", path.display())))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                std::fs::write(&path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?
            }
            Err(e) => return Err(Failure::Io(format!("{}: {e}", path.display()))),
        }
        self.files.push(Entry { path: name.into(), bytes: bytes.len(), sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    pub fn write_manifest(&mut self, scenario: &str, command: &str, seed: u64) -> Outcome {
        let files = std::mem::take(&mut self.files);
        let m = Manifest { scenario, command, seed, files: &files };
        let mut text = serde_json::to_string_pretty(&m).map_err(|e| Failure::Io(e.to_string()))?;
        text.push('\n');
        let name = format!("manifest-{command}.json");
        self.write(&name, text.as_bytes())?;
        self.files.clear();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_exactly() {
        let v = [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324];
        let row = csv_row(&v);
        let back: Vec<f64> = row.trim_end().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(back, v);
    }
}
