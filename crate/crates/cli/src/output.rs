//! Run artifacts: `results.csv`, snapshot matrices and `manifest.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cemflow::grid::FineGrid;
use cemflow::ErrorReport;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn write_results(&mut self, rows: &[ErrorReport]) -> Result<(), CliError> {
        let path = self.path("results.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
        w.write_record(ErrorReport::COLUMNS).map_err(|e| io(&path, e))?;
        for r in rows {
            w.write_record(r.fields()).map_err(|e| io(&path, e))?;
        }
        w.flush().map_err(|e| io(&path, e))?;
        self.record("results.csv");
        Ok(())
    }

    /// `ny + 1` lines of `nx + 1` values, bottom row first.
    pub fn write_snapshot(&mut self, name: &str, grid: &FineGrid, v: &[f64]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = String::with_capacity(v.len() * 22);
        for row in v.chunks(grid.nodes_x()) {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.12e}")).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| io(&path, e))?;
        self.record(name);
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
        w.write_record(header).map_err(|e| io(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| io(&path, e))?;
        }
        w.flush().map_err(|e| io(&path, e))?;
        self.record(name);
        Ok(())
    }

    /// Writes `manifest.json` listing every artifact with its hash.
    pub fn write_manifest(&mut self, mut manifest: Manifest) -> Result<(), CliError> {
        for name in &self.written {
            let path = self.path(name);
            let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
            manifest.outputs.push(OutputEntry { file: name.clone(), sha256: sha256_hex(&bytes) });
        }
        let path = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| io(&path, e))?;
        let mut f = fs::File::create(&path).map_err(|e| io(&path, e))?;
        f.write_all(text.as_bytes()).and_then(|_| f.write_all(b"\n")).map_err(|e| io(&path, e))?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub core_version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Hash of the config text, the effective seed and any medium file.
    pub input_sha256: String,
    pub config_text: String,
    pub config: serde_json::Value,
    pub domain: [f64; 4],
    pub fine: [usize; 2],
    pub reference: [usize; 2],
    pub outputs: Vec<OutputEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use cemflow::DomainSpec;

    #[test]
    fn snapshot_shape() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let grid = FineGrid::new(DomainSpec::unit_square(), 3, 2).unwrap();
        let v: Vec<f64> = (0..grid.num_nodes()).map(|k| k as f64).collect();
        out.write_snapshot("u.txt", &grid, &v).unwrap();
        let text = fs::read_to_string(dir.path().join("u.txt")).unwrap();
        let rows: Vec<Vec<f64>> = text.lines().map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.len() == 4));
        assert_eq!(rows[1][0], 4.0);
    }
}
