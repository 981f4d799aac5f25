//! CSV tables and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::CliError;

/// Fixed 17-significant-digit rendering.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn numeric_row(&mut self, cells: &[f64]) {
        self.row(cells.iter().map(|x| num(*x)).collect());
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridEcho {
    pub t_max: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub version: String,
    pub grid: Option<GridEcho>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub summary: serde_json::Value,
}

/// Collects output files for one run and writes the manifest last.
pub struct RunDir {
    dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(RunDir { dir: dir.to_path_buf(), outputs: Vec::new(), started: Instant::now() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let mut f = fs::File::create(self.dir.join(name))?;
        f.write_all(contents.as_bytes())?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write(name, &table.render())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }

    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        grid: Option<GridEcho>,
        seed: Option<u64>,
        summary: serde_json::Value,
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            grid,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
            seed,
            summary,
        };
        let s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(self.dir.join("manifest.json"), s + "\n")?;
        Ok(())
    }
}
