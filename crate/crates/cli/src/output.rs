//! Report and artifact files. Reports are JSON with a fixed key order;
//! artifacts are comma-separated with a header row and LF line ends.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    /// SHA-256 of the system file bytes.
    pub input_digest: String,
    pub config: Value,
    pub results: Value,
    pub artifacts: Vec<String>,
    /// Seconds; `null` unless timing was requested.
    pub wall_time: Option<f64>,
}

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` through a buffered writer and flushes it before returning.
    pub fn write<F>(&mut self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .and_then(|_| w.get_ref().sync_all())
            .map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn artifacts(&self) -> Vec<String> {
        self.written.clone()
    }

    pub fn write_report(&mut self, name: &str, report: &RunReport) -> CliResult<()> {
        let text = serde_json::to_string_pretty(report).expect("reports serialize");
        self.write(name, |w| writeln!(w, "{text}"))
    }
}

/// Float formatting for CSV cells: shortest round-trip form, empty for `None`.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn row<W: Write>(w: &mut W, cells: &[String]) -> std::io::Result<()> {
    writeln!(w, "{}", cells.join(","))
}
