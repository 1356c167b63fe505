//! Run reports, CSV tables and plot specs written to the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mcre_core::mcre::VerifierRow;
use mcre_core::report::CsvRecord;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::LabError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// Everything a run produced, serialized as `report.toml`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub model: String,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub csv: Vec<String>,
    pub notes: Vec<String>,
    pub constants: BTreeMap<String, f64>,
    pub assumptions: Vec<Verdict>,
    pub config: ExperimentConfig,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, config: ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            model: config.model.name().to_string(),
            seed,
            status: "pending".into(),
            error: None,
            csv: Vec::new(),
            notes: Vec::new(),
            constants: BTreeMap::new(),
            assumptions: Vec::new(),
            config,
        }
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.constants.insert(name.to_string(), value);
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.assumptions.push(Verdict { name: name.to_string(), pass, detail: detail.into() });
    }

    /// Verdict summarizing verifier rows of one assumption.
    pub fn verdict_rows(&mut self, name: &str, rows: &[VerifierRow]) {
        let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.probe.as_str()).collect();
        let detail = if failed.is_empty() { String::new() } else { format!("failing probes: {}", failed.join(", ")) };
        self.verdict(name, failed.is_empty(), detail);
    }

    pub fn first_failure(&self) -> Option<&Verdict> {
        self.assumptions.iter().find(|v| !v.pass)
    }
}

/// Declarative description of one chart over a CSV file.
#[derive(Debug, Clone, Serialize)]
pub struct PlotSpec {
    pub title: String,
    pub data: String,
    pub x: String,
    pub y: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<[String; 2]>,
    pub log_y: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
}

/// Output directory for one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    emit_plots: bool,
}

impl OutputDir {
    pub fn create(root: &Path, emit_plots: bool) -> Result<Self, LabError> {
        std::fs::create_dir_all(root).map_err(|source| LabError::Io { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf(), emit_plots })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_csv<R: CsvRecord>(&self, report: &mut RunReport, name: &str, rows: &[R]) -> Result<(), LabError> {
        let path = self.root.join(name);
        let io = |e: csv::Error| LabError::Io { path: path.clone(), source: e.into() };
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(R::HEADER).map_err(io)?;
        for r in rows {
            w.write_record(r.fields()).map_err(io)?;
        }
        w.flush().map_err(|source| LabError::Io { path: path.clone(), source })?;
        report.csv.push(name.to_string());
        Ok(())
    }

    pub fn write_plot(&self, spec: PlotSpec) -> Result<(), LabError> {
        if !self.emit_plots {
            return Ok(());
        }
        let stem = spec.data.trim_end_matches(".csv").to_string();
        let path = self.root.join(format!("{stem}.plot.json"));
        let text = serde_json::to_string_pretty(&spec).expect("plot spec serializes");
        std::fs::write(&path, text + "\n").map_err(|source| LabError::Io { path, source })
    }

    pub fn write_report(&self, report: &RunReport) -> Result<PathBuf, LabError> {
        let path = self.root.join("report.toml");
        let text = toml::to_string(report).map_err(|e| LabError::Experiment(format!("report serialization: {e}")))?;
        std::fs::write(&path, text).map_err(|source| LabError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

pub fn plot(title: &str, data: &str, x: &str, y: &[&str]) -> PlotSpec {
    PlotSpec {
        title: title.to_string(),
        data: data.to_string(),
        x: x.to_string(),
        y: y.iter().map(|s| s.to_string()).collect(),
        band: None,
        log_y: false,
        group_by: None,
    }
}
