//! Scenario runner: validated configuration in, data files plus a
//! [`RunReport`] out.
//!
//! A scenario is a fixed sequence of named stages. Each stage computes,
//! then hands its tables to the single [`OutputWriter`]; a failing stage
//! stops the run, and the report written next to the partial outputs
//! names it. Wall-clock timings are kept on the report but never
//! serialised, so that identical configurations give identical files.

pub mod config;
pub mod output;
mod scenarios;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

pub use config::{designed_topology, validate_config, OutputFormat, Scenario, ScenarioConfig};
pub use output::{Cell, OutputWriter, Table};
pub use scenarios::design_config;

/// Name of the report file every run leaves in its output directory.
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub stages: Vec<StageRecord>,
    /// Files written, relative to the output directory, in write order.
    pub manifest: Vec<String>,
    pub checks: Vec<Check>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
    pub failed_stage: Option<String>,
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
}

impl RunReport {
    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("stage '{stage}' failed: {message}")]
    Stage {
        stage: String,
        message: String,
        report: Box<RunReport>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Error text of a failed stage.
#[derive(Debug)]
pub(crate) struct StageError(String);

impl<E: Display> From<E> for StageError {
    fn from(e: E) -> Self {
        StageError(e.to_string())
    }
}

pub(crate) type StageResult<T> = Result<T, StageError>;

pub(crate) struct Run<'a> {
    pub cfg: &'a ScenarioConfig,
    pub out: OutputWriter,
    pub report: RunReport,
}

impl Run<'_> {
    /// Runs one stage, recording its outcome and duration.
    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Self) -> StageResult<T>,
    ) -> Result<T, PipelineError> {
        let t0 = Instant::now();
        let r = f(self);
        self.report.timings.push((name.to_string(), t0.elapsed()));
        match r {
            Ok(v) => {
                self.report.stages.push(StageRecord {
                    name: name.into(),
                    ok: true,
                    error: None,
                });
                Ok(v)
            }
            Err(StageError(message)) => {
                self.report.stages.push(StageRecord {
                    name: name.into(),
                    ok: false,
                    error: Some(message.clone()),
                });
                self.report.failed_stage = Some(name.into());
                // Best effort: the stage error is what gets reported.
                let _ = self.finish();
                Err(PipelineError::Stage {
                    stage: name.into(),
                    message,
                    report: Box::new(self.report.clone()),
                })
            }
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.report.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn diag(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.report.diagnostics.insert(key.into(), v);
    }

    pub fn table(&mut self, stem: &str, t: &Table) -> StageResult<()> {
        self.out.table(stem, t)?;
        Ok(())
    }

    fn finish(&mut self) -> std::io::Result<()> {
        self.report.manifest = self.out.manifest().to_vec();
        if !self.report.manifest.iter().any(|m| m == REPORT_FILE) {
            self.report.manifest.push(REPORT_FILE.into());
        }
        let report = self.report.clone();
        self.out.json(REPORT_FILE, &report)
    }
}

/// Executes the configured scenario and writes its outputs below
/// `config.output_dir`. Nothing is written for an invalid configuration.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, PipelineError> {
    let errs = config.validate();
    if !errs.is_empty() {
        return Err(PipelineError::Config(errs));
    }
    let scenario = config
        .scenario_kind()
        .map_err(|e| PipelineError::Config(vec![e]))?;
    let dir = Path::new(&config.output_dir);
    let io_err = |source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    };
    let out = OutputWriter::create(dir, config.format).map_err(io_err)?;
    let mut run = Run {
        cfg: config,
        out,
        report: RunReport {
            scenario: scenario.to_string(),
            config: config.clone(),
            stages: Vec::new(),
            manifest: Vec::new(),
            checks: Vec::new(),
            diagnostics: BTreeMap::new(),
            failed_stage: None,
            timings: Vec::new(),
        },
    };
    scenarios::run(scenario, &mut run)?;
    run.finish().map_err(io_err)?;
    Ok(run.report)
}
