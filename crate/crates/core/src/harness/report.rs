//! Versioned experiment reports (pretty-printed JSON) and plot-data export.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AblationPoint, ExperimentConfig, RepetitionReport, Stage, StageError};
use crate::error::{Error, Result};
use crate::evaluation::{pr_plot_data, roc_plot_data, AttackReport};
use crate::scores::ScoreLabel;

pub const REPORT_VERSION: &str = "mia-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RepetitionStatus {
    Completed { report: Box<RepetitionReport> },
    Failed { stage: Stage, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionOutcome {
    pub index: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RepetitionStatus,
}

impl RepetitionOutcome {
    pub fn completed(index: usize, report: RepetitionReport) -> Self {
        Self { index, seed: report.seed, status: RepetitionStatus::Completed { report: Box::new(report) } }
    }

    pub fn failed(index: usize, seed: u64, e: StageError) -> Self {
        Self { index, seed, status: RepetitionStatus::Failed { stage: e.stage, message: e.error.to_string() } }
    }

    pub fn report(&self) -> Option<&RepetitionReport> {
        match &self.status {
            RepetitionStatus::Completed { report } => Some(report),
            RepetitionStatus::Failed { .. } => None,
        }
    }
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "crate::float_serde")]
    pub mean: f64,
    #[serde(with = "crate::float_serde")]
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std, n }
    }
}

/// Aggregated metrics for one (attack, member ratio) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub label: ScoreLabel,
    pub member_ratio: f64,
    /// Metric name → summary over completed repetitions.
    pub metrics: BTreeMap<String, Summary>,
}

impl CellAggregate {
    pub fn metric(&self, name: &str) -> Option<&Summary> {
        self.metrics.get(name)
    }
}

fn cell_metrics(r: &AttackReport) -> Vec<(String, f64)> {
    let mut m = vec![
        ("auc".to_string(), r.auc),
        ("accuracy".to_string(), r.accuracy),
        ("best_accuracy".to_string(), r.best_accuracy),
        ("ppv".to_string(), r.ppv),
        ("ppv_zero_fpr_count".to_string(), r.ppv_zero_fpr_count as f64),
    ];
    if let Some(s) = r.simulated_accuracy {
        m.push(("simulated_accuracy".into(), s));
    }
    m.extend(r.tpr_at_fpr.iter().map(|p| (format!("tpr@fpr={}", p.fpr), p.tpr)));
    m.extend(r.precision_at_k.iter().map(|p| (format!("precision@{}", p.k), p.precision)));
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub ablation: Option<AblationPoint>,
    pub repetitions: Vec<RepetitionOutcome>,
    /// Number of repetitions that completed and enter the aggregates.
    pub effective_repetitions: usize,
    pub complete: bool,
    pub aggregates: Vec<CellAggregate>,
    /// Target/reference accuracy statistics and gap-attack figures.
    pub model_aggregates: BTreeMap<String, Summary>,
}

impl ExperimentReport {
    pub fn assemble(config: ExperimentConfig, ablation: Option<AblationPoint>, repetitions: Vec<RepetitionOutcome>) -> Self {
        let done: Vec<&RepetitionReport> = repetitions.iter().filter_map(|r| r.report()).collect();

        // Cells appear in the same order in every repetition.
        let mut aggregates = Vec::new();
        if let Some(first) = done.first() {
            for cell in &first.cells {
                let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for rep in &done {
                    if let Some(r) = rep.cell(cell.report.label, cell.member_ratio) {
                        for (k, v) in cell_metrics(r) {
                            values.entry(k).or_default().push(v);
                        }
                    }
                }
                aggregates.push(CellAggregate {
                    label: cell.report.label,
                    member_ratio: cell.member_ratio,
                    metrics: values.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect(),
                });
            }
        }

        let mut model_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for rep in &done {
            let s = &rep.model_stats;
            let g = &rep.gap;
            for (k, v) in [
                ("target_train_accuracy", s.target_train_accuracy),
                ("target_test_accuracy", s.target_test_accuracy),
                ("reference_train_accuracy", s.reference_train_accuracy),
                ("reference_member_accuracy", s.reference_member_accuracy),
                ("reference_test_accuracy", s.reference_test_accuracy),
                ("gap_accuracy", g.gap_accuracy),
                ("calibrated_gap_accuracy", g.calibrated_gap_accuracy),
            ] {
                model_values.entry(k.to_string()).or_default().push(v);
            }
        }

        Self {
            version: REPORT_VERSION.to_string(),
            effective_repetitions: done.len(),
            complete: done.len() == repetitions.len(),
            config,
            ablation,
            repetitions,
            aggregates,
            model_aggregates: model_values.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect(),
        }
    }

    pub fn completed(&self) -> impl Iterator<Item = &RepetitionReport> {
        self.repetitions.iter().filter_map(|r| r.report())
    }

    pub fn aggregate(&self, label: ScoreLabel, member_ratio: f64) -> Option<&CellAggregate> {
        self.aggregates.iter().find(|a| a.label == label && a.member_ratio == member_ratio)
    }

    /// Mean of `metric` for a cell, if present.
    pub fn mean(&self, label: ScoreLabel, member_ratio: f64, metric: &str) -> Option<f64> {
        self.aggregate(label, member_ratio)?.metric(metric).map(|s| s.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(|v| v.as_str()).unwrap_or("<missing>");
        if found != REPORT_VERSION {
            return Err(Error::Version { found: found.to_string(), expected: REPORT_VERSION.to_string() });
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub fn write_report(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report.to_json()?)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    ExperimentReport::from_json(&fs::read_to_string(path)?)
}

/// Writes one ROC and one PR table per repetition and cell into `dir`, named
/// `rep{index}_{attack}_ratio{r}_{roc|pr}.tsv`. Returns the files written.
pub fn export_plot_data(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for outcome in &report.repetitions {
        let Some(rep) = outcome.report() else { continue };
        for cell in &rep.cells {
            let label = cell.report.label.to_string().replace(['(', ')'], "_").trim_end_matches('_').to_string();
            let stem = format!("rep{}_{}_ratio{}", outcome.index, label, cell.member_ratio);
            for (suffix, body) in [("roc", roc_plot_data(&cell.report.roc)), ("pr", pr_plot_data(&cell.report.pr))] {
                let path = dir.join(format!("{stem}_{suffix}.tsv"));
                fs::write(&path, body)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
