//! A trained target saved to disk together with the split it was trained on,
//! so it can be attacked (or warm-started for forgetting) in a later run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::RepetitionOutcome;
use super::{attack_target, seeds, train_target, AtStage, DataConfig, ExperimentConfig, ExperimentReport, Stage, TrainedModels};
use crate::calibration::train_references;
use crate::data::{make_split, SplitPlan};
use crate::error::{Error, Result};
use crate::model::{accuracy, Model, TrainConfig};

pub const TARGET_VERSION: &str = "mia-target/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetArtifact {
    pub version: String,
    /// Where the training data came from; attacks reload it from here.
    pub data: DataConfig,
    pub plan: SplitPlan,
    pub train: TrainConfig,
    pub model: Model,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl TargetArtifact {
    /// Splits with the base seed and trains the target of repetition 0.
    pub fn train(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let data = cfg.data.load()?;
        let plan = make_split(&data, cfg.split.member_fraction, cfg.split.shadow_fraction, cfg.base_seed)?;
        let model = train_target(cfg, &data, &plan)?;
        Ok(Self {
            version: TARGET_VERSION.into(),
            data: cfg.data.clone(),
            train_accuracy: accuracy(&model, &data, &plan.member_idx)?,
            test_accuracy: accuracy(&model, &data, &plan.nonmember_idx)?,
            train: TrainConfig { seed: seeds::target(plan.seed), ..cfg.target.clone() },
            plan,
            model,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let found = value.get("version").and_then(|v| v.as_str()).unwrap_or("<missing>");
        if found != TARGET_VERSION {
            return Err(Error::Version { found: found.to_string(), expected: TARGET_VERSION.to_string() });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Attacks a saved target: trains references on its shadow set and evaluates
/// every configured attack. The data source recorded in the artifact replaces
/// `cfg.data`; everything else comes from `cfg`.
pub fn attack_saved_target(cfg: &ExperimentConfig, artifact: &TargetArtifact) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.data = artifact.data.clone();
    cfg.repetitions = 1;
    cfg.validate()?;
    let data = cfg.data.load()?;
    artifact.plan.check_invariants(data.n_samples())?;
    if artifact.model.architecture().n_inputs() != data.n_features()
        || artifact.model.n_classes() != data.n_classes()
    {
        return Err(Error::Format("saved model does not fit the recorded dataset".into()));
    }

    let plan = &artifact.plan;
    let outcome = train_references(
        &data,
        &plan.shadow_idx,
        &cfg.calibration,
        &artifact.model,
        seeds::reference_base(plan.seed),
    )
    .at(Stage::TrainReferences)
    .and_then(|references| {
        attack_target(&cfg, &data, plan, &TrainedModels { target: artifact.model.clone(), references })
    });
    let outcome = match outcome {
        Ok(rep) => RepetitionOutcome::completed(0, rep),
        Err(e) => RepetitionOutcome::failed(0, plan.seed, e),
    };
    Ok(ExperimentReport::assemble(cfg, None, vec![outcome]))
}
