//! Difficulty calibration: subtract the mean score that reference models,
//! trained without the target's members, assign to the same sample.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{correct_mask, init_mlp, train, Model, TrainConfig};
use crate::rng::{seeded, stream};
use crate::scores::{ScoreLabel, ScoreSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Fresh models trained on the shadow data.
    FromScratch,
    /// Copies of the target that continue training on the shadow data.
    Forgetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub mode: CalibrationMode,
    pub n_reference_models: usize,
    /// Fraction of the shadow set each reference model sees, drawn without
    /// replacement independently per model.
    pub shadow_subsample_fraction: f64,
    pub reference_train: TrainConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            mode: CalibrationMode::FromScratch,
            n_reference_models: 1,
            shadow_subsample_fraction: 1.0,
            reference_train: TrainConfig::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reference_models == 0 {
            return Err(Error::Config("n_reference_models must be positive".into()));
        }
        let f = self.shadow_subsample_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("shadow_subsample_fraction must lie in (0, 1], got {f}")));
        }
        self.reference_train.validate()
    }

    /// Reference training settings for calibration-via-forgetting derived from
    /// the target's: a quarter of the epochs, same learning rate.
    pub fn forgetting_defaults(target: &TrainConfig) -> TrainConfig {
        TrainConfig { epochs: (target.epochs / 4).max(1), ..target.clone() }
    }
}

/// Shadow indices reference model `j` trains on.
pub fn reference_subsample(shadow_idx: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let size = ((fraction * shadow_idx.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let size = size.min(shadow_idx.len());
    if size == shadow_idx.len() {
        return shadow_idx.to_vec();
    }
    let mut rng = seeded(seed, stream::SUBSAMPLE);
    let mut picked = index::sample(&mut rng, shadow_idx.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|k| shadow_idx[k]).collect()
}

/// Trains `cfg.n_reference_models` reference models; model `j` uses seed
/// `base_seed + j` for its subsample, initialization and batch order.
pub fn train_references(
    data: &Dataset,
    shadow_idx: &[usize],
    cfg: &CalibrationConfig,
    target: &Model,
    base_seed: u64,
) -> Result<Vec<Model>> {
    cfg.validate()?;
    if shadow_idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    (0..cfg.n_reference_models)
        .into_par_iter()
        .map(|j| {
            let seed = base_seed.wrapping_add(j as u64);
            let subset = reference_subsample(shadow_idx, cfg.shadow_subsample_fraction, seed);
            let start = match cfg.mode {
                CalibrationMode::FromScratch => init_mlp(target.architecture(), seed),
                CalibrationMode::Forgetting => target.clone(),
            };
            let train_cfg = TrainConfig { seed, ..cfg.reference_train.clone() };
            train(&start, data, &subset, &train_cfg)
        })
        .collect()
}

/// `s_target(i) − mean_j s_ref_j(i)`.
pub fn calibrate_scores(target: &ScoreSet, references: &[ScoreSet]) -> Result<ScoreSet> {
    if references.is_empty() {
        return Err(Error::Misaligned("at least one reference score set is required".into()));
    }
    if target.label.calibrated {
        return Err(Error::Misaligned("target scores are already calibrated".into()));
    }
    for r in references {
        if r.label != target.label {
            return Err(Error::Misaligned(format!("score kind {} does not match {}", r.label, target.label)));
        }
        if r.sample_idx != target.sample_idx || r.is_member != target.is_member {
            return Err(Error::Misaligned("reference scores cover different samples".into()));
        }
    }
    let k = references.len() as f64;
    let scores = target
        .scores
        .iter()
        .enumerate()
        .map(|(i, &s)| s - references.iter().map(|r| r.scores[i]).sum::<f64>() / k)
        .collect();
    let mut out = ScoreSet::new(
        ScoreLabel::calibrated(target.label.kind),
        scores,
        target.is_member.clone(),
        target.sample_idx.clone(),
    )?;
    out.metadata = target.metadata.clone();
    out.metadata.insert("n_references".into(), references.len().to_string());
    Ok(out)
}

/// Member iff the target classifies the sample correctly and the reference
/// does not.
pub fn calibrated_gap_decide(target: &Model, reference: &Model, data: &Dataset, idx: &[usize]) -> Result<Vec<bool>> {
    let t = correct_mask(target, data, idx)?;
    let r = correct_mask(reference, data, idx)?;
    Ok(t.into_iter().zip(r).map(|(t, r)| t && !r).collect())
}

/// Accuracy of the calibrated gap attack on balanced member/non-member sets
/// from the two models' joint correctness tables:
/// `½(1 − ε₂ + p_train − p_test + ε₁)`.
///
/// `p_train`/`p_test` are the target's accuracies on members/non-members;
/// `eps1` is the rate at which the reference is right and the target wrong on
/// members, `eps2` the rate at which the target is right and the reference
/// wrong on non-members.
pub fn calibrated_gap_accuracy(p_train: f64, p_test: f64, eps1: f64, eps2: f64) -> Result<f64> {
    for (name, v) in [("p_train", p_train), ("p_test", p_test), ("eps1", eps1), ("eps2", eps2)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(0.5 * (1.0 - eps2 + p_train - p_test + eps1))
}

/// Joint correctness rates of a target/reference pair on one sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub target_right_ref_right: f64,
    pub target_right_ref_wrong: f64,
    pub target_wrong_ref_right: f64,
    pub target_wrong_ref_wrong: f64,
}

impl GapTable {
    pub fn measure(target: &Model, reference: &Model, data: &Dataset, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let t = correct_mask(target, data, idx)?;
        let r = correct_mask(reference, data, idx)?;
        let mut counts = [0usize; 4];
        for (t, r) in t.into_iter().zip(r) {
            counts[(!t as usize) * 2 + (!r as usize)] += 1;
        }
        let n = idx.len() as f64;
        Ok(Self {
            target_right_ref_right: counts[0] as f64 / n,
            target_right_ref_wrong: counts[1] as f64 / n,
            target_wrong_ref_right: counts[2] as f64 / n,
            target_wrong_ref_wrong: counts[3] as f64 / n,
        })
    }

    pub fn target_accuracy(&self) -> f64 {
        self.target_right_ref_right + self.target_right_ref_wrong
    }
}
