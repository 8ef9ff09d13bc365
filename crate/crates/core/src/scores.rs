//! Membership scores. Every score is oriented so that a higher value means
//! "more likely a member".

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, clamped_ln, Model};
use crate::rng::{seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Loss,
    GradNorm,
    Confidence,
    Entropy,
    ModifiedEntropy,
    Merlin,
    Gap,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 7] = [
        ScoreKind::Loss,
        ScoreKind::GradNorm,
        ScoreKind::Confidence,
        ScoreKind::Entropy,
        ScoreKind::ModifiedEntropy,
        ScoreKind::Merlin,
        ScoreKind::Gap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Loss => "loss",
            ScoreKind::GradNorm => "grad_norm",
            ScoreKind::Confidence => "confidence",
            ScoreKind::Entropy => "entropy",
            ScoreKind::ModifiedEntropy => "modified_entropy",
            ScoreKind::Merlin => "merlin",
            ScoreKind::Gap => "gap",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown score kind `{s}`")))
    }
}

/// A score kind, optionally difficulty-calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScoreLabel {
    pub kind: ScoreKind,
    pub calibrated: bool,
}

impl ScoreLabel {
    pub fn raw(kind: ScoreKind) -> Self {
        Self { kind, calibrated: false }
    }

    pub fn calibrated(kind: ScoreKind) -> Self {
        Self { kind, calibrated: true }
    }
}

impl fmt::Display for ScoreLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.calibrated {
            write!(f, "calibrated({})", self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

/// Per-sample scores with ground-truth membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub label: ScoreLabel,
    pub scores: Vec<f64>,
    pub is_member: Vec<bool>,
    /// Dataset indices the scores belong to; used to check alignment.
    pub sample_idx: Vec<usize>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ScoreSet {
    pub fn new(label: ScoreLabel, scores: Vec<f64>, is_member: Vec<bool>, sample_idx: Vec<usize>) -> Result<Self> {
        if scores.len() != is_member.len() || scores.len() != sample_idx.len() {
            return Err(Error::Misaligned(format!(
                "{} scores, {} membership bits, {} sample indices",
                scores.len(),
                is_member.len(),
                sample_idx.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::OutOfRange(format!("score {i} is not finite ({})", scores[i])));
        }
        Ok(Self { label, scores, is_member, sample_idx, metadata: BTreeMap::new() })
    }

    /// Scores with membership bits only; sample indices are `0..n`.
    pub fn from_scores(label: ScoreLabel, scores: Vec<f64>, is_member: Vec<bool>) -> Result<Self> {
        let idx = (0..scores.len()).collect();
        Self::new(label, scores, is_member, idx)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_members(&self) -> usize {
        self.is_member.iter().filter(|&&m| m).count()
    }

    pub fn n_nonmembers(&self) -> usize {
        self.len() - self.n_members()
    }

    pub fn member_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().zip(&self.is_member).filter(|(_, &m)| m).map(|(&s, _)| s)
    }

    pub fn nonmember_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().zip(&self.is_member).filter(|(_, &m)| !m).map(|(&s, _)| s)
    }

    /// Keeps only the entries whose sample index is in `keep` (in this set's order).
    pub fn restrict_to(&self, keep: &[usize]) -> ScoreSet {
        let keep: std::collections::BTreeSet<usize> = keep.iter().copied().collect();
        let mut out = ScoreSet { scores: vec![], is_member: vec![], sample_idx: vec![], ..self.clone() };
        for ((&s, &m), &i) in self.scores.iter().zip(&self.is_member).zip(&self.sample_idx) {
            if keep.contains(&i) {
                out.scores.push(s);
                out.is_member.push(m);
                out.sample_idx.push(i);
            }
        }
        out
    }

    pub fn with_metadata(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }
}

fn probs(model: &Model, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    model.forward(x)
}

fn check_label(model: &Model, y: usize) -> Result<()> {
    if y >= model.n_classes() {
        return Err(Error::LabelOutOfRange { label: y, n_classes: model.n_classes() });
    }
    Ok(())
}

/// `ln p_y`, the negated cross-entropy.
pub fn loss_score(model: &Model, x: ArrayView1<'_, f64>, y: usize) -> Result<f64> {
    Ok(-model.per_example_loss(x, y)?)
}

/// Negated L2 norm of the parameter gradient.
pub fn grad_norm_score(model: &Model, x: ArrayView1<'_, f64>, y: usize) -> Result<f64> {
    Ok(-model.per_example_grad_norm(x, y)?)
}

/// `max_i ln p_i`; does not look at the label.
pub fn confidence_score(model: &Model, x: ArrayView1<'_, f64>) -> Result<f64> {
    let p = probs(model, x)?;
    Ok(p.iter().map(|&v| clamped_ln(v)).fold(f64::NEG_INFINITY, f64::max))
}

/// Negative predictive entropy `Σ p_i ln p_i`.
pub fn entropy_score(model: &Model, x: ArrayView1<'_, f64>) -> Result<f64> {
    let p = probs(model, x)?;
    Ok(p.iter().map(|&v| v * clamped_ln(v)).sum())
}

/// Negated modified entropy
/// `−(1−p_y)·ln p_y − Σ_{i≠y} p_i·ln(1−p_i)`.
pub fn modified_entropy_score(model: &Model, x: ArrayView1<'_, f64>, y: usize) -> Result<f64> {
    check_label(model, y)?;
    let p = probs(model, x)?;
    let mut mentr = -(1.0 - p[y]) * clamped_ln(p[y]);
    for (i, &pi) in p.iter().enumerate() {
        if i != y {
            mentr -= pi * clamped_ln(1.0 - pi);
        }
    }
    Ok(-mentr)
}

/// Fraction of Gaussian input perturbations `x + σξ` that strictly increase
/// the loss.
pub fn merlin_score(model: &Model, x: ArrayView1<'_, f64>, y: usize, sigma: f64, trials: usize, seed: u64) -> Result<f64> {
    merlin_score_stream(model, x, y, sigma, trials, seed, stream::NOISE_BASE)
}

/// [`merlin_score`] drawing noise from an explicit RNG stream.
pub fn merlin_score_stream(
    model: &Model,
    x: ArrayView1<'_, f64>,
    y: usize,
    sigma: f64,
    trials: usize,
    seed: u64,
    noise_stream: u64,
) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::OutOfRange(format!("merlin sigma must be positive, got {sigma}")));
    }
    if trials == 0 {
        return Err(Error::OutOfRange("merlin needs at least one trial".into()));
    }
    let base = model.per_example_loss(x, y)?;
    let mut rng = seeded(seed, noise_stream);
    let mut noisy = x.to_owned();
    let mut increases = 0usize;
    for _ in 0..trials {
        for (n, &v) in noisy.iter_mut().zip(x.iter()) {
            let z: f64 = rng.sample(StandardNormal);
            *n = v + sigma * z;
        }
        if model.per_example_loss(noisy.view(), y)? > base {
            increases += 1;
        }
    }
    Ok(increases as f64 / trials as f64)
}

/// 1 when the arg-max prediction is correct, else 0.
pub fn gap_score(model: &Model, x: ArrayView1<'_, f64>, y: usize) -> Result<f64> {
    check_label(model, y)?;
    Ok(if argmax(probs(model, x)?.view()) == y { 1.0 } else { 0.0 })
}

/// Two-threshold rule: member iff `loss ≥ tau_loss` and `merlin ≥ tau_merlin`.
pub fn morgan_decide(loss: &ScoreSet, merlin: &ScoreSet, tau_loss: f64, tau_merlin: f64) -> Result<Vec<bool>> {
    if loss.len() != merlin.len() || loss.sample_idx != merlin.sample_idx {
        return Err(Error::Misaligned("loss and merlin score sets cover different samples".into()));
    }
    Ok(loss.scores.iter().zip(&merlin.scores).map(|(&l, &m)| l >= tau_loss && m >= tau_merlin).collect())
}

/// Noise settings for the Merlin score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MerlinParams {
    /// Noise scale relative to the root-mean-square feature standard deviation.
    pub relative_sigma: f64,
    pub trials: usize,
}

impl Default for MerlinParams {
    fn default() -> Self {
        Self { relative_sigma: 0.01, trials: 100 }
    }
}

impl MerlinParams {
    /// Absolute noise scale for `data`.
    pub fn sigma_for(&self, data: &Dataset) -> f64 {
        let std = data.feature_std();
        let rms = (std.mapv(|s| s * s).sum() / std.len() as f64).sqrt();
        // Degenerate all-constant data still gets a usable scale.
        self.relative_sigma * if rms > 0.0 { rms } else { 1.0 }
    }
}

/// Extra inputs some score kinds need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KindParams {
    pub merlin: MerlinParams,
    /// Seed for score kinds that draw noise.
    pub seed: u64,
}

/// Computes a single sample's score of the given kind. Merlin noise for
/// dataset row `i` comes from stream `NOISE_BASE + i`.
pub fn score_sample(model: &Model, data: &Dataset, i: usize, kind: ScoreKind, params: &KindParams, sigma: f64) -> Result<f64> {
    let (x, y) = data.sample(i);
    match kind {
        ScoreKind::Loss => loss_score(model, x, y),
        ScoreKind::GradNorm => grad_norm_score(model, x, y),
        ScoreKind::Confidence => confidence_score(model, x),
        ScoreKind::Entropy => entropy_score(model, x),
        ScoreKind::ModifiedEntropy => modified_entropy_score(model, x, y),
        ScoreKind::Merlin => {
            merlin_score_stream(model, x, y, sigma, params.merlin.trials, params.seed, stream::NOISE_BASE + i as u64)
        }
        ScoreKind::Gap => gap_score(model, x, y),
    }
}

/// Scores every sample in `idx` and attaches the caller's membership bits.
pub fn score_batch(
    model: &Model,
    data: &Dataset,
    idx: &[usize],
    is_member: &[bool],
    kind: ScoreKind,
    params: &KindParams,
) -> Result<ScoreSet> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if idx.len() != is_member.len() {
        return Err(Error::Misaligned(format!("{} indices but {} membership bits", idx.len(), is_member.len())));
    }
    if let Some(&i) = idx.iter().find(|&&i| i >= data.n_samples()) {
        return Err(Error::OutOfRange(format!("sample index {i} out of range")));
    }
    let sigma = params.merlin.sigma_for(data);
    let scores = idx
        .par_iter()
        .map(|&i| score_sample(model, data, i, kind, params, sigma))
        .collect::<Result<Vec<_>>>()?;
    let set = ScoreSet::new(ScoreLabel::raw(kind), scores, is_member.to_vec(), idx.to_vec())?;
    Ok(if kind == ScoreKind::Merlin { set.with_metadata("seed", params.seed) } else { set })
}
