//! Datasets, synthetic generation, CSV ingestion and the member/non-member
//! split plan.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

/// Standard deviations below this are treated as constant columns.
pub const STD_FLOOR: f64 = 1e-12;

/// A labelled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 4 {
            return Err(Error::InvalidDataset(format!("need at least 4 samples, got {n}")));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("need at least one feature".into()));
        }
        if labels.len() != n {
            return Err(Error::Shape { expected: n, got: labels.len() });
        }
        if n_classes == 0 {
            return Err(Error::InvalidDataset("n_classes must be positive".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("features contain non-finite values".into()));
        }
        Ok(Self { features, labels, n_classes })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (ArrayView1<'_, f64>, usize) {
        (self.features.row(i), self.labels[i])
    }

    /// Population standard deviation of each feature column.
    pub fn feature_std(&self) -> Array1<f64> {
        self.features.std_axis(Axis(0), 0.0)
    }

    /// Writes the dataset as CSV with columns `f0..f{d-1}` and `label`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    /// Per-coordinate standard deviation of each class cluster.
    pub cluster_spread: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_features == 0 || self.n_classes == 0 {
            return Err(Error::Config("synthetic sizes must be positive".into()));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread > 0.0) {
            return Err(Error::Config(format!(
                "cluster_spread must be positive, got {}",
                self.cluster_spread
            )));
        }
        Ok(())
    }
}

/// Isotropic Gaussian clusters around unit-norm random centers.
///
/// Sample `i` has label `i % n_classes`, so classes are balanced within one.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed, stream::DATA);
    let d = cfg.n_features;

    let mut centers = Array2::<f64>::zeros((cfg.n_classes, d));
    for mut c in centers.rows_mut() {
        loop {
            c.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            let norm = c.dot(&c).sqrt();
            if norm > 1e-12 {
                c /= norm;
                break;
            }
        }
    }

    let labels: Vec<usize> = (0..cfg.n_samples).map(|i| i % cfg.n_classes).collect();
    let mut features = Array2::<f64>::zeros((cfg.n_samples, d));
    for (mut row, &label) in features.rows_mut().into_iter().zip(&labels) {
        for (v, &c) in row.iter_mut().zip(centers.row(label)) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = c + cfg.cluster_spread * z;
        }
    }
    Dataset::new(features, labels, cfg.n_classes)
}

/// Reads a headered CSV file. Every column except `label_column` must be
/// numeric; those columns are standardized to zero mean and unit variance.
/// Labels are re-indexed densely in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_pos = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != label_pos).collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidDataset("no feature columns".into()));
    }

    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for &j in &feature_cols {
            let cell = record.get(j).unwrap_or("");
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumeric { row: row + 1, column: headers[j].to_string(), value: cell.to_string() }
            })?;
            values.push(v);
        }
        let raw = record.get(label_pos).unwrap_or("").to_string();
        let next = label_index.len();
        labels.push(*label_index.entry(raw).or_insert(next));
    }
    let n_classes = label_index.len();
    if n_classes < 2 {
        return Err(Error::SingleClass);
    }

    let mut features = Array2::from_shape_vec((labels.len(), feature_cols.len()), values)
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    standardize_columns(&mut features);
    Dataset::new(features, labels, n_classes)
}

fn standardize_columns(features: &mut Array2<f64>) {
    for mut col in features.columns_mut() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < STD_FLOOR {
            // Rounding in the mean would otherwise be amplified by 1/STD_FLOOR.
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
}

/// Disjoint index sets for one experiment trial.
///
/// `member_idx`, `nonmember_idx` and `shadow_idx` are pairwise disjoint.
/// The two simulation halves are disjoint subsets of `shadow_idx`: reference
/// models train on the whole public pool while threshold selection treats one
/// half as members and the other as non-members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub member_idx: Vec<usize>,
    pub nonmember_idx: Vec<usize>,
    pub shadow_idx: Vec<usize>,
    pub sim_member_idx: Vec<usize>,
    pub sim_nonmember_idx: Vec<usize>,
    pub seed: u64,
    /// False once the member set has been subsampled for evaluation.
    pub balanced: bool,
}

impl SplitPlan {
    /// Member followed by non-member indices, with the matching membership bits.
    pub fn evaluation_set(&self) -> (Vec<usize>, Vec<bool>) {
        concat_labeled(&self.member_idx, &self.nonmember_idx)
    }

    /// Simulated member half followed by simulated non-member half.
    pub fn simulation_set(&self) -> (Vec<usize>, Vec<bool>) {
        concat_labeled(&self.sim_member_idx, &self.sim_nonmember_idx)
    }

    pub fn check_invariants(&self, n_samples: usize) -> Result<()> {
        let mut owner = vec![0u8; n_samples];
        for (tag, set) in [(1u8, &self.member_idx), (2, &self.nonmember_idx), (3, &self.shadow_idx)] {
            for &i in set {
                if i >= n_samples {
                    return Err(Error::Split(format!("index {i} out of range")));
                }
                if owner[i] != 0 {
                    return Err(Error::Split(format!("index {i} appears in two sets")));
                }
                owner[i] = tag;
            }
        }
        for (tag, set) in [(4u8, &self.sim_member_idx), (5, &self.sim_nonmember_idx)] {
            for &i in set {
                if i >= n_samples || owner[i] != 3 {
                    return Err(Error::Split(format!("simulation index {i} is not a shadow index")));
                }
                owner[i] = tag;
            }
        }
        if self.balanced && self.member_idx.len() != self.nonmember_idx.len() {
            return Err(Error::Split("member and non-member sets differ in size".into()));
        }
        if self.sim_member_idx.len() != self.sim_nonmember_idx.len() {
            return Err(Error::Split("simulation halves differ in size".into()));
        }
        Ok(())
    }
}

fn concat_labeled(members: &[usize], nonmembers: &[usize]) -> (Vec<usize>, Vec<bool>) {
    let idx = members.iter().chain(nonmembers).copied().collect();
    let bits = std::iter::repeat_n(true, members.len())
        .chain(std::iter::repeat_n(false, nonmembers.len()))
        .collect();
    (idx, bits)
}

/// Shuffles all indices, takes `member_fraction · n` of them as the private set
/// (halved into members and non-members) and the next `shadow_fraction · n` as
/// the public set, which is halved again for threshold simulation.
pub fn make_split(data: &Dataset, member_fraction: f64, shadow_fraction: f64, seed: u64) -> Result<SplitPlan> {
    let in_unit = |f: f64| f > 0.0 && f < 1.0;
    if !in_unit(member_fraction) || !in_unit(shadow_fraction) {
        return Err(Error::Split(format!(
            "fractions must lie in (0, 1), got member={member_fraction}, shadow={shadow_fraction}"
        )));
    }
    if member_fraction + shadow_fraction > 1.0 + 1e-12 {
        return Err(Error::Split("member_fraction + shadow_fraction exceeds 1".into()));
    }
    let n = data.n_samples();
    let private = ((member_fraction * n as f64) + 1e-9).floor() as usize;
    let public = ((shadow_fraction * n as f64) + 1e-9).floor() as usize;
    let half = private / 2;
    let sim_half = public / 2;
    if half < 2 || sim_half < 2 {
        return Err(Error::Split(format!(
            "sets too small: {half} members/non-members, {sim_half} per simulation half"
        )));
    }
    debug_assert!(2 * half + public <= n);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed, stream::SPLIT));
    let member_idx = order[..half].to_vec();
    let nonmember_idx = order[half..2 * half].to_vec();
    let shadow_idx = order[2 * half..2 * half + public].to_vec();
    let sim_member_idx = shadow_idx[..sim_half].to_vec();
    let sim_nonmember_idx = shadow_idx[sim_half..2 * sim_half].to_vec();
    Ok(SplitPlan { member_idx, nonmember_idx, shadow_idx, sim_member_idx, sim_nonmember_idx, seed, balanced: true })
}

/// Keeps `⌈ratio · |members|⌉` uniformly chosen members. Models are never
/// retrained; this only changes what gets evaluated.
pub fn subsample_members(plan: &SplitPlan, ratio: f64, seed: u64) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::OutOfRange(format!("member ratio must lie in (0, 1], got {ratio}")));
    }
    let mut out = plan.clone();
    if ratio == 1.0 {
        return Ok(out);
    }
    let keep = ((ratio * plan.member_idx.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut rng = seeded(seed, stream::MEMBER_RATIO);
    let mut members = plan.member_idx.clone();
    members.shuffle(&mut rng);
    members.truncate(keep);
    out.member_idx = members;
    out.balanced = false;
    Ok(out)
}
