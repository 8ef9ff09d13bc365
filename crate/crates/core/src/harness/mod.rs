//! The experiment protocol: split, train the target, score, calibrate,
//! select thresholds on the public simulation halves, evaluate; repeated over
//! several seeds and optionally swept along one ablation axis.
//!
//! Seeds: repetition `t` uses `base_seed + t`. Within a repetition the stages
//! add fixed offsets to that seed ([`seeds`]); reference model `j` uses
//! `reference_base + j`.

pub mod artifact;
pub mod config;
pub mod report;

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_scores, calibrated_gap_accuracy, calibrated_gap_decide, reference_subsample, train_references,
    CalibrationConfig, GapTable,
};
use crate::data::{generate_synthetic, load_csv, make_split, subsample_members, Dataset, SplitPlan, SyntheticConfig};
use crate::error::{Error, Result};
use crate::evaluation::{attack_report, select_morgan_thresholds, AttackReport, ThresholdSource};
use crate::model::{accuracy, init_mlp, train, Architecture, Model, TrainConfig};
use crate::scores::{morgan_decide, score_batch, KindParams, MerlinParams, ScoreKind, ScoreLabel, ScoreSet};

pub use report::{read_report, write_report, ExperimentReport, REPORT_VERSION};

/// Additive seed offsets for the stages of one repetition.
pub mod seeds {
    pub const TARGET: u64 = 1_000;
    pub const SCORES: u64 = 2_000;
    pub const MEMBER_RATIO: u64 = 3_000;
    pub const REFERENCES: u64 = 4_000;
    /// Reference seeds are spaced so that `reference_base + j` never collides
    /// across repetitions for fewer than 65 536 reference models.
    pub const REFERENCE_SHIFT: u32 = 16;

    pub fn target(rep_seed: u64) -> u64 {
        rep_seed.wrapping_add(TARGET)
    }

    pub fn scores(rep_seed: u64) -> u64 {
        rep_seed.wrapping_add(SCORES)
    }

    pub fn member_ratio(rep_seed: u64) -> u64 {
        rep_seed.wrapping_add(MEMBER_RATIO)
    }

    pub fn reference_base(rep_seed: u64) -> u64 {
        rep_seed.wrapping_add(REFERENCES) << REFERENCE_SHIFT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    pub synthetic: SyntheticConfig,
    pub csv_path: String,
    pub label_column: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            synthetic: SyntheticConfig { n_samples: 600, n_features: 20, n_classes: 2, cluster_spread: 0.6, seed: 0 },
            csv_path: String::new(),
            label_column: "label".into(),
        }
    }
}

impl DataConfig {
    pub fn load(&self) -> Result<Dataset> {
        match self.source {
            DataSource::Synthetic => generate_synthetic(&self.synthetic),
            DataSource::Csv => {
                if self.csv_path.is_empty() {
                    return Err(Error::Config("data.csv_path is required for csv data".into()));
                }
                load_csv(&self.csv_path, &self.label_column)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Fraction of the data forming the private set (half members, half non-members).
    pub member_fraction: f64,
    /// Fraction of the data forming the public (shadow) set.
    pub shadow_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { member_fraction: 1.0 / 3.0, shadow_fraction: 2.0 / 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    /// Hidden layer widths; empty means one hidden layer of twice the input width.
    pub hidden_layers: Vec<usize>,
    pub target: TrainConfig,
    pub calibration: CalibrationConfig,
    pub kinds: Vec<ScoreKind>,
    pub repetitions: usize,
    pub fpr_levels: Vec<f64>,
    /// Fractions of the member set kept at evaluation time.
    pub member_ratios: Vec<f64>,
    pub top_k: Vec<usize>,
    pub merlin: MerlinParams,
    /// Also evaluate the two-threshold loss/Merlin rule (needs both kinds).
    pub morgan: bool,
    /// Store every evaluation and simulation score set in the report.
    pub keep_scores: bool,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let target = TrainConfig::default();
        Self {
            data: DataConfig::default(),
            split: SplitConfig::default(),
            hidden_layers: Vec::new(),
            calibration: CalibrationConfig { reference_train: target.clone(), ..Default::default() },
            target,
            kinds: ScoreKind::ALL.to_vec(),
            repetitions: 5,
            fpr_levels: vec![0.01, 0.05, 0.1],
            member_ratios: vec![1.0],
            top_k: vec![10],
            merlin: MerlinParams::default(),
            morgan: true,
            keep_scores: false,
            base_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// The synthetic overfit benchmark: 2 classes, 20 features, a [20, 40, 2]
    /// network on 100 members with a 400-sample shadow set. Train accuracy
    /// reaches 1.0 and held-out accuracy sits around 0.75.
    ///
    /// Stronger weight decay and larger batches than the defaults keep the
    /// target's logits moderate, so member losses stay informative instead of
    /// all collapsing to zero.
    pub fn overfit_benchmark() -> Self {
        let mut cfg = Self::default();
        cfg.data.synthetic = SyntheticConfig { n_samples: 600, n_features: 20, n_classes: 2, cluster_spread: 0.6, seed: 0 };
        cfg.target.batch_size = 32;
        cfg.target.weight_decay = 1e-2;
        cfg.calibration.reference_train = cfg.target.clone();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("at least one score kind is required".into()));
        }
        if self.data.source == DataSource::Synthetic {
            self.data.synthetic.validate()?;
        }
        self.target.validate()?;
        self.calibration.validate()?;
        if let Some(f) = self.fpr_levels.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("fpr level {f} outside [0, 1]")));
        }
        if let Some(r) = self.member_ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::Config(format!("member ratio {r} outside (0, 1]")));
        }
        if self.member_ratios.is_empty() {
            return Err(Error::Config("at least one member ratio is required".into()));
        }
        if self.top_k.contains(&0) {
            return Err(Error::Config("top_k entries must be positive".into()));
        }
        if !(self.merlin.relative_sigma > 0.0) || self.merlin.trials == 0 {
            return Err(Error::Config("merlin needs a positive sigma and trial count".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let s = &self.split;
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(s.member_fraction) || !ok(s.shadow_fraction) || s.member_fraction + s.shadow_fraction > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "invalid split fractions member={} shadow={}",
                s.member_fraction, s.shadow_fraction
            )));
        }
        Ok(())
    }

    pub fn architecture(&self, data: &Dataset) -> Result<Architecture> {
        if self.hidden_layers.is_empty() {
            return Architecture::single_hidden(data.n_features(), data.n_classes());
        }
        let mut widths = vec![data.n_features()];
        widths.extend(&self.hidden_layers);
        widths.push(data.n_classes());
        Architecture::new(widths)
    }

    fn kind_params(&self, rep_seed: u64) -> KindParams {
        KindParams { merlin: self.merlin.clone(), seed: seeds::scores(rep_seed) }
    }
}

/// Pipeline stage, recorded when a repetition fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Data,
    Split,
    TrainTarget,
    TrainReferences,
    Scoring,
    Evaluation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Data => "data",
            Stage::Split => "split",
            Stage::TrainTarget => "train_target",
            Stage::TrainReferences => "train_references",
            Stage::Scoring => "scoring",
            Stage::Evaluation => "evaluation",
        };
        f.write_str(s)
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// One attack evaluated at one member ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub member_ratio: f64,
    pub report: AttackReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    /// Target accuracy on its members.
    pub target_train_accuracy: f64,
    /// Target accuracy on the held-out non-members.
    pub target_test_accuracy: f64,
    /// Mean reference accuracy on the shadow set.
    pub reference_train_accuracy: f64,
    /// Mean reference accuracy on the target's members.
    pub reference_member_accuracy: f64,
    /// Mean reference accuracy on the non-members.
    pub reference_test_accuracy: f64,
}

/// Plain and calibrated gap attacks on the balanced evaluation set, using the
/// first reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    /// Accuracy of "member iff correctly classified".
    pub gap_accuracy: f64,
    /// `½(1 + acc_member − acc_nonmember)`.
    pub gap_identity: f64,
    pub member_table: GapTable,
    pub nonmember_table: GapTable,
    /// Accuracy of the calibrated gap decisions counted directly.
    pub calibrated_gap_accuracy: f64,
    /// `½(r_m + 1 − f)` from the conjunction rates.
    pub calibrated_gap_identity: f64,
    /// The closed form `½(1 − ε₂ + p_train − p_test + ε₁)`.
    pub calibrated_gap_formula: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorganSummary {
    pub label: ScoreLabel,
    pub tau_loss: f64,
    pub tau_merlin: f64,
    pub simulated_ppv: f64,
    pub flagged: usize,
    pub true_positives: usize,
    pub ppv: f64,
    pub accuracy: f64,
}

/// Score sets retained when `keep_scores` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedScores {
    pub evaluation: ScoreSet,
    pub simulation: ScoreSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub seed: u64,
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub n_shadow: usize,
    pub model_stats: ModelStats,
    pub cells: Vec<Cell>,
    pub gap: GapSummary,
    pub morgan: Vec<MorganSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<RetainedScores>,
}

impl RepetitionReport {
    pub fn cell(&self, label: ScoreLabel, member_ratio: f64) -> Option<&AttackReport> {
        self.cells.iter().find(|c| c.report.label == label && c.member_ratio == member_ratio).map(|c| &c.report)
    }
}

/// Which dataset indices each stage touched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexTrace {
    pub target_train: BTreeSet<usize>,
    pub reference_train: BTreeSet<usize>,
    pub threshold_selection: BTreeSet<usize>,
    pub evaluation: BTreeSet<usize>,
}

/// Trained target and references for one repetition.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub target: Model,
    pub references: Vec<Model>,
}

pub fn train_target(cfg: &ExperimentConfig, data: &Dataset, plan: &SplitPlan) -> Result<Model> {
    let arch = cfg.architecture(data)?;
    let seed = seeds::target(plan.seed);
    let init = init_mlp(&arch, seed);
    train(&init, data, &plan.member_idx, &TrainConfig { seed, ..cfg.target.clone() })
}

/// Runs repetition `t`: split, train, attack.
pub fn run_repetition(
    cfg: &ExperimentConfig,
    data: &Dataset,
    t: usize,
) -> std::result::Result<(RepetitionReport, IndexTrace), StageError> {
    let seed = cfg.base_seed.wrapping_add(t as u64);
    let plan = make_split(data, cfg.split.member_fraction, cfg.split.shadow_fraction, seed).at(Stage::Split)?;
    let target = train_target(cfg, data, &plan).at(Stage::TrainTarget)?;
    let references = train_references(data, &plan.shadow_idx, &cfg.calibration, &target, seeds::reference_base(seed))
        .at(Stage::TrainReferences)?;

    let mut trace = IndexTrace {
        target_train: plan.member_idx.iter().copied().collect(),
        ..Default::default()
    };
    for j in 0..cfg.calibration.n_reference_models {
        let ref_seed = seeds::reference_base(seed).wrapping_add(j as u64);
        trace.reference_train.extend(reference_subsample(
            &plan.shadow_idx,
            cfg.calibration.shadow_subsample_fraction,
            ref_seed,
        ));
    }
    trace.threshold_selection.extend(plan.sim_member_idx.iter().chain(&plan.sim_nonmember_idx));
    trace.evaluation.extend(plan.member_idx.iter().chain(&plan.nonmember_idx));

    let report = attack_target(cfg, data, &plan, &TrainedModels { target, references })?;
    Ok((report, trace))
}

fn score_all(
    models: &TrainedModels,
    data: &Dataset,
    idx: &[usize],
    bits: &[bool],
    kind: ScoreKind,
    params: &KindParams,
) -> Result<(ScoreSet, ScoreSet)> {
    let raw = score_batch(&models.target, data, idx, bits, kind, params)?;
    let refs = models
        .references
        .iter()
        .map(|r| score_batch(r, data, idx, bits, kind, params))
        .collect::<Result<Vec<_>>>()?;
    let cal = calibrate_scores(&raw, &refs)?;
    Ok((raw, cal))
}

/// Attacks an already trained target with already trained references.
pub fn attack_target(
    cfg: &ExperimentConfig,
    data: &Dataset,
    plan: &SplitPlan,
    models: &TrainedModels,
) -> std::result::Result<RepetitionReport, StageError> {
    if models.references.is_empty() {
        return Err(StageError { stage: Stage::TrainReferences, error: Error::Config("no reference models".into()) });
    }
    let params = cfg.kind_params(plan.seed);
    let (eval_idx, eval_bits) = plan.evaluation_set();
    let (sim_idx, sim_bits) = plan.simulation_set();

    let ratio_plans = cfg
        .member_ratios
        .iter()
        .map(|&r| subsample_members(plan, r, seeds::member_ratio(plan.seed)).map(|p| (r, p)))
        .collect::<Result<Vec<_>>>()
        .at(Stage::Evaluation)?;

    let mut cells = Vec::new();
    let mut retained = Vec::new();
    let mut kept_sets: Vec<(ScoreSet, ScoreSet)> = Vec::new();
    for &kind in &cfg.kinds {
        let (eval_raw, eval_cal) = score_all(models, data, &eval_idx, &eval_bits, kind, &params).at(Stage::Scoring)?;
        let (sim_raw, sim_cal) = score_all(models, data, &sim_idx, &sim_bits, kind, &params).at(Stage::Scoring)?;
        for (eval, sim) in [(&eval_raw, &sim_raw), (&eval_cal, &sim_cal)] {
            for (ratio, ratio_plan) in &ratio_plans {
                let keep: Vec<usize> = ratio_plan.member_idx.iter().chain(&ratio_plan.nonmember_idx).copied().collect();
                let eval_r = if *ratio == 1.0 { eval.clone() } else { eval.restrict_to(&keep) };
                let report = attack_report(&eval_r, ThresholdSource::Simulation(sim), &cfg.fpr_levels, &cfg.top_k)
                    .at(Stage::Evaluation)?;
                cells.push(Cell { member_ratio: *ratio, report });
            }
            if cfg.keep_scores {
                retained.push(RetainedScores { evaluation: eval.clone(), simulation: sim.clone() });
            }
        }
        if matches!(kind, ScoreKind::Loss | ScoreKind::Merlin) {
            kept_sets.push((eval_raw, sim_raw));
            kept_sets.push((eval_cal, sim_cal));
        }
    }

    let morgan = if cfg.morgan { morgan_summaries(&kept_sets).at(Stage::Evaluation)? } else { Vec::new() };
    let gap = gap_summary(data, plan, models).at(Stage::Evaluation)?;
    let model_stats = model_stats(data, plan, models).at(Stage::Evaluation)?;

    Ok(RepetitionReport {
        seed: plan.seed,
        n_members: plan.member_idx.len(),
        n_nonmembers: plan.nonmember_idx.len(),
        n_shadow: plan.shadow_idx.len(),
        model_stats,
        cells,
        gap,
        morgan,
        scores: retained,
    })
}

fn morgan_summaries(sets: &[(ScoreSet, ScoreSet)]) -> Result<Vec<MorganSummary>> {
    let mut out = Vec::new();
    for calibrated in [false, true] {
        let find = |kind| {
            sets.iter().find(|(e, _)| e.label.kind == kind && e.label.calibrated == calibrated)
        };
        let (Some((loss_eval, loss_sim)), Some((merlin_eval, merlin_sim))) = (find(ScoreKind::Loss), find(ScoreKind::Merlin))
        else {
            continue;
        };
        let (tau_loss, tau_merlin, simulated_ppv) = select_morgan_thresholds(loss_sim, merlin_sim)?;
        let flags = morgan_decide(loss_eval, merlin_eval, tau_loss, tau_merlin)?;
        let flagged = flags.iter().filter(|&&f| f).count();
        let true_positives = flags.iter().zip(&loss_eval.is_member).filter(|(&f, &m)| f && m).count();
        let correct = flags.iter().zip(&loss_eval.is_member).filter(|(&f, &m)| f == m).count();
        out.push(MorganSummary {
            label: ScoreLabel { kind: ScoreKind::Merlin, calibrated },
            tau_loss,
            tau_merlin,
            simulated_ppv,
            flagged,
            true_positives,
            ppv: if flagged == 0 { 1.0 } else { true_positives as f64 / flagged as f64 },
            accuracy: correct as f64 / flags.len() as f64,
        });
    }
    Ok(out)
}

fn gap_summary(data: &Dataset, plan: &SplitPlan, models: &TrainedModels) -> Result<GapSummary> {
    let target = &models.target;
    let reference = &models.references[0];
    let acc_m = accuracy(target, data, &plan.member_idx)?;
    let acc_n = accuracy(target, data, &plan.nonmember_idx)?;
    let (eval_idx, eval_bits) = plan.evaluation_set();
    let gap = score_batch(target, data, &eval_idx, &eval_bits, ScoreKind::Gap, &KindParams::default())?;
    let gap_accuracy = crate::evaluation::accuracy_at(&gap, 0.5)?;

    let member_table = GapTable::measure(target, reference, data, &plan.member_idx)?;
    let nonmember_table = GapTable::measure(target, reference, data, &plan.nonmember_idx)?;
    let flags = calibrated_gap_decide(target, reference, data, &eval_idx)?;
    let correct = flags.iter().zip(&eval_bits).filter(|(&f, &m)| f == m).count();
    let r_m = member_table.target_right_ref_wrong;
    let f = nonmember_table.target_right_ref_wrong;
    let formula = calibrated_gap_accuracy(
        member_table.target_accuracy(),
        nonmember_table.target_accuracy(),
        member_table.target_wrong_ref_right,
        nonmember_table.target_right_ref_wrong,
    )?;
    Ok(GapSummary {
        gap_accuracy,
        gap_identity: 0.5 * (1.0 + acc_m - acc_n),
        member_table,
        nonmember_table,
        calibrated_gap_accuracy: correct as f64 / flags.len() as f64,
        calibrated_gap_identity: 0.5 * (r_m + 1.0 - f),
        calibrated_gap_formula: formula,
    })
}

fn model_stats(data: &Dataset, plan: &SplitPlan, models: &TrainedModels) -> Result<ModelStats> {
    let mean_acc = |idx: &[usize]| -> Result<f64> {
        let accs = models.references.iter().map(|r| accuracy(r, data, idx)).collect::<Result<Vec<_>>>()?;
        Ok(accs.iter().sum::<f64>() / accs.len() as f64)
    };
    Ok(ModelStats {
        target_train_accuracy: accuracy(&models.target, data, &plan.member_idx)?,
        target_test_accuracy: accuracy(&models.target, data, &plan.nonmember_idx)?,
        reference_train_accuracy: mean_acc(&plan.shadow_idx)?,
        reference_member_accuracy: mean_acc(&plan.member_idx)?,
        reference_test_accuracy: mean_acc(&plan.nonmember_idx)?,
    })
}

/// Runs every repetition and aggregates. A failing repetition is recorded
/// with its stage and excluded from the aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = cfg.data.load()?;
    run_experiment_on(cfg, &data)
}

/// [`run_experiment`] on an already loaded dataset.
pub fn run_experiment_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outcomes: Vec<_> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.base_seed.wrapping_add(t as u64);
            match run_repetition(cfg, data, t) {
                Ok((rep, _)) => report::RepetitionOutcome::completed(t, rep),
                Err(e) => report::RepetitionOutcome::failed(t, seed, e),
            }
        })
        .collect();
    Ok(ExperimentReport::assemble(cfg.clone(), None, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Number of target members (the non-member set matches it).
    TrainSize,
    /// Fraction of members kept at evaluation time.
    MemberRatio,
    NReferences,
    /// Fraction of the shadow set each reference model trains on.
    ShadowFraction,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train_size" => Ok(SweepAxis::TrainSize),
            "member_ratio" => Ok(SweepAxis::MemberRatio),
            "n_references" => Ok(SweepAxis::NReferences),
            "shadow_fraction" => Ok(SweepAxis::ShadowFraction),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepAxis::TrainSize => "train_size",
            SweepAxis::MemberRatio => "member_ratio",
            SweepAxis::NReferences => "n_references",
            SweepAxis::ShadowFraction => "shadow_fraction",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub axis: SweepAxis,
    pub value: f64,
}

fn as_count(axis: SweepAxis, v: f64, min: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < min as f64 {
        return Err(Error::Config(format!("{axis} values must be integers ≥ {min}, got {v}")));
    }
    Ok(v as usize)
}

/// The configuration and dataset for one point of a sweep.
///
/// For `train_size` on synthetic data the dataset is regenerated with
/// `2·value + |shadow|` samples so the shadow set keeps its size; for CSV data
/// the private fraction is rescaled instead.
pub fn sweep_point(base: &ExperimentConfig, base_data: &Dataset, axis: SweepAxis, value: f64) -> Result<(ExperimentConfig, Option<Dataset>)> {
    let mut cfg = base.clone();
    let mut data = None;
    match axis {
        SweepAxis::TrainSize => {
            let members = as_count(axis, value, 2)?;
            let n = base_data.n_samples();
            let shadow = ((base.split.shadow_fraction * n as f64) + 1e-9).floor() as usize;
            match base.data.source {
                DataSource::Synthetic => {
                    let total = 2 * members + shadow;
                    cfg.data.synthetic.n_samples = total;
                    cfg.split.member_fraction = (2 * members) as f64 / total as f64;
                    cfg.split.shadow_fraction = shadow as f64 / total as f64;
                    data = Some(generate_synthetic(&cfg.data.synthetic)?);
                }
                DataSource::Csv => {
                    cfg.split.member_fraction = (2 * members) as f64 / n as f64;
                    if 2 * members + shadow > n {
                        return Err(Error::Config(format!(
                            "train_size {members} does not fit next to {shadow} shadow samples in {n} rows"
                        )));
                    }
                }
            }
        }
        SweepAxis::MemberRatio => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Config(format!("member_ratio values must lie in (0, 1], got {value}")));
            }
            cfg.member_ratios = vec![value];
        }
        SweepAxis::NReferences => cfg.calibration.n_reference_models = as_count(axis, value, 1)?,
        SweepAxis::ShadowFraction => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Config(format!("shadow_fraction values must lie in (0, 1], got {value}")));
            }
            cfg.calibration.shadow_subsample_fraction = value;
        }
    }
    cfg.validate()?;
    Ok((cfg, data))
}

/// One full experiment per axis value, every other setting held fixed. All
/// values are validated before any training starts.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let data = cfg.data.load()?;
    let points = values
        .iter()
        .map(|&v| sweep_point(cfg, &data, axis, v))
        .collect::<Result<Vec<_>>>()?;
    points
        .into_iter()
        .zip(values)
        .map(|((point_cfg, point_data), &value)| {
            let mut report = run_experiment_on(&point_cfg, point_data.as_ref().unwrap_or(&data))?;
            report.ablation = Some(AblationPoint { axis, value });
            Ok(report)
        })
        .collect()
}
