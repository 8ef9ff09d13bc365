//! Attack evaluation: ROC and precision-recall curves, AUC, accuracy at a
//! threshold, threshold selection on a simulation set, PPV and TPR at a fixed
//! FPR.
//!
//! The decision rule throughout is strict: a sample is predicted to be a
//! member iff its score is greater than the threshold. Samples with tied
//! scores are therefore always predicted together, and a ROC curve moves
//! diagonally across a tied group (contributing half credit to the AUC).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float_serde;
use crate::scores::{ScoreLabel, ScoreSet};

/// Threshold for calibrated scores when no simulation set is available.
pub const DEFAULT_CALIBRATED_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    #[serde(with = "float_serde")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    #[serde(with = "float_serde")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Cumulative confusion counts after admitting each group of tied scores,
/// highest scores first.
#[derive(Debug)]
struct Ranking {
    /// (group score, cumulative true positives, cumulative false positives)
    groups: Vec<(f64, usize, usize)>,
    positives: usize,
    negatives: usize,
}

impl Ranking {
    fn new(s: &ScoreSet) -> Result<Self> {
        let positives = s.n_members();
        let negatives = s.n_nonmembers();
        if positives == 0 || negatives == 0 {
            return Err(Error::SingleClassScores { members: positives, nonmembers: negatives });
        }
        let mut order: Vec<(f64, bool)> = s.scores.iter().copied().zip(s.is_member.iter().copied()).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (score, member) in order {
            if member {
                tp += 1;
            } else {
                fp += 1;
            }
            match groups.last_mut() {
                Some(g) if g.0 == score => {
                    g.1 = tp;
                    g.2 = fp;
                }
                _ => groups.push((score, tp, fp)),
            }
        }
        Ok(Self { groups, positives, negatives })
    }

    /// `(threshold, tp, fp)` for every achievable cut, starting from "nothing
    /// predicted" at `+∞` and ending with "everything predicted" at `−∞`.
    fn cuts(&self) -> impl Iterator<Item = (f64, usize, usize)> + '_ {
        let first = std::iter::once((f64::INFINITY, 0, 0));
        let rest = self.groups.iter().enumerate().map(move |(j, &(_, tp, fp))| {
            let tau = self.groups.get(j + 1).map_or(f64::NEG_INFINITY, |g| g.0);
            (tau, tp, fp)
        });
        first.chain(rest)
    }
}

pub fn roc_curve(s: &ScoreSet) -> Result<RocCurve> {
    let r = Ranking::new(s)?;
    let (p, n) = (r.positives as f64, r.negatives as f64);
    let points = r
        .cuts()
        .map(|(threshold, tp, fp)| RocPoint { fpr: fp as f64 / n, tpr: tp as f64 / p, threshold })
        .collect();
    Ok(RocCurve { points })
}

/// Trapezoidal area under the ROC curve, computed in exact integer
/// arithmetic; equals `P(member > non-member) + ½ P(tie)`.
pub fn auc(s: &ScoreSet) -> Result<f64> {
    let r = Ranking::new(s)?;
    let mut twice_area: u128 = 0;
    let (mut prev_tp, mut prev_fp) = (0u128, 0u128);
    for &(_, tp, fp) in &r.groups {
        let (tp, fp) = (tp as u128, fp as u128);
        twice_area += (fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(twice_area as f64 / (2 * r.positives as u128 * r.negatives as u128) as f64)
}

/// Precision is defined as 1 where nothing is predicted to be a member.
pub fn pr_curve(s: &ScoreSet) -> Result<PrCurve> {
    let r = Ranking::new(s)?;
    let p = r.positives as f64;
    let points = r
        .cuts()
        .map(|(threshold, tp, fp)| PrPoint { recall: tp as f64 / p, precision: precision(tp, fp), threshold })
        .collect();
    Ok(PrCurve { points })
}

fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// Fraction of correct predictions under "member iff score > tau".
pub fn accuracy_at(s: &ScoreSet, tau: f64) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let correct = s.scores.iter().zip(&s.is_member).filter(|(&v, &m)| (v > tau) == m).count();
    Ok(correct as f64 / s.len() as f64)
}

/// Candidate thresholds: midpoints between adjacent distinct scores plus one
/// below the minimum and one above the maximum, in ascending order.
pub fn candidate_thresholds(s: &ScoreSet) -> Vec<f64> {
    let mut u = s.scores.clone();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut out = Vec::with_capacity(u.len() + 1);
    if let (Some(&lo), Some(&hi)) = (u.first(), u.last()) {
        out.push(lo - 1.0);
        for w in u.windows(2) {
            let mid = w[0] + (w[1] - w[0]) / 2.0;
            // Adjacent floats: keep the cut strictly below the upper score.
            out.push(if mid < w[1] { mid } else { w[0] });
        }
        out.push(hi + 1.0);
    }
    out
}

/// Threshold maximizing accuracy on a simulation set, with the achieved
/// accuracy. Ties go to the largest threshold.
pub fn select_threshold_with_accuracy(sim: &ScoreSet) -> Result<(f64, f64)> {
    let r = Ranking::new(sim)?;
    let n = sim.len();
    // Walk candidates from the highest (nothing predicted) downwards; the
    // candidate below group j admits groups 0..=j.
    let cands = candidate_thresholds(sim);
    let mut best_tau = *cands.last().unwrap();
    let mut best_correct = r.negatives;
    for (j, &(_, tp, fp)) in r.groups.iter().enumerate() {
        let correct = tp + (r.negatives - fp);
        if correct > best_correct {
            best_correct = correct;
            best_tau = cands[cands.len() - 2 - j];
        }
    }
    Ok((best_tau, best_correct as f64 / n as f64))
}

pub fn select_threshold(sim: &ScoreSet) -> Result<f64> {
    select_threshold_with_accuracy(sim).map(|(tau, _)| tau)
}

/// Highest precision over thresholds predicting at least one member, and the
/// number of members scored strictly above every non-member.
pub fn ppv_report(s: &ScoreSet) -> Result<(f64, usize)> {
    let r = Ranking::new(s)?;
    let ppv = r.groups.iter().map(|&(_, tp, fp)| precision(tp, fp)).fold(0.0, f64::max);
    let max_nonmember = s.nonmember_scores().fold(f64::NEG_INFINITY, f64::max);
    let zero_fpr = s.member_scores().filter(|&v| v > max_nonmember).count();
    Ok((ppv, zero_fpr))
}

/// Largest TPR among operating points with FPR at most `fpr_level`
/// (staircase interpolation).
pub fn tpr_at_fpr(s: &ScoreSet, fpr_level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fpr_level) {
        return Err(Error::OutOfRange(format!("fpr level must lie in [0, 1], got {fpr_level}")));
    }
    let r = Ranking::new(s)?;
    let max_fp = (fpr_level * r.negatives as f64 + 1e-9).floor() as usize;
    let best_tp = r.cuts().filter(|&(_, _, fp)| fp <= max_fp).map(|(_, tp, _)| tp).max().unwrap_or(0);
    Ok(best_tp as f64 / r.positives as f64)
}

/// Precision among the `k` highest-scored samples. A tied group straddling
/// position `k` contributes its member fraction pro rata, i.e. the expected
/// precision under random tie-breaking.
pub fn precision_at_top_k(s: &ScoreSet, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::OutOfRange("k must be positive".into()));
    }
    let r = Ranking::new(s)?;
    let k = k.min(s.len());
    let (mut prev_tp, mut prev_n) = (0usize, 0usize);
    for &(_, tp, fp) in &r.groups {
        let n = tp + fp;
        if n >= k {
            let group_size = (n - prev_n) as f64;
            let group_members = (tp - prev_tp) as f64;
            let taken = (k - prev_n) as f64;
            return Ok((prev_tp as f64 + taken * group_members / group_size) / k as f64);
        }
        prev_tp = tp;
        prev_n = n;
    }
    unreachable!("k is at most the number of samples")
}

/// Thresholds `(tau_loss, tau_merlin)` for the two-threshold member rule
/// (`loss ≥ tau_loss` and `merlin ≥ tau_merlin`) that maximize precision on
/// `loss`/`merlin`, with the precision achieved. Among equally precise
/// choices the one flagging more members wins, then the larger thresholds.
pub fn select_morgan_thresholds(loss: &ScoreSet, merlin: &ScoreSet) -> Result<(f64, f64, f64)> {
    if loss.sample_idx != merlin.sample_idx || loss.is_member != merlin.is_member {
        return Err(Error::Misaligned("loss and merlin score sets cover different samples".into()));
    }
    Ranking::new(loss)?;
    let mut merlin_levels = merlin.scores.clone();
    merlin_levels.sort_by(f64::total_cmp);
    merlin_levels.dedup();

    // (precision, tp, tau_loss, tau_merlin)
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for &tm in &merlin_levels {
        let mut kept: Vec<(f64, bool)> = loss
            .scores
            .iter()
            .zip(&merlin.scores)
            .zip(&loss.is_member)
            .filter(|((_, &m), _)| m >= tm)
            .map(|((&l, _), &member)| (l, member))
            .collect();
        kept.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (mut tp, mut fp) = (0usize, 0usize);
        for (i, &(l, member)) in kept.iter().enumerate() {
            if member {
                tp += 1;
            } else {
                fp += 1;
            }
            if kept.get(i + 1).is_some_and(|next| next.0 == l) {
                continue;
            }
            let prec = precision(tp, fp);
            let better = match best {
                None => true,
                Some((bp, btp, bl, bm)) => {
                    prec > bp || (prec == bp && (tp > btp || (tp == btp && (l, tm) > (bl, bm))))
                }
            };
            if better {
                best = Some((prec, tp, l, tm));
            }
        }
    }
    let (prec, _, tl, tm) = best.expect("non-empty score set");
    Ok((tl, tm, prec))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TprAtFpr {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtK {
    pub k: usize,
    pub precision: f64,
}

/// Every metric for one attack on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub label: ScoreLabel,
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub auc: f64,
    /// Accuracy at `threshold`.
    pub accuracy: f64,
    /// Threshold chosen on the simulation set (or the default).
    #[serde(with = "float_serde")]
    pub threshold: f64,
    /// Accuracy of the same threshold on the simulation set, when one was used.
    pub simulated_accuracy: Option<f64>,
    /// Accuracy at the best threshold for this evaluation set (oracle).
    pub best_accuracy: f64,
    pub ppv: f64,
    pub ppv_zero_fpr_count: usize,
    pub tpr_at_fpr: Vec<TprAtFpr>,
    pub precision_at_k: Vec<PrecisionAtK>,
    pub roc: RocCurve,
    pub pr: PrCurve,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

/// How the decision threshold of a report is chosen.
#[derive(Debug, Clone, Copy)]
pub enum ThresholdSource<'a> {
    Simulation(&'a ScoreSet),
    Fixed(f64),
}

pub fn attack_report(
    eval: &ScoreSet,
    threshold: ThresholdSource<'_>,
    fpr_levels: &[f64],
    top_k: &[usize],
) -> Result<AttackReport> {
    let (threshold, simulated_accuracy) = match threshold {
        ThresholdSource::Simulation(sim) => {
            let (tau, acc) = select_threshold_with_accuracy(sim)?;
            (tau, Some(acc))
        }
        ThresholdSource::Fixed(tau) => (tau, None),
    };
    let (ppv, ppv_zero_fpr_count) = ppv_report(eval)?;
    Ok(AttackReport {
        label: eval.label,
        n_members: eval.n_members(),
        n_nonmembers: eval.n_nonmembers(),
        auc: auc(eval)?,
        accuracy: accuracy_at(eval, threshold)?,
        threshold,
        simulated_accuracy,
        best_accuracy: select_threshold_with_accuracy(eval)?.1,
        ppv,
        ppv_zero_fpr_count,
        tpr_at_fpr: fpr_levels
            .iter()
            .map(|&fpr| Ok(TprAtFpr { fpr, tpr: tpr_at_fpr(eval, fpr)? }))
            .collect::<Result<_>>()?,
        precision_at_k: top_k
            .iter()
            .map(|&k| Ok(PrecisionAtK { k, precision: precision_at_top_k(eval, k)? }))
            .collect::<Result<_>>()?,
        roc: roc_curve(eval)?,
        pr: pr_curve(eval)?,
        provenance: eval.metadata.clone(),
    })
}

/// Two-column delimited text (`x<TAB>y` per line, with a header) for plotting.
pub fn roc_plot_data(curve: &RocCurve) -> String {
    let mut out = String::from("fpr\ttpr\n");
    for p in &curve.points {
        out.push_str(&format!("{}\t{}\n", p.fpr, p.tpr));
    }
    out
}

pub fn pr_plot_data(curve: &PrCurve) -> String {
    let mut out = String::from("recall\tprecision\n");
    for p in &curve.points {
        out.push_str(&format!("{}\t{}\n", p.recall, p.precision));
    }
    out
}
