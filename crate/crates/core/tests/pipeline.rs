//! End-to-end harness behavior on small synthetic experiments.

use mia_core::calibration::CalibrationMode;
use mia_core::harness::report::{export_plot_data, read_report, write_report, RepetitionStatus};
use mia_core::harness::{run_experiment, run_repetition, run_sweep, ExperimentConfig, Stage, SweepAxis};
use mia_core::scores::{ScoreKind, ScoreLabel};

/// A quick configuration: smaller data and fewer epochs than the benchmark.
fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::overfit_benchmark();
    cfg.data.synthetic.n_samples = 240;
    cfg.target.epochs = 30;
    cfg.calibration.reference_train.epochs = 30;
    cfg.calibration.n_reference_models = 2;
    cfg.calibration.shadow_subsample_fraction = 0.5;
    cfg.repetitions = 3;
    cfg.merlin.trials = 10;
    cfg.member_ratios = vec![1.0, 0.5];
    cfg.top_k = vec![5];
    cfg
}

#[test]
fn evaluation_indices_never_train_references_or_pick_thresholds() {
    for mode in [CalibrationMode::FromScratch, CalibrationMode::Forgetting] {
        let mut cfg = small();
        cfg.calibration.mode = mode;
        let data = cfg.data.load().unwrap();
        for t in 0..cfg.repetitions {
            let (_, trace) = run_repetition(&cfg, &data, t).unwrap();
            assert!(trace.evaluation.is_disjoint(&trace.reference_train));
            assert!(trace.evaluation.is_disjoint(&trace.threshold_selection));
            assert!(trace.target_train.is_subset(&trace.evaluation));
            assert!(!trace.reference_train.is_empty() && !trace.threshold_selection.is_empty());
        }
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = small();
    let a = run_experiment(&cfg).unwrap().to_json().unwrap();
    let b = run_experiment(&cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.base_seed = 1;
    assert_ne!(a, run_experiment(&other).unwrap().to_json().unwrap());
}

#[test]
fn aggregates_are_means_of_repetitions() {
    let report = run_experiment(&small()).unwrap();
    assert!(report.complete);
    assert_eq!(report.effective_repetitions, 3);
    for agg in &report.aggregates {
        let values: Vec<f64> = report.completed().map(|r| r.cell(agg.label, agg.member_ratio).unwrap().auc).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let s = agg.metric("auc").unwrap();
        assert_eq!(s.n, 3);
        assert!((s.mean - mean).abs() < 1e-15, "{}: {} vs {}", agg.label, s.mean, mean);
    }
    let test_acc: Vec<f64> = report.completed().map(|r| r.model_stats.target_test_accuracy).collect();
    let mean = test_acc.iter().sum::<f64>() / 3.0;
    assert!((report.model_aggregates["target_test_accuracy"].mean - mean).abs() < 1e-15);
}

#[test]
fn single_repetition_has_zero_spread() {
    let mut cfg = small();
    cfg.repetitions = 1;
    let report = run_experiment(&cfg).unwrap();
    assert!(report.aggregates.iter().all(|a| a.metrics.values().all(|s| s.std == 0.0 && s.n == 1)));
}

#[test]
fn reports_survive_the_disk() {
    let mut cfg = small();
    cfg.repetitions = 2;
    cfg.keep_scores = true;
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    write_report(&report, &path).unwrap();
    let back = read_report(&path).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap(), report.to_json().unwrap());

    let files = export_plot_data(&report, dir.path().join("plots")).unwrap();
    // Two repetitions, every kind raw and calibrated, two ratios, ROC and PR.
    assert_eq!(files.len(), 2 * ScoreKind::ALL.len() * 2 * 2 * 2);
    let roc = std::fs::read_to_string(files.iter().find(|f| f.to_string_lossy().ends_with("_roc.tsv")).unwrap()).unwrap();
    assert!(roc.starts_with("fpr\ttpr\n") && roc.trim_end().ends_with("1\t1"));
}

#[test]
fn sweep_over_one_reference_matches_the_plain_run() {
    let mut cfg = small();
    cfg.calibration.n_reference_models = 1;
    cfg.repetitions = 2;
    let plain = run_experiment(&cfg).unwrap();
    let swept = run_sweep(&cfg, SweepAxis::NReferences, &[1.0]).unwrap();
    assert_eq!(swept.len(), 1);
    assert_eq!(swept[0].repetitions, plain.repetitions);
    assert_eq!(swept[0].aggregates, plain.aggregates);
    assert!(run_sweep(&cfg, SweepAxis::NReferences, &[1.0, 0.0]).is_err());
    assert!(run_sweep(&cfg, SweepAxis::MemberRatio, &[1.5]).is_err());
}

#[test]
fn train_size_sweep_sets_member_counts() {
    let mut cfg = small();
    cfg.repetitions = 1;
    let reports = run_sweep(&cfg, SweepAxis::TrainSize, &[20.0, 40.0]).unwrap();
    let counts: Vec<usize> = reports.iter().map(|r| r.completed().next().unwrap().n_members).collect();
    assert_eq!(counts, vec![20, 40]);
    let shadows: Vec<usize> = reports.iter().map(|r| r.completed().next().unwrap().n_shadow).collect();
    assert_eq!(shadows[0], shadows[1]);
}

#[test]
fn diverging_repetitions_are_recorded_not_fatal() {
    let mut cfg = small();
    cfg.repetitions = 2;
    cfg.target.learning_rate = 1e6;
    cfg.target.weight_decay = 0.0;
    let report = run_experiment(&cfg).unwrap();
    assert!(!report.complete);
    assert_eq!(report.effective_repetitions, 0);
    assert!(report.aggregates.is_empty());
    for r in &report.repetitions {
        assert!(matches!(&r.status, RepetitionStatus::Failed { stage: Stage::TrainTarget, .. }), "{r:?}");
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn every_score_orients_members_upward() {
    let mut cfg = ExperimentConfig::overfit_benchmark();
    cfg.keep_scores = true;
    cfg.morgan = false;
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.effective_repetitions, 5);
    for kind in ScoreKind::ALL {
        for rep in report.completed() {
            let kept = rep.scores.iter().find(|s| s.evaluation.label == ScoreLabel::raw(kind)).unwrap();
            let s = &kept.evaluation;
            let (m, n) = (mean(s.member_scores()), mean(s.nonmember_scores()));
            assert!(m >= n, "{kind} seed {}: members {m} < non-members {n}", rep.seed);
        }
    }
}
