//! Property sweeps over random models, inputs and score sets.

use mia_core::calibration::calibrate_scores;
use mia_core::data::{generate_synthetic, make_split, SyntheticConfig};
use mia_core::evaluation::{auc, pr_curve, roc_curve};
use mia_core::model::{init_mlp, train, Architecture, Layer, Model, TrainConfig};
use mia_core::rng::seeded;
use mia_core::scores::{
    confidence_score, entropy_score, grad_norm_score, loss_score, merlin_score, modified_entropy_score, ScoreKind,
    ScoreLabel, ScoreSet,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

/// A random MLP with biases and weights scaled up so outputs are far from uniform.
fn random_model(widths: Vec<usize>, seed: u64, scale: f64) -> Model {
    let mut model = init_mlp(&Architecture::new(widths).unwrap(), seed);
    let mut rng = seeded(seed, 99);
    let params: Vec<f64> = model
        .flat_parameters()
        .iter()
        .map(|p| scale * (p + 0.2 * Distribution::<f64>::sample(&StandardNormal, &mut rng)))
        .collect();
    model.set_flat_parameters(&params).unwrap();
    model
}

fn model_and_input() -> impl Strategy<Value = (Model, Array1<f64>, usize)> {
    (1usize..6, 1usize..6, 2usize..5, any::<u64>(), 0.5f64..4.0).prop_flat_map(|(d, h, c, seed, scale)| {
        let model = random_model(vec![d, h, c], seed, scale);
        (Just(model), prop::collection::vec(-3.0f64..3.0, d), 0..c)
            .prop_map(|(m, x, y)| (m, Array1::from(x), y))
    })
}

fn score_set() -> impl Strategy<Value = ScoreSet> {
    (2usize..120, any::<bool>()).prop_flat_map(|(n, ties)| {
        let score = if ties { (0i32..5).prop_map(f64::from).boxed() } else { (-50.0f64..50.0).boxed() };
        (prop::collection::vec(score, n), prop::collection::vec(any::<bool>(), n)).prop_map(|(s, mut m)| {
            m[0] = true;
            m[1] = false;
            ScoreSet::from_scores(ScoreLabel::raw(ScoreKind::Loss), s, m).unwrap()
        })
    })
}

fn with_scores(s: &ScoreSet, f: impl Fn(f64) -> f64) -> ScoreSet {
    ScoreSet::from_scores(s.label, s.scores.iter().map(|&v| f(v)).collect(), s.is_member.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn softmax_is_normalized_and_shift_invariant((model, x, _y) in model_and_input(), shift in -20.0f64..20.0) {
        let p = model.forward(x.view()).unwrap();
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);

        // Adding a constant to every output bias shifts all logits equally.
        let mut shifted = model.clone();
        shifted.layers_mut().last_mut().unwrap().biases.mapv_inplace(|b| b + shift);
        let q = shifted.forward(x.view()).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn score_ranges((model, x, y) in model_and_input(), seed in any::<u64>()) {
        let c = model.n_classes() as f64;
        let loss = loss_score(&model, x.view(), y).unwrap();
        let conf = confidence_score(&model, x.view()).unwrap();
        let ent = entropy_score(&model, x.view()).unwrap();
        prop_assert!(conf >= loss);
        prop_assert!(loss <= 0.0 && conf <= 0.0);
        prop_assert!(ent <= 1e-15 && ent >= -c.ln() - 1e-12);
        prop_assert!(grad_norm_score(&model, x.view(), y).unwrap() <= 0.0);
        prop_assert!(modified_entropy_score(&model, x.view(), y).unwrap() <= 0.0);
        let m = merlin_score(&model, x.view(), y, 0.05, 10, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert_eq!(m, merlin_score(&model, x.view(), y, 0.05, 10, seed).unwrap());
    }

    #[test]
    fn grad_norm_follows_class_permutations((model, x, y) in model_and_input(), rot in 1usize..4) {
        // Rotating the output units and the label together describes the same
        // function up to naming, so the gradient norm must not change.
        let c = model.n_classes();
        let perm: Vec<usize> = (0..c).map(|i| (i + rot) % c).collect();
        let mut permuted = model.clone();
        let last = permuted.layers_mut().last_mut().unwrap();
        let Layer { weights, biases } = last.clone();
        let mut w = Array2::zeros(weights.raw_dim());
        let mut b = Array1::zeros(biases.raw_dim());
        for (old, &new) in perm.iter().enumerate() {
            w.column_mut(new).assign(&weights.column(old));
            b[new] = biases[old];
        }
        *last = Layer { weights: w, biases: b };
        let a = grad_norm_score(&model, x.view(), y).unwrap();
        let p = grad_norm_score(&permuted, x.view(), perm[y]).unwrap();
        prop_assert!((a - p).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!((loss_score(&model, x.view(), y).unwrap() - loss_score(&permuted, x.view(), perm[y]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_is_rank_invariant(s in score_set(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let base = auc(&s).unwrap();
        prop_assert_eq!(auc(&with_scores(&s, |v| a * v + b)).unwrap(), base);
        prop_assert_eq!(auc(&with_scores(&s, |v| (v / 50.0).exp())).unwrap(), base);
    }

    #[test]
    fn auc_complement_symmetry(s in score_set()) {
        prop_assert_eq!(auc(&s).unwrap() + auc(&with_scores(&s, |v| -v)).unwrap(), 1.0);
    }

    #[test]
    fn curves_are_monotone(s in score_set()) {
        let roc = roc_curve(&s).unwrap().points;
        prop_assert_eq!((roc[0].fpr, roc[0].tpr), (0.0, 0.0));
        let end = roc.last().unwrap();
        prop_assert_eq!((end.fpr, end.tpr), (1.0, 1.0));
        for w in roc.windows(2) {
            prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
        let pr = pr_curve(&s).unwrap().points;
        for w in pr.windows(2) {
            prop_assert!(w[0].recall <= w[1].recall);
        }
        prop_assert!(pr.iter().all(|p| (0.0..=1.0).contains(&p.precision)));
    }

    #[test]
    fn calibration_shift_keeps_auc(s in score_set(), c in -10.0f64..10.0) {
        let zero = with_scores(&s, |_| 0.0);
        let cal = calibrate_scores(&s, std::slice::from_ref(&zero)).unwrap();
        let shifted = calibrate_scores(&with_scores(&s, |v| v + c), std::slice::from_ref(&zero)).unwrap();
        for (a, b) in cal.scores.iter().zip(&shifted.scores) {
            prop_assert!((a + c - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let own = calibrate_scores(&s, std::slice::from_ref(&s)).unwrap();
        prop_assert_eq!(auc(&own).unwrap(), 0.5);
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn modified_entropy_tracks_loss_on_members() {
    let data = generate_synthetic(&SyntheticConfig {
        n_samples: 600,
        n_features: 20,
        n_classes: 2,
        cluster_spread: 0.6,
        seed: 0,
    })
    .unwrap();
    let plan = make_split(&data, 1.0 / 3.0, 2.0 / 3.0, 1).unwrap();
    let arch = Architecture::single_hidden(20, 2).unwrap();
    let cfg = TrainConfig { batch_size: 32, weight_decay: 1e-2, seed: 1, ..TrainConfig::default() };
    let model = train(&init_mlp(&arch, 1), &data, &plan.member_idx, &cfg).unwrap();
    let (mut loss, mut ment) = (Vec::new(), Vec::new());
    for &i in &plan.member_idx {
        let (x, y) = data.sample(i);
        loss.push(loss_score(&model, x, y).unwrap());
        ment.push(modified_entropy_score(&model, x, y).unwrap());
    }
    let rho = spearman(&loss, &ment);
    assert!(rho > 0.9, "spearman {rho}");
}
