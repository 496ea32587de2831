use pdcal::calibrators::*;
use pdcal::metrics::{auroc, brier_score, LabeledScores};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: usize = 1000;

/// Minimum of Σ (v(f_i) − y_i)² over every non-decreasing assignment of grid
/// values k/GRID to the distinct scores. Exhaustive via the recurrence
/// best[i][k] = cost_i(k) + min over j ≤ k of best[i−1][j].
fn grid_monotone_least_squares(scores: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut last = f64::NAN;
    for &i in &order {
        if scores[i] != last {
            groups.push(Vec::new());
            last = scores[i];
        }
        groups.last_mut().unwrap().push(f64::from(labels[i]));
    }
    let mut best = vec![0.0; GRID + 1];
    for g in &groups {
        let mut running = f64::INFINITY;
        for (k, b) in best.iter_mut().enumerate() {
            running = running.min(*b);
            let v = k as f64 / GRID as f64;
            *b = running + g.iter().map(|y| (v - y) * (v - y)).sum::<f64>();
        }
    }
    best.into_iter().fold(f64::INFINITY, f64::min)
}

fn sse(fitted: &[f64], labels: &[u8]) -> f64 {
    fitted.iter().zip(labels).map(|(m, &y)| (m - f64::from(y)).powi(2)).sum()
}

fn small_instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..6).prop_map(|k| f64::from(k) / 5.0), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

fn instance(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2..=max).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..=50).prop_map(|k| f64::from(k) / 50.0), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

/// Half the share of strictly ordered positive/negative pairs that `after`
/// ties: the only way a monotone map can lower AUROC.
fn tie_credit_lost(before: &[f64], after: &[f64], labels: &[u8]) -> f64 {
    let (mut lost, mut pairs) = (0.0, 0.0);
    for i in (0..labels.len()).filter(|&i| labels[i] == 1) {
        for j in (0..labels.len()).filter(|&j| labels[j] == 0) {
            pairs += 1.0;
            if before[i] > before[j] && after[i] == after[j] {
                lost += 0.5;
            }
        }
    }
    lost / pairs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pava_matches_brute_force((scores, labels) in small_instance()) {
        let cal = fit_isotonic(&scores, &labels).unwrap();
        let fitted: Vec<f64> = scores.iter().map(|&f| cal.apply_one(f)).collect();
        let pava = sse(&fitted, &labels);
        let oracle = grid_monotone_least_squares(&scores, &labels);
        prop_assert!(pava <= oracle + 1e-12, "pava {} oracle {}", pava, oracle);
        prop_assert!(oracle - pava <= 1e-5, "pava {} oracle {}", pava, oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn isotonic_never_worsens_training_brier((scores, labels) in instance(300)) {
        let cal = fit_isotonic(&scores, &labels).unwrap();
        let before = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        let after = LabeledScores::new(cal.apply(&scores), labels).unwrap();
        prop_assert!(brier_score(&after) <= brier_score(&before) + 1e-15);
    }

    #[test]
    fn isotonic_is_non_decreasing((scores, labels) in instance(300), probes in prop::collection::vec(-0.5f64..1.5, 2..50)) {
        let cal = Calibrator::Isotonic(fit_isotonic(&scores, &labels).unwrap());
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let out = cal.apply(&probes);
        for w in out.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(out.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn isotonic_rank_change_is_only_tie_credit((scores, labels) in instance(150)) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let cal = fit_isotonic(&scores, &labels).unwrap();
        let after = cal.apply(&scores);
        let raw = auroc(&LabeledScores::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let cal_auc = auroc(&LabeledScores::new(after.clone(), labels.clone()).unwrap()).unwrap();
        prop_assert!(cal_auc >= raw - tie_credit_lost(&scores, &after, &labels) - 1e-12);
    }

    #[test]
    fn sigmoid_converges_and_preserves_rank((scores, labels) in instance(300)) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let fit = fit_sigmoid_report(&scores, &labels).unwrap();
        prop_assert!(fit.gradient_norm <= SIGMOID_GRADIENT_TOL);
        let c = fit.calibrator;
        let g = platt_gradient(c.a, c.b, &scores, &platt_targets(&labels));
        prop_assert!(g[0].hypot(g[1]) <= SIGMOID_GRADIENT_TOL);
        if c.a < 0.0 {
            let raw = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
            let cal = LabeledScores::new(Calibrator::Sigmoid(c).apply(&scores), labels).unwrap();
            prop_assert_eq!(auroc(&cal).unwrap(), auroc(&raw).unwrap());
        }
    }
}

#[test]
fn platt_recovers_known_distortion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 50_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let labels: Vec<u8> = scores
        .iter()
        .map(|&f| u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-2.0 * f + 1.0).exp())))
        .collect();
    let fit = fit_sigmoid_report(&scores, &labels).unwrap();
    let c = fit.calibrator;
    assert!((c.a + 2.0).abs() <= 0.1, "a = {}", c.a);
    assert!((c.b - 1.0).abs() <= 0.1, "b = {}", c.b);
    assert!(fit.gradient_norm <= 1e-8);
}

#[test]
fn pava_textbook_cases() {
    let cal = fit_isotonic(&[1.0, 2.0, 3.0], &[1, 0, 1]).unwrap();
    assert_eq!(cal.apply(&[1.0, 2.0, 3.0]), vec![0.5, 0.5, 1.0]);
    let cal = fit_isotonic(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 0, 0]).unwrap();
    assert_eq!(cal.apply(&[1.0, 2.0, 3.0, 4.0]), vec![0.5; 4]);
    for (s, y) in [(vec![1.0, 2.0, 3.0, 4.0], vec![1, 1, 0, 0]), (vec![1.0, 2.0, 3.0], vec![1, 0, 1])] {
        let cal = fit_isotonic(&s, &y).unwrap();
        let fitted: Vec<f64> = s.iter().map(|&f| cal.apply_one(f)).collect();
        assert!((sse(&fitted, &y) - grid_monotone_least_squares(&s, &y)).abs() <= 1e-5);
    }
}

#[test]
fn sigmoid_converges_on_coarse_votes_at_scale() {
    // ten-tree hard votes: few distinct scores, thousands of rows, so the
    // likelihood improvement near the optimum is far below naive summation noise
    let counts = [(0.0, 3265, 181), (0.1, 543, 60), (0.2, 142, 22), (0.3, 34, 1), (0.4, 12, 3), (0.5, 4, 1)];
    let mut rows: Vec<(f64, u8)> = Vec::new();
    for &(s, n, pos) in &counts {
        rows.extend((0..n).map(|i| (s, u8::from(i < pos))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in (1..rows.len()).rev() {
        rows.swap(i, rng.random_range(0..=i));
    }
    let (scores, labels): (Vec<f64>, Vec<u8>) = rows.into_iter().unzip();
    let fit = fit_sigmoid_report(&scores, &labels).unwrap();
    assert!(fit.gradient_norm <= SIGMOID_GRADIENT_TOL);
    assert!(fit.iterations <= 50, "{} iterations", fit.iterations);
}
