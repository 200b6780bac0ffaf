use aggfc_core::aggregation::{Aggregator, Strategy};
use aggfc_core::evaluation::{
    check_regret_bound, exp_concavity_margin, LossReport, RegretInstance, ReplicationRecord,
};
use aggfc_core::predictors::{build_nlms_bank, NlmsPredictor, Predictor};
use aggfc_core::tvar::{ar_to_pacf, check_stability, levinson_durbin, spectral_radius};
use proptest::prelude::*;

/// Direct-probability weights, recomputed from the full history at each step
/// without log-domain arithmetic.
fn naive_weights(strategy: Strategy, eta: f64, preds: &[Vec<f64>], xs: &[f64]) -> Vec<Vec<f64>> {
    let n = preds[0].len();
    let mut out = Vec::new();
    let mut cumulative = vec![0.0; n];
    for (row, &x) in preds.iter().zip(xs) {
        let raw: Vec<f64> = cumulative.iter().map(|c: &f64| (-eta * c).exp()).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let aggregate: f64 = w.iter().zip(row).map(|(a, p)| a * p).sum();
        for (c, p) in cumulative.iter_mut().zip(row) {
            *c += match strategy {
                Strategy::Gradient => 2.0 * (aggregate - x) * p,
                Strategy::Loss => (p - x) * (p - x),
            };
        }
        out.push(w);
    }
    out
}

fn recursive_weights(
    strategy: Strategy,
    eta: f64,
    preds: &[Vec<f64>],
    xs: &[f64],
) -> Vec<Vec<f64>> {
    let mut agg = Aggregator::new(preds[0].len(), eta, strategy).unwrap();
    let mut out = Vec::new();
    for (row, &x) in preds.iter().zip(xs) {
        out.push(agg.weights().to_vec());
        agg.predict(row).unwrap();
        agg.update(x).unwrap();
    }
    out
}

fn stream(n: usize, len: usize) -> impl Strategy2<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (
        prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), len),
        prop::collection::vec(-3.0..3.0f64, len),
    )
}

// the aggregation enum shadows proptest's trait name
use proptest::strategy::Strategy as Strategy2;

fn strategy_choice() -> impl Strategy2<Value = Strategy> {
    prop_oneof![Just(Strategy::Gradient), Just(Strategy::Loss)]
}

#[test]
fn bounded_pacf_is_not_uniformly_within_0_999() {
    let pacf = [
        0.0,
        -0.8755651227351157,
        0.7788639975385494,
        0.0,
        -0.8792093332093075,
    ];
    let theta = levinson_durbin(&pacf).unwrap();
    let r = spectral_radius(&theta);
    assert!(r > 0.999 && r < 1.0, "{r}");
    assert!(!check_stability(&theta, 0.999));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_stay_on_simplex(
        strategy in strategy_choice(),
        eta in 1e-3..5.0f64,
        (preds, xs) in (1usize..6).prop_flat_map(|n| stream(n, 40)),
    ) {
        for w in recursive_weights(strategy, eta, &preds, &xs) {
            prop_assert!(w.iter().all(|a| *a >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn recursion_matches_direct_weights(
        strategy in strategy_choice(),
        eta in 1e-3..0.5f64,
        (preds, xs) in stream(4, 30),
    ) {
        let direct = naive_weights(strategy, eta, &preds, &xs);
        let rec = recursive_weights(strategy, eta, &preds, &xs);
        for (a, b) in rec.iter().flatten().zip(direct.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn permuting_predictors_permutes_weights(
        strategy in strategy_choice(),
        eta in 1e-3..2.0f64,
        (preds, xs) in stream(4, 30),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let permuted: Vec<Vec<f64>> =
            preds.iter().map(|row| perm.iter().map(|&k| row[k]).collect()).collect();
        let w = recursive_weights(strategy, eta, &preds, &xs);
        let wp = recursive_weights(strategy, eta, &permuted, &xs);
        for (row, row_p) in w.iter().zip(&wp) {
            for (j, &k) in perm.iter().enumerate() {
                prop_assert!((row_p[j] - row[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_predictors_share_weights(
        strategy in strategy_choice(),
        eta in 1e-3..2.0f64,
        (preds, xs) in stream(3, 30),
    ) {
        let dup: Vec<Vec<f64>> = preds.iter().map(|r| vec![r[0], r[1], r[2], r[1]]).collect();
        for w in recursive_weights(strategy, eta, &dup, &xs) {
            prop_assert_eq!(w[1], w[3]);
        }
    }

    #[test]
    fn levinson_durbin_round_trips(pacf in prop::collection::vec(-0.9..0.9f64, 1..8)) {
        let theta = levinson_durbin(&pacf).unwrap();
        prop_assert!(spectral_radius(&theta) < 1.0);
        let back = ar_to_pacf(&theta).unwrap();
        for (a, b) in pacf.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn stability_is_monotone_in_margin(
        theta in prop::collection::vec(-1.5..1.5f64, 1..5),
        d1 in 0.05..0.99f64,
        d2 in 0.05..0.99f64,
    ) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        if check_stability(&theta, lo) {
            prop_assert!(check_stability(&theta, hi));
        }
        prop_assert_eq!(check_stability(&theta, hi), spectral_radius(&theta) <= hi * (1.0 + 1e-10));
    }

    #[test]
    fn nlms_predictions_are_clip_lipschitz(
        mu in 0.0..2.0f64,
        clip in 0.1..10.0f64,
        xs in prop::collection::vec(-50.0..50.0f64, 1..100),
    ) {
        let mut p = NlmsPredictor::new(3, mu, 1.0, clip).unwrap();
        for x in xs {
            let bound = clip * p.buffer().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(p.predict().abs() <= bound * (1.0 + 1e-12) + 1e-300);
            p.update(x);
            let l1: f64 = p.theta_hat().iter().map(|c| c.abs()).sum();
            prop_assert!(l1 <= clip * (1.0 + 1e-12));
        }
    }

    #[test]
    fn loss_strategy_regret_margin_is_nonnegative(
        eta in 1e-3..2.0f64,
        (preds, xs) in stream(4, 50),
    ) {
        let instance = RegretInstance { predictions: preds.clone(), observations: xs.clone() };
        let margin = check_regret_bound(Strategy::Loss, eta, &instance).unwrap();
        prop_assert!(margin >= -1e-9);

        // independent evaluation of both sides
        let t = xs.len() as f64;
        let w = naive_weights(Strategy::Loss, eta, &preds, &xs);
        let lhs: f64 = w.iter().zip(&preds).zip(&xs)
            .map(|((w, row), x)| {
                let p: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
                (p - x).powi(2)
            })
            .sum::<f64>() / t;
        let best = (0..4)
            .map(|i| preds.iter().zip(&xs).map(|(r, x)| (r[i] - x).powi(2)).sum::<f64>() / t)
            .fold(f64::INFINITY, f64::min);
        let slack: f64 = preds.iter().zip(&xs)
            .map(|(r, x)| {
                let y = x.abs() + r.iter().fold(0.0f64, |m, p| m.max(p.abs()));
                (y * y - 1.0 / (2.0 * eta)).max(0.0)
            })
            .sum::<f64>() / t;
        let rhs = best + 4f64.ln() / (t * eta) + slack;
        prop_assert!((rhs - lhs - margin).abs() <= 1e-8 * (1.0 + rhs.abs()));
    }

    #[test]
    fn gradient_strategy_regret_margin_is_nonnegative(
        eta in 1e-3..2.0f64,
        (preds, xs) in stream(3, 50),
    ) {
        let instance = RegretInstance { predictions: preds, observations: xs };
        prop_assert!(check_regret_bound(Strategy::Gradient, eta, &instance).unwrap() >= -1e-9);
    }

    #[test]
    fn exponential_concavity_holds(
        a in 1e-3..3.0f64,
        raw in prop::collection::vec((-1.0..=1.0f64, 1e-3..1.0f64), 1..10),
    ) {
        let support: Vec<f64> = raw.iter().map(|(s, _)| s * a).collect();
        let total: f64 = raw.iter().map(|(_, p)| p).sum();
        let probs: Vec<f64> = raw.iter().map(|(_, p)| p / total).collect();
        let lhs: f64 = support.iter().zip(&probs).map(|(x, p)| p * (-x * x).exp()).sum();
        let m: f64 = support.iter().zip(&probs).map(|(x, p)| p * x).sum();
        let rhs = (-m * m + (a * a - 0.5).max(0.0)).exp();
        prop_assert!(rhs - lhs >= -1e-12);
        let margin = exp_concavity_margin(&support, &probs, a).unwrap();
        prop_assert!((margin - (rhs - lhs)).abs() <= 1e-14);
    }

    #[test]
    fn report_quantiles_ignore_record_order(
        losses in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 9), 1..30),
        seed in any::<u64>(),
    ) {
        let (bank, _) = build_nlms_bank(1024, 0.5, 0.5, 3, 1.0, 8.0).unwrap();
        let ids: Vec<String> = (0..9).map(|k| format!("p{k}")).collect();
        let records: Vec<ReplicationRecord> = losses
            .into_iter()
            .enumerate()
            .map(|(r, losses)| ReplicationRecord { replication: r, seed: r as u64, losses, regret_margins: None })
            .collect();
        let mut shuffled = records.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = LossReport::from_records(ids.clone(), bank.clone(), vec![], records, vec![]);
        let b = LossReport::from_records(ids, bank, vec![], shuffled, vec![]);
        prop_assert_eq!(&a, &b);
        for s in &a.summary {
            prop_assert!(s.min <= s.q25 && s.q25 <= s.median && s.median <= s.q75 && s.q75 <= s.max);
        }
    }
}
