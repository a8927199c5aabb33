use proptest::prelude::*;
use saetbl::labeling::{phi_metric, phi_of, tally, triple_barrier_labels, ClassificationTally, Label, TblConfig};

/// Scans forward for each barrier separately and keeps the earlier touch.
fn oracle(closes: &[f64], lambda: f64, horizon: usize) -> Vec<i8> {
    (0..closes.len())
        .map(|t| {
            let touch = |hit: &dyn Fn(f64) -> bool| (t + 1..closes.len().min(t + horizon + 1)).find(|&j| hit(closes[j]));
            let up = touch(&|p| p >= closes[t] * (1.0 + lambda));
            let dn = touch(&|p| p <= closes[t] * (1.0 - lambda));
            match (up, dn) {
                (Some(u), Some(d)) => {
                    if u <= d {
                        1
                    } else {
                        -1
                    }
                }
                (Some(_), None) => 1,
                (None, Some(_)) => -1,
                (None, None) => 0,
            }
        })
        .collect()
}

fn path(steps: &[f64]) -> Vec<f64> {
    let mut p = 100.0;
    steps
        .iter()
        .map(|s| {
            p *= 1.0 + s;
            p
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn labels_match_oracle(
        steps in prop::collection::vec(-0.012f64..0.012, 500),
        li in 0usize..3,
        ni in 0usize..3,
    ) {
        let (lambda, horizon) = ([0.01, 0.02, 0.05][li], [5, 20, 60][ni]);
        let closes = path(&steps);
        let cfg = TblConfig { lambda, horizon, delta: 20.0 };
        let got: Vec<i8> = triple_barrier_labels(&closes, &cfg).unwrap().iter().map(|l| l.value()).collect();
        prop_assert_eq!(got, oracle(&closes, lambda, horizon));
    }
}

proptest! {
    #[test]
    fn phi_matches_direct_product(dcc in 0u64..400, dic in 0u64..400, tec in 0u64..400, lambda in 0.001f64..0.2) {
        let cfg = TblConfig { lambda, horizon: 10, delta: 20.0 };
        let t = ClassificationTally { dcc, dic, tec, zero_pred_count: 7 };
        let direct = (1.0 + lambda).powi(dcc as i32) * (1.0 - lambda).powi(dic as i32) * (1.0 - lambda / 20.0).powi(tec as i32);
        let phi = phi_metric(&t, &cfg).unwrap().value;
        prop_assert!(((phi - direct) / direct).abs() < 1e-12);
    }

    #[test]
    fn phi_moves_the_right_way(dcc in 0u64..300, dic in 0u64..300, tec in 0u64..300, lambda in 0.001f64..0.9, ratio in 1.01f64..100.0) {
        let cfg = TblConfig { lambda, horizon: 1, delta: lambda * ratio };
        let ln = |t: ClassificationTally| phi_metric(&t, &cfg).unwrap().ln;
        let t = ClassificationTally { dcc, dic, tec, zero_pred_count: 0 };
        let base = ln(t);
        let more_right = ln(ClassificationTally { dcc: dcc + 1, ..t });
        let more_wrong = ln(ClassificationTally { dic: dic + 1, ..t });
        let more_timed = ln(ClassificationTally { tec: tec + 1, ..t });
        prop_assert!(more_right > base);
        prop_assert!(more_wrong < base);
        prop_assert!(more_timed < base);
    }

    #[test]
    fn flat_predictions_are_the_baseline(truth in prop::collection::vec(0usize..3, 0..300)) {
        let truth: Vec<Label> = truth.into_iter().map(Label::from_class_index).collect();
        let flat = vec![Label::Flat; truth.len()];
        prop_assert_eq!(phi_of(&flat, &truth, &TblConfig::default()).unwrap().value, 1.0);
        prop_assert_eq!(tally(&flat, &truth).unwrap().zero_pred_count, truth.len() as u64);
    }
}

#[test]
fn twenty_timed_exits_cost_about_one_wrong_trade() {
    for i in 1..=50 {
        let lambda = i as f64 / 1000.0;
        let gap = ((1.0 - lambda / 20.0).powi(20) - (1.0 - lambda)).abs();
        assert!(gap < lambda * lambda, "λ={lambda}");
    }
}
