use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saetbl::backtest::{simulate, Direction, ExecutionConfig, ExitReason, SignalSeries};
use saetbl::labeling::{triple_barrier_labels, Label, TblConfig};
use saetbl::market_data::{ts_from_millis, Bar};

fn bars_from(closes: &[f64]) -> Vec<Bar> {
    closes
        .iter()
        .enumerate()
        .map(|(i, &c)| Bar {
            timestamp: ts_from_millis(1_700_000_000_000 + i as i64 * 60_000).unwrap(),
            open: c,
            high: c,
            low: c,
            close: c,
            volume: 1.0,
        })
        .collect()
}

fn walk(n: usize, vol: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p = 100.0;
    (0..n)
        .map(|_| {
            p *= 1.0 + rng.random_range(-vol..vol);
            p
        })
        .collect()
}

fn signals_for(bars: &[Bar], s: Vec<Label>) -> SignalSeries {
    SignalSeries::new(bars.iter().map(|b| b.timestamp).collect(), s).unwrap()
}

/// Replays the trading rules as a list of (direction, entry, exit, gross) events
/// and compounds fee and return factors; never tracks cash.
fn replay_final_equity(closes: &[f64], sig: &[i8], lambda: f64, n: usize, fee: f64, capital: f64) -> f64 {
    let last = closes.len() - 1;
    let mut factor = 1.0;
    let mut state: Option<(i8, usize)> = None;
    for t in 0..closes.len() {
        if let Some((d, e)) = state {
            let up = closes[e] * (1.0 + lambda);
            let dn = closes[e] * (1.0 - lambda);
            let g = if closes[t] >= up {
                Some(if d > 0 { lambda } else { -lambda })
            } else if closes[t] <= dn {
                Some(if d > 0 { -lambda } else { lambda })
            } else if t - e >= n {
                Some(d as f64 * (closes[t] / closes[e] - 1.0))
            } else {
                None
            };
            if let Some(g) = g {
                factor *= (1.0 + g) * (1.0 - fee);
                state = None;
            }
        }
        if t == last {
            if let Some((d, e)) = state {
                factor *= (1.0 + d as f64 * (closes[t] / closes[e] - 1.0)) * (1.0 - fee);
            }
            break;
        }
        match (state, sig[t]) {
            (None, s) if s != 0 => {
                factor *= 1.0 - fee;
                state = Some((s, t));
            }
            (Some((d, e)), s) if s == -d => {
                factor *= (1.0 + d as f64 * (closes[t] / closes[e] - 1.0)) * (1.0 - fee) * (1.0 - fee);
                state = Some((s, t));
            }
            _ => {}
        }
    }
    capital * factor
}

#[test]
fn random_path_matches_event_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let closes = walk(1000, 0.01, &mut rng);
        let sig: Vec<i8> = (0..1000)
            .map(|_| match rng.random_range(0..10) {
                0 => 1,
                1 => -1,
                _ => 0,
            })
            .collect();
        let bars = bars_from(&closes);
        let labels = sig.iter().map(|&v| Label::try_from(v).unwrap()).collect();
        let cfg = ExecutionConfig::default();
        let (curve, trades) = simulate(&signals_for(&bars, labels), &bars, &cfg).unwrap();
        let want = replay_final_equity(&closes, &sig, cfg.lambda, cfg.horizon, cfg.fee_rate, cfg.initial_capital);
        let got = *curve.equity.last().unwrap();
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
        assert!(!trades.is_empty());
        assert!(trades.iter().all(|t| t.exit_time > t.entry_time));
    }
}

fn tbl() -> TblConfig {
    TblConfig::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn true_labels_reproduce_return_table(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let closes = walk(400, 0.006, &mut rng);
        let bars = bars_from(&closes);
        let labels = triple_barrier_labels(&closes, &tbl()).unwrap();
        let cfg = ExecutionConfig { fee_rate: 0.0, ..ExecutionConfig::for_labels(&tbl()) };
        let (_, trades) = simulate(&signals_for(&bars, labels.clone()), &bars, &cfg).unwrap();
        for t in &trades {
            match t.exit_reason {
                ExitReason::TakeProfit => prop_assert_eq!(t.gross_return, cfg.lambda),
                ExitReason::StopLoss => prop_assert_eq!(t.gross_return, -cfg.lambda),
                ExitReason::TimeBarrier => prop_assert!(t.gross_return.abs() < cfg.lambda),
                _ => {}
            }
            // the labeler and the simulator agree on each trade's entry bar
            prop_assert!(t.exit_reason != ExitReason::StopLoss);
        }
    }

    #[test]
    fn labelled_entry_hits_take_profit(seed in any::<u64>(), at in 0usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let closes = walk(400, 0.006, &mut rng);
        let bars = bars_from(&closes);
        let labels = triple_barrier_labels(&closes, &tbl()).unwrap();
        prop_assume!(labels[at] != Label::Flat);
        let mut sig = vec![Label::Flat; closes.len()];
        sig[at] = labels[at];
        let (_, trades) = simulate(&signals_for(&bars, sig), &bars, &ExecutionConfig::for_labels(&tbl())).unwrap();
        prop_assert_eq!(trades.len(), 1);
        prop_assert_eq!(trades[0].exit_reason, ExitReason::TakeProfit);
        let want = if labels[at] == Label::Long { Direction::Long } else { Direction::Short };
        prop_assert_eq!(trades[0].direction, want);
    }

    #[test]
    fn fees_strictly_reduce_equity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let closes = walk(300, 0.01, &mut rng);
        let bars = bars_from(&closes);
        let mut sig: Vec<Label> = (0..300).map(|_| Label::from_class_index(rng.random_range(0..3))).collect();
        sig[0] = Label::Long;
        let s = signals_for(&bars, sig);
        let with = simulate(&s, &bars, &ExecutionConfig::default()).unwrap().0;
        let without = simulate(&s, &bars, &ExecutionConfig { fee_rate: 0.0, ..ExecutionConfig::default() }).unwrap().0;
        prop_assert!(with.equity.last().unwrap() < without.equity.last().unwrap());
    }

    #[test]
    fn prepending_flat_bars_is_invariant(seed in any::<u64>(), k in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let closes = walk(200, 0.01, &mut rng);
        let sig: Vec<Label> = (0..200).map(|_| Label::from_class_index(rng.random_range(0..3))).collect();
        let bars = bars_from(&closes);
        let (base, base_trades) = simulate(&signals_for(&bars, sig.clone()), &bars, &ExecutionConfig::default()).unwrap();

        let mut longer = walk(k, 0.01, &mut rng);
        longer.extend_from_slice(&closes);
        let mut longer_sig = vec![Label::Flat; k];
        longer_sig.extend(sig);
        let lbars = bars_from(&longer);
        let (shifted, shifted_trades) = simulate(&signals_for(&lbars, longer_sig), &lbars, &ExecutionConfig::default()).unwrap();
        prop_assert!(shifted.equity[..k].iter().all(|e| *e == 1000.0));
        prop_assert_eq!(&shifted.equity[k..], &base.equity[..]);
        prop_assert_eq!(shifted_trades.len(), base_trades.len());
    }
}
