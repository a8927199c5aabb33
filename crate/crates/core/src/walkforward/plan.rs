use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::backtest::SignalSeries;
use crate::error::{Error, Result};
use crate::market_data::{format_ts, Timestamp};

/// Half-open `[start, end)` interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeRange {
    pub fn contains(&self, t: &Timestamp) -> bool {
        self.start <= *t && *t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub index: usize,
    /// 1-based period numbers.
    pub train_periods: Vec<usize>,
    pub validation_period: Option<usize>,
    pub test_period: usize,
    pub train: TimeRange,
    pub validation: Option<TimeRange>,
    pub test: TimeRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub period_seconds: i64,
    pub max_train_periods: usize,
    pub use_validation: bool,
    pub periods: Vec<TimeRange>,
    pub splits: Vec<Split>,
}

/// Tiles periods backward from `oos_start` (a partial leading fragment is
/// dropped) and forward to `oos_end` (the last test period may be short).
/// Split k trains on periods `max(1, k−cap+1)..=k` and tests on k+1; with
/// validation, period k becomes the validation slice.
pub fn plan_splits(
    in_sample_start: Timestamp,
    oos_start: Timestamp,
    oos_end: Timestamp,
    period: TimeDelta,
    max_train_periods: usize,
    use_validation: bool,
) -> Result<SplitPlan> {
    if period <= TimeDelta::zero() {
        return Err(Error::Config("period length must be positive".into()));
    }
    if max_train_periods == 0 {
        return Err(Error::Config("max train periods must be ≥ 1".into()));
    }
    if use_validation && max_train_periods < 2 {
        return Err(Error::Config("validation needs a train cap of at least 2 periods".into()));
    }
    if oos_end <= oos_start {
        return Err(Error::Config("out-of-sample end must follow its start".into()));
    }
    let in_sample = (oos_start - in_sample_start).num_seconds() / period.num_seconds();
    let needed = if use_validation { 2 } else { 1 };
    if in_sample < needed {
        return Err(Error::Config(format!(
            "in-sample span from {} to {} holds {in_sample} whole periods; {needed} required",
            format_ts(&in_sample_start),
            format_ts(&oos_start)
        )));
    }
    let in_sample = in_sample as usize;
    let mut periods: Vec<TimeRange> = (1..=in_sample)
        .rev()
        .map(|i| TimeRange {
            start: oos_start - period * i as i32,
            end: oos_start - period * (i as i32 - 1),
        })
        .collect();
    let mut start = oos_start;
    while start < oos_end {
        let end = (start + period).min(oos_end);
        periods.push(TimeRange { start, end });
        start = end;
    }

    let splits = (in_sample + 1..=periods.len())
        .enumerate()
        .map(|(index, test_period)| {
            let k = test_period - 1;
            let lo = (k + 1).saturating_sub(max_train_periods).max(1);
            let (train_periods, validation_period): (Vec<usize>, _) = if use_validation {
                ((lo..k).collect(), Some(k))
            } else {
                ((lo..=k).collect(), None)
            };
            let span = |a: usize, b: usize| TimeRange {
                start: periods[a - 1].start,
                end: periods[b - 1].end,
            };
            Split {
                index,
                train: span(train_periods[0], *train_periods.last().unwrap()),
                validation: validation_period.map(|v| span(v, v)),
                test: span(test_period, test_period),
                train_periods,
                validation_period,
                test_period,
            }
        })
        .collect();

    Ok(SplitPlan {
        period_seconds: period.num_seconds(),
        max_train_periods,
        use_validation,
        periods,
        splits,
    })
}

/// Joins per-split test predictions into one series; test ranges must follow
/// each other without gap or overlap.
pub fn concat_signals(parts: &[(&TimeRange, &SignalSeries)]) -> Result<SignalSeries> {
    let mut index = Vec::new();
    let mut signals = Vec::new();
    let mut prev: Option<&TimeRange> = None;
    for (i, (range, s)) in parts.iter().enumerate() {
        if let Some(p) = prev {
            if p.end != range.start {
                return Err(Error::PlanViolation(format!(
                    "test range {i} starts at {} but the previous one ends at {}",
                    format_ts(&range.start),
                    format_ts(&p.end)
                )));
            }
        }
        if let Some(t) = s.index.iter().find(|t| !range.contains(t)) {
            return Err(Error::PlanViolation(format!(
                "prediction at {} lies outside its test range",
                format_ts(t)
            )));
        }
        index.extend_from_slice(&s.index);
        signals.extend_from_slice(&s.signals);
        prev = Some(range);
    }
    SignalSeries::new(index, signals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
    }

    fn six(cap: usize, validation: bool) -> Result<SplitPlan> {
        let p = TimeDelta::days(10);
        plan_splits(t0(), t0() + p, t0() + p * 6, p, cap, validation)
    }

    #[test]
    fn six_periods_cap_three() {
        let plan = six(3, false).unwrap();
        let trains: Vec<Vec<usize>> = plan.splits.iter().map(|s| s.train_periods.clone()).collect();
        assert_eq!(trains, vec![vec![1], vec![1, 2], vec![1, 2, 3], vec![2, 3, 4], vec![3, 4, 5]]);
        let tests: Vec<usize> = plan.splits.iter().map(|s| s.test_period).collect();
        assert_eq!(tests, vec![2, 3, 4, 5, 6]);
        for w in plan.splits.windows(2) {
            assert_eq!(w[0].test.end, w[1].test.start);
        }
        for s in &plan.splits {
            assert!(s.train.end <= s.test.start);
            assert!((s.train.end - s.train.start) <= TimeDelta::days(30));
        }
    }

    #[test]
    fn degenerate_caps() {
        let p = TimeDelta::days(10);
        let plan = plan_splits(t0(), t0() + p, t0() + p * 2, p, 3, false).unwrap();
        assert_eq!(plan.splits.len(), 1);
        assert_eq!(plan.splits[0].train_periods, vec![1]);
        let rolling = six(1, false).unwrap();
        for s in &rolling.splits {
            assert_eq!(s.train_periods, vec![s.test_period - 1]);
        }
    }

    #[test]
    fn validation_carves_trailing_period() {
        let p = TimeDelta::days(10);
        let plan = plan_splits(t0(), t0() + p * 2, t0() + p * 6, p, 3, true).unwrap();
        let first = &plan.splits[0];
        assert_eq!(first.train_periods, vec![1]);
        assert_eq!(first.validation_period, Some(2));
        assert_eq!(first.test_period, 3);
        let last = plan.splits.last().unwrap();
        assert_eq!(last.train_periods, vec![3, 4]);
        assert_eq!(last.validation_period, Some(5));
        for s in &plan.splits {
            let v = s.validation.unwrap();
            assert!(s.train.end <= v.start && v.end <= s.test.start);
        }
        assert!(six(3, true).is_err());
    }

    #[test]
    fn partial_periods() {
        let p = TimeDelta::days(10);
        // 2.5 in-sample periods, 1.5 out-of-sample
        let plan = plan_splits(t0(), t0() + TimeDelta::days(25), t0() + TimeDelta::days(40), p, 3, false).unwrap();
        assert_eq!(plan.periods.len(), 4);
        assert_eq!(plan.periods[0].start, t0() + TimeDelta::days(5));
        assert_eq!(plan.splits.last().unwrap().test.end, t0() + TimeDelta::days(40));
        assert!(plan_splits(t0(), t0() + TimeDelta::days(5), t0() + p, p, 3, false).is_err());
    }

    #[test]
    fn concat_checks_order() {
        let plan = six(3, false).unwrap();
        let series = |r: &TimeRange| SignalSeries::new(vec![r.start], vec![crate::labeling::Label::Long]).unwrap();
        let a = series(&plan.splits[0].test);
        let b = series(&plan.splits[1].test);
        let one = concat_signals(&[(&plan.splits[0].test, &a)]).unwrap();
        assert_eq!(one, a);
        let two = concat_signals(&[(&plan.splits[0].test, &a), (&plan.splits[1].test, &b)]).unwrap();
        assert_eq!(two.len(), 2);
        assert!(matches!(
            concat_signals(&[(&plan.splits[1].test, &b), (&plan.splits[0].test, &a)]),
            Err(Error::PlanViolation(_))
        ));
        assert!(matches!(
            concat_signals(&[(&plan.splits[1].test, &a)]),
            Err(Error::PlanViolation(_))
        ));
    }
}
