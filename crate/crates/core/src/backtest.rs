//! Signal-driven execution with barrier-managed trades and proportional fees.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{Label, TblConfig};
use crate::market_data::{format_ts, parse_ts, write_text, Bar, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionConfig {
    pub initial_capital: f64,
    /// Fraction charged on every open and every close.
    pub fee_rate: f64,
    pub lambda: f64,
    pub horizon: usize,
    /// Opposite signal closes the trade and opens the other side.
    pub reversal: bool,
    /// Signal 0 closes an open trade instead of holding it.
    pub flat_closes: bool,
    /// Barrier touches from bar high/low instead of the close.
    pub intrabar: bool,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            initial_capital: 1000.0,
            fee_rate: 0.0005,
            lambda: 0.02,
            horizon: 20,
            reversal: true,
            flat_closes: false,
            intrabar: false,
        }
    }
}

impl ExecutionConfig {
    pub fn for_labels(tbl: &TblConfig) -> Self {
        Self {
            lambda: tbl.lambda,
            horizon: tbl.horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_capital > 0.0 && self.initial_capital.is_finite()) {
            return Err(Error::Config("initial capital must be positive".into()));
        }
        if !(0.0..=0.01).contains(&self.fee_rate) {
            return Err(Error::Config(format!("fee rate {} outside [0, 0.01]", self.fee_rate)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("barrier λ = {} must lie in (0, 1)", self.lambda)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("time barrier must be at least one bar".into()));
        }
        Ok(())
    }

    /// Barrier parameters must be those the labels were produced with.
    pub fn check_matches(&self, tbl: &TblConfig) -> Result<()> {
        if self.lambda != tbl.lambda || self.horizon != tbl.horizon {
            return Err(Error::Config(format!(
                "execution barriers (λ={}, n={}) differ from labeling (λ={}, n={})",
                self.lambda, self.horizon, tbl.lambda, tbl.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    Short,
}

impl Direction {
    fn of(l: Label) -> Option<Direction> {
        match l {
            Label::Long => Some(Direction::Long),
            Label::Short => Some(Direction::Short),
            Label::Flat => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Long => "long",
            Direction::Short => "short",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    TakeProfit,
    StopLoss,
    TimeBarrier,
    Reversal,
    SignalFlat,
    EndOfData,
}

impl fmt::Display for ExitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExitReason::TakeProfit => "take_profit",
            ExitReason::StopLoss => "stop_loss",
            ExitReason::TimeBarrier => "time_barrier",
            ExitReason::Reversal => "reversal",
            ExitReason::SignalFlat => "signal_flat",
            ExitReason::EndOfData => "end_of_data",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub direction: Direction,
    pub entry_time: Timestamp,
    pub entry_price: f64,
    pub exit_time: Timestamp,
    pub exit_price: f64,
    pub exit_reason: ExitReason,
    /// Price move in the trade's favour, before fees.
    pub gross_return: f64,
    /// Currency paid on entry and exit.
    pub fees: f64,
}

/// Trading decisions aligned to bar timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub index: Vec<Timestamp>,
    pub signals: Vec<Label>,
}

impl SignalSeries {
    pub fn new(index: Vec<Timestamp>, signals: Vec<Label>) -> Result<Self> {
        if index.len() != signals.len() {
            return Err(Error::Shape(format!(
                "{} timestamps for {} signals",
                index.len(),
                signals.len()
            )));
        }
        Ok(Self { index, signals })
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn to_csv(&self) -> String {
        crate::labeling::labels_to_csv(&self.index, &self.signals)
            .expect("lengths checked at construction")
            .replacen("timestamp,label", "timestamp,signal", 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub timestamps: Vec<Timestamp>,
    pub equity: Vec<f64>,
}

impl EquityCurve {
    pub fn new(timestamps: Vec<Timestamp>, equity: Vec<f64>) -> Result<Self> {
        if timestamps.len() != equity.len() {
            return Err(Error::Shape(format!(
                "{} timestamps for {} equity values",
                timestamps.len(),
                equity.len()
            )));
        }
        if let Some(i) = equity.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::EquityBreach {
                timestamp: format_ts(&timestamps[i]),
                equity: equity[i],
            });
        }
        Ok(Self { timestamps, equity })
    }

    pub fn len(&self) -> usize {
        self.equity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equity.is_empty()
    }

    /// Simple returns between consecutive bars; one shorter than the curve.
    pub fn returns(&self) -> Vec<f64> {
        self.equity.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,equity\n");
        for (t, e) in self.timestamps.iter().zip(&self.equity) {
            out.push_str(&format!("{},{}\n", format_ts(t), e));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            msg,
        };
        let mut lines = text.lines();
        if lines.next() != Some("timestamp,equity") {
            return Err(parse_err(1, "expected header `timestamp,equity`".into()));
        }
        let (mut ts, mut eq) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let (t, e) = line
                .split_once(',')
                .ok_or_else(|| parse_err(i + 2, "expected two fields".into()))?;
            let t = parse_ts(t).map_err(|m| parse_err(i + 2, m))?;
            if ts.last().is_some_and(|prev| *prev >= t) {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    line: (i + 2) as u64,
                    timestamp: format_ts(&t),
                });
            }
            ts.push(t);
            eq.push(e.trim().parse::<f64>().map_err(|e| parse_err(i + 2, e.to_string()))?);
        }
        Self::new(ts, eq)
    }
}

pub fn trades_to_csv(trades: &[Trade]) -> String {
    let mut out = String::from("entry_time,exit_time,direction,entry_price,exit_price,exit_reason,gross_return,fees\n");
    for t in trades {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            format_ts(&t.entry_time),
            format_ts(&t.exit_time),
            t.direction.as_str(),
            t.entry_price,
            t.exit_price,
            t.exit_reason,
            t.gross_return,
            t.fees
        ));
    }
    out
}

struct Position {
    direction: Direction,
    entry_idx: usize,
    entry_price: f64,
    /// Equity committed after the entry fee.
    notional: f64,
    entry_fee: f64,
}

impl Position {
    fn gross_at(&self, price: f64) -> f64 {
        match self.direction {
            Direction::Long => price / self.entry_price - 1.0,
            Direction::Short => 1.0 - price / self.entry_price,
        }
    }
}

/// Runs the execution state machine over `bars`.
///
/// Positions open at the close of the signalling bar. An open trade exits at the
/// first of: a barrier touch (booked at the barrier price), the time barrier at
/// that bar's close, or an opposite signal (close and reopen). Whatever is still
/// open on the last bar closes there. The first equity value equals the initial
/// capital whenever the first signal is 0.
pub fn simulate(signals: &SignalSeries, bars: &[Bar], cfg: &ExecutionConfig) -> Result<(EquityCurve, Vec<Trade>)> {
    cfg.validate()?;
    if signals.len() != bars.len() || signals.index.iter().zip(bars).any(|(t, b)| *t != b.timestamp) {
        return Err(Error::Shape("signal index does not match the bar index".into()));
    }
    let f = cfg.fee_rate;
    let last = bars.len().saturating_sub(1);
    let mut cash = cfg.initial_capital;
    let mut open: Option<Position> = None;
    let mut trades = Vec::new();
    let mut equity = Vec::with_capacity(bars.len());

    let close = |pos: Position, i: usize, price: f64, gross: f64, reason: ExitReason, trades: &mut Vec<Trade>| {
        let value = pos.notional * (1.0 + gross);
        let fee = value * f;
        trades.push(Trade {
            direction: pos.direction,
            entry_time: bars[pos.entry_idx].timestamp,
            entry_price: pos.entry_price,
            exit_time: bars[i].timestamp,
            exit_price: price,
            exit_reason: reason,
            gross_return: gross,
            fees: pos.entry_fee + fee,
        });
        value - fee
    };
    let enter = |dir: Direction, i: usize, cash: f64| {
        let fee = cash * f;
        Position {
            direction: dir,
            entry_idx: i,
            entry_price: bars[i].close,
            notional: cash - fee,
            entry_fee: fee,
        }
    };

    for (i, bar) in bars.iter().enumerate() {
        let p = bar.close;
        if let Some(pos) = open.take() {
            let upper = pos.entry_price * (1.0 + cfg.lambda);
            let lower = pos.entry_price * (1.0 - cfg.lambda);
            let (hi, lo) = if cfg.intrabar { (bar.high, bar.low) } else { (p, p) };
            let (win, lose) = match pos.direction {
                Direction::Long => (ExitReason::TakeProfit, ExitReason::StopLoss),
                Direction::Short => (ExitReason::StopLoss, ExitReason::TakeProfit),
            };
            let exit = if hi >= upper {
                let gross = if win == ExitReason::TakeProfit { cfg.lambda } else { -cfg.lambda };
                Some((upper, gross, win))
            } else if lo <= lower {
                let gross = if lose == ExitReason::TakeProfit { cfg.lambda } else { -cfg.lambda };
                Some((lower, gross, lose))
            } else if i - pos.entry_idx >= cfg.horizon {
                Some((p, pos.gross_at(p), ExitReason::TimeBarrier))
            } else {
                None
            };
            match exit {
                Some((price, gross, reason)) => cash = close(pos, i, price, gross, reason, &mut trades),
                None => open = Some(pos),
            }
        }

        let signal = Direction::of(signals.signals[i]);
        if i == last {
            if let Some(pos) = open.take() {
                let g = pos.gross_at(p);
                cash = close(pos, i, p, g, ExitReason::EndOfData, &mut trades);
            }
        } else {
            match (open.take(), signal) {
                (None, Some(dir)) => open = Some(enter(dir, i, cash)),
                (Some(pos), Some(dir)) if dir != pos.direction && cfg.reversal => {
                    let g = pos.gross_at(p);
                    cash = close(pos, i, p, g, ExitReason::Reversal, &mut trades);
                    open = Some(enter(dir, i, cash));
                }
                (Some(pos), None) if cfg.flat_closes => {
                    let g = pos.gross_at(p);
                    cash = close(pos, i, p, g, ExitReason::SignalFlat, &mut trades);
                }
                (pos, _) => open = pos,
            }
        }

        let e = match &open {
            Some(pos) => pos.notional * (1.0 + pos.gross_at(p)),
            None => cash,
        };
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::EquityBreach {
                timestamp: format_ts(&bar.timestamp),
                equity: e,
            });
        }
        equity.push(e);
    }
    let curve = EquityCurve::new(bars.iter().map(|b| b.timestamp).collect(), equity)?;
    Ok((curve, trades))
}

/// Fixed-weight portfolio rebalanced every bar, compounded from `Σ wᵢ·equityᵢ[0]`.
pub fn portfolio_equity(curves: &[EquityCurve], weights: &[f64]) -> Result<EquityCurve> {
    if curves.is_empty() || curves.len() != weights.len() {
        return Err(Error::Shape(format!("{} curves for {} weights", curves.len(), weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config("portfolio weights must be ≥ 0 and sum to 1".into()));
    }
    let index = &curves[0].timestamps;
    if curves.iter().any(|c| &c.timestamps != index) {
        return Err(Error::Shape("portfolio curves do not share an index".into()));
    }
    if index.is_empty() {
        return EquityCurve::new(Vec::new(), Vec::new());
    }
    let returns: Vec<Vec<f64>> = curves.iter().map(EquityCurve::returns).collect();
    let mut e = weights.iter().zip(curves).map(|(w, c)| w * c.equity[0]).sum::<f64>();
    let mut out = Vec::with_capacity(index.len());
    out.push(e);
    for t in 0..index.len() - 1 {
        let r: f64 = weights.iter().zip(&returns).map(|(w, rs)| w * rs[t]).sum();
        e *= 1.0 + r;
        out.push(e);
    }
    EquityCurve::new(index.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::ts_from_millis;

    pub(crate) fn bars_from(closes: &[f64]) -> Vec<Bar> {
        closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Bar {
                timestamp: ts_from_millis(1_600_000_000_000 + i as i64 * 60_000).unwrap(),
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 1.0,
            })
            .collect()
    }

    fn series(bars: &[Bar], s: &[i8]) -> SignalSeries {
        SignalSeries::new(
            bars.iter().map(|b| b.timestamp).collect(),
            s.iter().map(|&v| Label::try_from(v).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn all_flat_is_constant() {
        let bars = bars_from(&[100.0, 101.0, 99.0, 120.0]);
        let (c, t) = simulate(&series(&bars, &[0, 0, 0, 0]), &bars, &ExecutionConfig::default()).unwrap();
        assert_eq!(c.equity, vec![1000.0; 4]);
        assert!(t.is_empty());
    }

    #[test]
    fn long_take_profit() {
        let bars = bars_from(&[100.0, 100.0, 101.0, 102.5, 103.0, 103.0]);
        let (c, t) = simulate(&series(&bars, &[0, 1, 0, 0, 0, 0]), &bars, &ExecutionConfig::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].exit_reason, ExitReason::TakeProfit);
        assert_eq!(t[0].gross_return, 0.02);
        assert!((t[0].exit_price - 102.0).abs() < 1e-12);
        let want = 1000.0 * (1.0 - 0.0005) * 1.02 * (1.0 - 0.0005);
        assert!((c.equity[5] - want).abs() < 1e-9);
        assert!((want - 1018.98).abs() < 0.005);
        assert_eq!(c.equity[0], 1000.0);
        assert!((c.equity[1] - 1000.0 * 0.9995).abs() < 1e-12);
    }

    #[test]
    fn short_stop_loss_and_time_barrier() {
        let cfg = ExecutionConfig {
            horizon: 3,
            fee_rate: 0.0,
            ..ExecutionConfig::default()
        };
        let bars = bars_from(&[100.0, 103.0, 100.0, 100.5, 101.0, 100.0]);
        let (_, t) = simulate(&series(&bars, &[-1, 0, 0, 0, 0, 0]), &bars, &cfg).unwrap();
        assert_eq!(t[0].exit_reason, ExitReason::StopLoss);
        assert_eq!(t[0].gross_return, -0.02);
        let (c, t) = simulate(&series(&bars, &[0, 0, -1, 0, 0, 0]), &bars, &cfg).unwrap();
        assert_eq!(t[0].exit_reason, ExitReason::TimeBarrier);
        assert_eq!(t[0].exit_time, bars[5].timestamp);
        assert_eq!(t[0].gross_return, 0.0);
        assert_eq!(c.equity[5], 1000.0);
    }

    #[test]
    fn reversal_pays_three_fees() {
        let bars = bars_from(&[100.0, 100.0, 100.0, 100.0]);
        let (c, t) = simulate(&series(&bars, &[1, -1, 0, 0]), &bars, &ExecutionConfig::default()).unwrap();
        assert_eq!(t[0].exit_reason, ExitReason::Reversal);
        assert!((c.equity[1] - 1000.0 * 0.9995f64.powi(3)).abs() < 1e-9);
        assert_eq!(t[1].exit_reason, ExitReason::EndOfData);
        assert!((c.equity[3] - 1000.0 * 0.9995f64.powi(4)).abs() < 1e-9);
    }

    #[test]
    fn same_direction_and_flat_signals_hold() {
        let bars = bars_from(&[100.0, 100.5, 101.0, 100.5, 101.0]);
        let (_, t) = simulate(&series(&bars, &[1, 1, 0, 1, 0]), &bars, &ExecutionConfig::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].exit_reason, ExitReason::EndOfData);
        let cfg = ExecutionConfig {
            flat_closes: true,
            ..ExecutionConfig::default()
        };
        let (_, t) = simulate(&series(&bars, &[1, 1, 0, 0, 0]), &bars, &cfg).unwrap();
        assert_eq!(t[0].exit_reason, ExitReason::SignalFlat);
        let cfg = ExecutionConfig {
            reversal: false,
            ..ExecutionConfig::default()
        };
        let (_, t) = simulate(&series(&bars, &[1, -1, 0, 0, 0]), &bars, &cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].direction, Direction::Long);
    }

    #[test]
    fn intrabar_touch() {
        let mut bars = bars_from(&[100.0, 100.0, 100.0]);
        bars[1].high = 103.0;
        let cfg = ExecutionConfig {
            intrabar: true,
            ..ExecutionConfig::default()
        };
        let (_, t) = simulate(&series(&bars, &[1, 0, 0]), &bars, &cfg).unwrap();
        assert_eq!(t[0].exit_reason, ExitReason::TakeProfit);
        let (_, t) = simulate(&series(&bars, &[1, 0, 0]), &bars, &ExecutionConfig::default()).unwrap();
        assert_eq!(t[0].exit_reason, ExitReason::EndOfData);
    }

    #[test]
    fn index_mismatch() {
        let bars = bars_from(&[100.0, 101.0]);
        let s = series(&bars_from(&[1.0, 1.0, 1.0]), &[0, 0, 0]);
        assert!(matches!(simulate(&s, &bars, &ExecutionConfig::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn portfolio_examples() {
        let bars = bars_from(&[1.0, 1.0, 1.0]);
        let ts: Vec<_> = bars.iter().map(|b| b.timestamp).collect();
        let flat = EquityCurve::new(ts.clone(), vec![1000.0; 3]).unwrap();
        let up = EquityCurve::new(ts.clone(), vec![1000.0, 1010.0, 1020.1]).unwrap();
        let p = portfolio_equity(&[flat.clone(), up.clone()], &[0.5, 0.5]).unwrap();
        assert!((p.equity[1] - 1005.0).abs() < 1e-9);
        assert!((p.equity[2] - 1005.0 * 1.005).abs() < 1e-9);
        assert_eq!(portfolio_equity(&[up.clone()], &[1.0]).unwrap(), up);
        let same = portfolio_equity(&[up.clone(), up.clone()], &[0.5, 0.5]).unwrap();
        for (a, b) in same.equity.iter().zip(&up.equity) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(portfolio_equity(&[up.clone()], &[0.7]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let bars = bars_from(&[100.0, 101.0, 102.5]);
        let c = EquityCurve::new(bars.iter().map(|b| b.timestamp).collect(), vec![1000.0, 1000.1 / 3.0, 999.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("equity.csv");
        c.write_csv(&p).unwrap();
        assert_eq!(EquityCurve::load_csv(&p).unwrap(), c);
        let head = trades_to_csv(&[]);
        assert_eq!(head, "entry_time,exit_time,direction,entry_price,exit_price,exit_reason,gross_return,fees\n");
    }
}
