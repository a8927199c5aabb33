//! Risk-adjusted performance statistics and return correlations.

use serde::{Deserialize, Serialize};

use crate::backtest::EquityCurve;
use crate::error::{Error, Result};

pub const MINUTES_PER_YEAR: f64 = 365.0 * 24.0 * 60.0;

/// Bars in a year of round-the-clock trading.
pub fn bars_per_year(interval_minutes: u32) -> f64 {
    MINUTES_PER_YEAR / interval_minutes as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    #[default]
    Simple,
    Log,
}

fn bar_returns(curve: &EquityCurve, kind: ReturnKind) -> Vec<f64> {
    match kind {
        ReturnKind::Simple => curve.returns(),
        ReturnKind::Log => curve.equity.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub total_return: f64,
    pub arc: f64,
    pub asd: f64,
    pub mdd: f64,
    /// Absent when ASD is zero.
    pub ir: Option<f64>,
    /// Absent when IR is absent or MDD is zero.
    pub ir_star: Option<f64>,
    pub trade_count: Option<usize>,
    pub phi: Option<f64>,
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Largest fall from a running peak, as a fraction of that peak.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut mdd: f64 = 0.0;
    for &e in equity {
        peak = peak.max(e);
        mdd = mdd.max((peak - e) / peak);
    }
    mdd
}

/// `IR · |ARC| / MDD`, carrying the sign of ARC.
pub fn ir_star(ir: f64, arc: f64, mdd: f64) -> Option<f64> {
    (mdd > 0.0).then(|| ir * arc.abs() / mdd)
}

pub fn perf_report(curve: &EquityCurve, bars_per_year: f64) -> Result<PerfReport> {
    perf_report_with(curve, bars_per_year, ReturnKind::Simple)
}

/// Statistics of one equity curve; ARC annualizes over the number of bar-to-bar returns.
pub fn perf_report_with(curve: &EquityCurve, bars_per_year: f64, kind: ReturnKind) -> Result<PerfReport> {
    if curve.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: curve.len(),
        });
    }
    if !(bars_per_year > 0.0 && bars_per_year.is_finite()) {
        return Err(Error::Config("bars per year must be positive".into()));
    }
    let start = curve.equity[0];
    let end = *curve.equity.last().unwrap();
    let growth = end / start;
    let returns = bar_returns(curve, kind);
    let arc = growth.powf(bars_per_year / returns.len() as f64) - 1.0;
    let asd = sample_std(&returns) * bars_per_year.sqrt();
    let mdd = max_drawdown(&curve.equity);
    let ir = (asd > 0.0).then(|| arc / asd);
    Ok(PerfReport {
        total_return: growth - 1.0,
        arc,
        asd,
        mdd,
        ir,
        ir_star: ir.and_then(|ir| ir_star(ir, arc, mdd)),
        trade_count: None,
        phi: None,
    })
}

/// Pearson correlations of per-bar returns. Rows and columns of constant
/// curves are absent, including their diagonal.
pub fn return_correlation(curves: &[EquityCurve]) -> Result<Vec<Vec<Option<f64>>>> {
    return_correlation_with(curves, ReturnKind::Simple)
}

pub fn return_correlation_with(curves: &[EquityCurve], kind: ReturnKind) -> Result<Vec<Vec<Option<f64>>>> {
    let Some(first) = curves.first() else {
        return Ok(Vec::new());
    };
    if curves.iter().any(|c| c.timestamps != first.timestamps) {
        return Err(Error::Shape("curves do not share an index".into()));
    }
    if first.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: first.len(),
        });
    }
    let centred: Vec<Option<Vec<f64>>> = curves
        .iter()
        .map(|c| {
            let r = bar_returns(c, kind);
            let m = r.iter().sum::<f64>() / r.len() as f64;
            let d: Vec<f64> = r.iter().map(|x| x - m).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm > 0.0).then(|| d.iter().map(|x| x / norm).collect())
        })
        .collect();
    let n = curves.len();
    let mut out = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            if let (Some(a), Some(b)) = (&centred[i], &centred[j]) {
                let rho = if i == j {
                    1.0
                } else {
                    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
                };
                out[i][j] = Some(rho);
                out[j][i] = Some(rho);
            }
        }
    }
    Ok(out)
}

/// Correlation matrix as CSV with a leading label column; absent cells are empty.
pub fn correlation_to_csv(names: &[String], matrix: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("strategy");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (n, row) in names.iter().zip(matrix) {
        out.push_str(n);
        for v in row {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::ts_from_millis;

    pub(crate) fn curve(values: &[f64]) -> EquityCurve {
        let ts = (0..values.len())
            .map(|i| ts_from_millis(i as i64 * 60_000).unwrap())
            .collect();
        EquityCurve::new(ts, values.to_vec()).unwrap()
    }

    #[test]
    fn constant_curve() {
        let r = perf_report(&curve(&[1000.0; 10]), 100.0).unwrap();
        assert_eq!(r.total_return, 0.0);
        assert_eq!(r.mdd, 0.0);
        assert_eq!(r.asd, 0.0);
        assert_eq!(r.ir, None);
        assert_eq!(r.ir_star, None);
    }

    #[test]
    fn drawdown_example() {
        assert_eq!(max_drawdown(&[100.0, 120.0, 90.0, 110.0]), 0.25);
        let r = perf_report(&curve(&[100.0, 120.0, 90.0, 110.0]), 3.0).unwrap();
        assert!((r.total_return - 0.1).abs() < 1e-12);
        // three returns over a three-bar year
        assert!((r.arc - 0.1).abs() < 1e-12);
    }

    #[test]
    fn constant_growth_arc() {
        let g: f64 = 0.001;
        let bpy = 500.0;
        let values: Vec<f64> = (0..=500).map(|i| 1000.0 * (1.0 + g).powi(i)).collect();
        let r = perf_report(&curve(&values), bpy).unwrap();
        assert!((r.arc - ((1.0 + g).powf(bpy) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reported_ratio_consistency() {
        // ASD 21.11%, IR 2.03, MDD 14.02%
        let arc = 2.03 * 0.2111;
        let v = ir_star(2.03, arc, 0.1402).unwrap();
        assert!((v - 6.20).abs() < 0.05, "{v}");
        assert!((v - 6.22).abs() < 0.05);
        assert_eq!(ir_star(1.0, 0.5, 0.0), None);
        assert!(ir_star(-1.0, -0.5, 0.2).unwrap() < 0.0);
    }

    #[test]
    fn bars_per_year_convention() {
        assert_eq!(bars_per_year(30), 17520.0);
        assert_eq!(bars_per_year(1), 525_600.0);
    }

    #[test]
    fn correlation_examples() {
        let a = curve(&[100.0, 101.0, 100.5, 102.0, 101.0]);
        let rs = a.returns();
        let mut e = 100.0;
        let mut neg = vec![e];
        for r in &rs {
            e *= 1.0 - r;
            neg.push(e);
        }
        let b = curve(&neg);
        let flat = curve(&[1.0; 5]);
        let m = return_correlation(&[a.clone(), b, flat]).unwrap();
        assert_eq!(m[0][0], Some(1.0));
        assert!((m[0][1].unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m[2], vec![None, None, None]);
        assert_eq!(m[0][2], None);
        let csv = correlation_to_csv(&["a".into(), "b".into(), "c".into()], &m);
        assert!(csv.starts_with("strategy,a,b,c\na,1,"));
    }
}
