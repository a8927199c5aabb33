//! Triple-barrier labels and the barrier-aware selection metric Φ.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TblConfig {
    /// Barrier half-width as a fraction of the entry price.
    pub lambda: f64,
    /// Time barrier in bars.
    pub horizon: usize,
    /// Timed-exit penalty divisor.
    pub delta: f64,
}

impl Default for TblConfig {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            horizon: 20,
            delta: 20.0,
        }
    }
}

impl TblConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda {} must lie in (0, 1)", self.lambda)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("time barrier must be at least one bar".into()));
        }
        if !(self.delta > self.lambda) {
            return Err(Error::Config(format!(
                "delta {} must exceed lambda {}",
                self.delta, self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Short,
    Flat,
    Long,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Short, Label::Flat, Label::Long];

    pub fn value(self) -> i8 {
        match self {
            Label::Short => -1,
            Label::Flat => 0,
            Label::Long => 1,
        }
    }

    /// Position in the classifier's output order (−1, 0, +1).
    pub fn class_index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn from_class_index(i: usize) -> Label {
        Label::ALL[i]
    }

    pub fn opposite(self) -> Label {
        match self {
            Label::Short => Label::Long,
            Label::Flat => Label::Flat,
            Label::Long => Label::Short,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Label::Short),
            0 => Ok(Label::Flat),
            1 => Ok(Label::Long),
            other => Err(Error::Domain(format!("label {other} not in {{-1, 0, 1}}"))),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.value()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Labels each bar by the first horizontal barrier its forward closes touch
/// within `horizon` bars; windows running past the series end are truncated.
pub fn triple_barrier_labels(closes: &[f64], cfg: &TblConfig) -> Result<Vec<Label>> {
    cfg.validate()?;
    if let Some(i) = closes.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Domain(format!("price {} at index {i} is not positive", closes[i])));
    }
    let last = closes.len().saturating_sub(1);
    Ok(closes
        .iter()
        .enumerate()
        .map(|(t, &entry)| {
            let upper = entry * (1.0 + cfg.lambda);
            let lower = entry * (1.0 - cfg.lambda);
            let end = (t + cfg.horizon).min(last);
            for &p in &closes[(t + 1).min(end + 1)..=end] {
                // upper first: a bar crossing both resolves long
                if p >= upper {
                    return Label::Long;
                }
                if p <= lower {
                    return Label::Short;
                }
            }
            Label::Flat
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationTally {
    /// Directly correct: nonzero prediction equal to the label.
    pub dcc: u64,
    /// Directly incorrect: nonzero prediction opposite to the label.
    pub dic: u64,
    /// Timed exits: nonzero prediction where the label is 0.
    pub tec: u64,
    pub zero_pred_count: u64,
}

impl ClassificationTally {
    pub fn total(&self) -> u64 {
        self.dcc + self.dic + self.tec + self.zero_pred_count
    }
}

pub fn tally(pred: &[Label], truth: &[Label]) -> Result<ClassificationTally> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions against {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut t = ClassificationTally::default();
    for (&p, &y) in pred.iter().zip(truth) {
        match (p, y) {
            (Label::Flat, _) => t.zero_pred_count += 1,
            (_, Label::Flat) => t.tec += 1,
            (p, y) if p == y => t.dcc += 1,
            _ => t.dic += 1,
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub value: f64,
    pub ln: f64,
}

/// `Φ = (1+λ)^DCC · (1−λ)^DIC · (1−λ/δ)^TEC`, accumulated in log space.
pub fn phi_metric(t: &ClassificationTally, cfg: &TblConfig) -> Result<Phi> {
    cfg.validate()?;
    let ln = t.dcc as f64 * cfg.lambda.ln_1p()
        + t.dic as f64 * (-cfg.lambda).ln_1p()
        + t.tec as f64 * (-cfg.lambda / cfg.delta).ln_1p();
    Ok(Phi { value: ln.exp(), ln })
}

/// Φ of `pred` scored against `truth`.
pub fn phi_of(pred: &[Label], truth: &[Label], cfg: &TblConfig) -> Result<Phi> {
    phi_metric(&tally(pred, truth)?, cfg)
}

pub fn labels_to_csv(index: &[crate::market_data::Timestamp], labels: &[Label]) -> Result<String> {
    if index.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} timestamps against {} labels",
            index.len(),
            labels.len()
        )));
    }
    let mut out = String::from("timestamp,label\n");
    for (ts, l) in index.iter().zip(labels) {
        out.push_str(&format!("{},{}\n", crate::market_data::format_ts(ts), l));
    }
    Ok(out)
}
