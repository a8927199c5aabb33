//! Fixed-width-window fractional differencing and the search for the smallest
//! order that makes a series pass the ADF test.

mod adf;

pub use adf::{adf_test, mackinnon_p, schwert_lags, AdfLags, AdfResult};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::AlignedFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfdWeights {
    pub d: f64,
    pub tau: f64,
    /// `weights[k]` multiplies the value `k` steps back.
    pub weights: Vec<f64>,
}

impl FfdWeights {
    /// Number of past observations a single output consumes beyond the current one.
    pub fn window(&self) -> usize {
        self.weights.len() - 1
    }
}

/// Weights `ω_k = −ω_{k−1}·(d − k + 1)/k`, truncated at the first `|ω| < tau`.
pub fn ffd_weights(d: f64, tau: f64, max_width: usize) -> Result<FfdWeights> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::Config(format!("differencing order {d} must be finite and ≥ 0")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("tau {tau} must lie in (0, 1)")));
    }
    if max_width == 0 {
        return Err(Error::Config("max_width must be ≥ 1".into()));
    }
    let mut weights = vec![1.0];
    let mut k = 1usize;
    loop {
        let last = *weights.last().expect("non-empty");
        let next = -last * (d - k as f64 + 1.0) / k as f64;
        if next.abs() < tau {
            break;
        }
        if weights.len() == max_width {
            return Err(Error::WidthOverflow { d, tau, max_width });
        }
        weights.push(next);
        k += 1;
    }
    Ok(FfdWeights { d, tau, weights })
}

/// `out[i] = Σ_k ω_k · series[i + K − k]`; the first `K` inputs only serve as history.
pub fn apply_ffd(series: &[f64], w: &FfdWeights) -> Result<Vec<f64>> {
    let width = w.weights.len();
    if series.len() < width {
        return Err(Error::InsufficientData {
            needed: width,
            got: series.len(),
        });
    }
    Ok(series
        .windows(width)
        .map(|win| {
            w.weights
                .iter()
                .zip(win.iter().rev())
                .map(|(wk, x)| wk * x)
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FfdConfig {
    /// Candidate orders, ascending.
    pub grid: Vec<f64>,
    pub significance: f64,
    pub tau: f64,
    pub max_width: usize,
    pub lags: AdfLags,
}

impl Default for FfdConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(0.05),
            significance: 0.01,
            tau: 1e-4,
            max_width: 10_000,
            lags: AdfLags::Auto,
        }
    }
}

/// `0, step, 2·step, …, 1`.
pub fn default_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Smallest grid order whose differenced series rejects a unit root at `significance`.
pub fn find_optimal_d(series: &[f64], cfg: &FfdConfig) -> Result<(f64, AdfResult)> {
    if cfg.grid.is_empty() {
        return Err(Error::Config("empty d grid".into()));
    }
    if cfg.grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("d grid must be strictly ascending".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for &d in &cfg.grid {
        let w = ffd_weights(d, cfg.tau, cfg.max_width)?;
        let diffed = apply_ffd(series, &w)?;
        let adf = adf_test(&diffed, cfg.lags)?;
        if adf.p_value < cfg.significance {
            return Ok((d, adf));
        }
        if best.is_none_or(|(_, p)| adf.p_value < p) {
            best = Some((d, adf.p_value));
        }
    }
    let (best_d, best_p) = best.expect("grid non-empty");
    Err(Error::NoStationaryD { best_d, best_p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFfd {
    pub d: f64,
    pub weights: FfdWeights,
    /// `None` when the training column was constant (trivially stationary, d = 0).
    pub adf: Option<AdfResult>,
}

/// Per-feature differencing orders fitted on one training segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfdSpec {
    pub features: Vec<(String, FeatureFfd)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FfdSummary {
    pub d: f64,
    pub tau: f64,
    pub weights_len: usize,
}

impl FfdSpec {
    pub fn get(&self, name: &str) -> Option<&FeatureFfd> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    /// Longest history any feature needs.
    pub fn max_window(&self) -> usize {
        self.features
            .iter()
            .map(|(_, f)| f.weights.window())
            .max()
            .unwrap_or(0)
    }

    pub fn summary(&self) -> BTreeMap<String, FfdSummary> {
        self.features
            .iter()
            .map(|(n, f)| {
                (
                    n.clone(),
                    FfdSummary {
                        d: f.d,
                        tau: f.weights.tau,
                        weights_len: f.weights.weights.len(),
                    },
                )
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.summary()).expect("plain data serializes")
    }

    /// Rebuilds a spec from its JSON summary by regenerating the weights.
    pub fn from_json(text: &str, max_width: usize) -> Result<FfdSpec> {
        let summary: BTreeMap<String, FfdSummary> = serde_json::from_str(text)?;
        let features = summary
            .into_iter()
            .map(|(name, s)| {
                let weights = ffd_weights(s.d, s.tau, max_width)?;
                if weights.weights.len() != s.weights_len {
                    return Err(Error::SpecMismatch(format!(
                        "feature `{name}`: regenerated {} weights, spec records {}",
                        weights.weights.len(),
                        s.weights_len
                    )));
                }
                Ok((name, FeatureFfd { d: s.d, weights, adf: None }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FfdSpec { features })
    }
}

fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Searches the optimal order for every column of a training frame.
pub fn fit_ffd_spec(train: &AlignedFrame, cfg: &FfdConfig) -> Result<FfdSpec> {
    let features = train
        .columns()
        .par_iter()
        .map(|(name, col)| {
            if is_constant(col) {
                let weights = ffd_weights(0.0, cfg.tau, cfg.max_width)?;
                return Ok((name.clone(), FeatureFfd { d: 0.0, weights, adf: None }));
            }
            let (d, adf) = find_optimal_d(col, cfg)?;
            let weights = ffd_weights(d, cfg.tau, cfg.max_width)?;
            Ok((name.clone(), FeatureFfd { d, weights, adf: Some(adf) }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FfdSpec { features })
}

/// Differences every column with its own order and trims all columns to the
/// rows where the longest window is complete.
pub fn apply_ffd_spec(frame: &AlignedFrame, spec: &FfdSpec) -> Result<AlignedFrame> {
    for name in frame.column_names() {
        if spec.get(name).is_none() {
            return Err(Error::SpecMismatch(format!("column `{name}` has no fitted order")));
        }
    }
    for (name, _) in &spec.features {
        if frame.column(name).is_none() {
            return Err(Error::SpecMismatch(format!("spec feature `{name}` missing from frame")));
        }
    }
    let warmup = spec.max_window();
    if frame.len() <= warmup {
        return Err(Error::InsufficientData {
            needed: warmup + 1,
            got: frame.len(),
        });
    }
    let keep = frame.len() - warmup;
    let columns = frame
        .columns()
        .iter()
        .map(|(name, col)| {
            let f = spec.get(name).expect("checked above");
            let out = apply_ffd(col, &f.weights)?;
            Ok((name.clone(), out[out.len() - keep..].to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    AlignedFrame::new(frame.index[warmup..].to_vec(), columns)
}
