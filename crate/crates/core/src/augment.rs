//! Training-set expansion with Gaussian noise scaled to each feature's volatility.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

const BLOCK_ROWS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Noise std as a fraction of the feature's volatility.
    pub noise_ratio: f64,
    /// Noisy replicas added per original row.
    pub copies: usize,
    /// Trailing rows used to estimate each feature's volatility.
    pub vol_window: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_ratio: 0.1,
            copies: 1,
            vol_window: 2000,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_ratio >= 0.0) || !self.noise_ratio.is_finite() {
            return Err(Error::Config(format!("noise ratio {} must be ≥ 0", self.noise_ratio)));
        }
        if self.vol_window < 2 {
            return Err(Error::Config("volatility window must be at least 2".into()));
        }
        Ok(())
    }
}

/// Sample standard deviation of the trailing `window` values.
pub fn estimate_feature_vol(column: &[f64], window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::Config("volatility window must be at least 2".into()));
    }
    if window > column.len() {
        return Err(Error::InsufficientData {
            needed: window,
            got: column.len(),
        });
    }
    let tail = &column[column.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    let ss: f64 = tail.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((ss / (window - 1) as f64).sqrt())
}

/// Per-feature volatilities over the training rows.
pub fn feature_vols(train: &Dataset, window: usize) -> Result<Vec<f64>> {
    let window = window.min(train.n_rows());
    (0..train.n_cols())
        .map(|j| estimate_feature_vol(&train.column(j), window))
        .collect()
}

/// Returns the originals followed by `copies` noisy replicas of every row.
/// Labels are copied unchanged; output depends only on inputs and `cfg.seed`.
pub fn augment(train: &Dataset, cfg: &AugmentConfig) -> Result<Dataset> {
    cfg.validate()?;
    if cfg.copies == 0 || train.is_empty() {
        return Ok(train.clone());
    }
    let vols = feature_vols(train, cfg.vol_window)?;
    let scales: Vec<f64> = vols.iter().map(|v| v * cfg.noise_ratio).collect();
    let cols = train.n_cols();
    let rows = train.n_rows();

    let total_rows = rows * cfg.copies;
    let blocks: Vec<usize> = (0..total_rows.div_ceil(BLOCK_ROWS)).collect();
    let noisy: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|&b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "augment-block", b as u64));
            let lo = b * BLOCK_ROWS;
            let hi = (lo + BLOCK_ROWS).min(total_rows);
            let mut out = Vec::with_capacity((hi - lo) * cols);
            for r in lo..hi {
                let src = train.row(r % rows);
                for (x, s) in src.iter().zip(&scales) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out.push(x + s * z);
                }
            }
            out
        })
        .collect();

    let mut x = Vec::with_capacity(train.x.len() * (cfg.copies + 1));
    x.extend_from_slice(&train.x);
    for block in noisy {
        x.extend(block);
    }
    let mut labels = Vec::with_capacity(rows * (cfg.copies + 1));
    for _ in 0..=cfg.copies {
        labels.extend_from_slice(&train.labels);
    }
    Dataset::new(train.feature_names.clone(), x, labels)
}
