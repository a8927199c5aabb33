//! Run configuration: one TOML document covering every stage.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::backtest::ExecutionConfig;
use crate::error::{Error, Result};
use crate::fracdiff::FfdConfig;
use crate::labeling::TblConfig;
use crate::market_data::Timestamp;
use crate::sae::TrainConfig;
use crate::seeds::sha256_hex;
use crate::walkforward::{plan_splits, HyperGrid, ModelConfig, SplitPlan, WalkForwardConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSource {
    pub name: String,
    /// File path; `{symbol}` is replaced by the asset symbol.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// 1-minute bar CSV per asset; `{symbol}` is replaced by the asset symbol.
    pub bars: String,
    pub features: Vec<FeatureSource>,
    pub cache_dir: String,
    pub exchange_url: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            bars: "data/{symbol}/bars_1m.csv".into(),
            features: Vec::new(),
            cache_dir: "cache".into(),
            exchange_url: "https://api.binance.com".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkForwardSection {
    pub period_days: u32,
    pub max_train_periods: usize,
    pub use_validation: bool,
    pub holdout_fraction: f64,
}

impl Default for WalkForwardSection {
    fn default() -> Self {
        Self {
            period_days: 90,
            max_train_periods: 3,
            use_validation: true,
            holdout_fraction: 0.2,
        }
    }
}

/// Execution settings; barrier width and time limit come from `[labels]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionSection {
    pub initial_capital: f64,
    pub fee_rate: f64,
    pub reversal: bool,
    pub flat_closes: bool,
    pub intrabar: bool,
}

impl Default for ExecutionSection {
    fn default() -> Self {
        let d = ExecutionConfig::default();
        Self {
            initial_capital: d.initial_capital,
            fee_rate: d.fee_rate,
            reversal: d.reversal,
            flat_closes: d.flat_closes,
            intrabar: d.intrabar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub symbols: Vec<String>,
    pub interval_minutes: u32,
    pub in_sample_start: Timestamp,
    pub oos_start: Timestamp,
    pub oos_end: Timestamp,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub labels: TblConfig,
    #[serde(default)]
    pub ffd: FfdConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: HyperGrid,
    #[serde(default)]
    pub walkforward: WalkForwardSection,
    #[serde(default)]
    pub execution: ExecutionSection,
    /// Portfolio weights in symbol order; equal weights when absent.
    #[serde(default)]
    pub portfolio_weights: Option<Vec<f64>>,
    /// Directory relative paths resolve against; the config file's directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.symbols.is_empty() {
            return Err(Error::Config("at least one symbol is required".into()));
        }
        let unique: BTreeSet<_> = self.symbols.iter().collect();
        if unique.len() != self.symbols.len() {
            return Err(Error::Config("symbols must be unique".into()));
        }
        if let Some(bad) = self
            .symbols
            .iter()
            .find(|s| s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return Err(Error::Config(format!("symbol `{bad}` must be alphanumeric")));
        }
        if self.interval_minutes == 0 || 60 % self.interval_minutes != 0 {
            return Err(Error::Config(format!(
                "interval {} minutes must divide an hour",
                self.interval_minutes
            )));
        }
        if self.walkforward.period_days == 0 {
            return Err(Error::Config("period_days must be ≥ 1".into()));
        }
        if self.in_sample_start >= self.oos_start || self.oos_start >= self.oos_end {
            return Err(Error::Config("dates must satisfy in_sample_start < oos_start < oos_end".into()));
        }
        let names: BTreeSet<_> = self.data.features.iter().map(|f| f.name.as_str()).collect();
        if names.len() != self.data.features.len() || names.contains("close") {
            return Err(Error::Config("feature names must be unique and not `close`".into()));
        }
        if let Some(w) = &self.portfolio_weights {
            if w.len() != self.symbols.len() {
                return Err(Error::Config(format!(
                    "{} portfolio weights for {} symbols",
                    w.len(),
                    self.symbols.len()
                )));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Config("portfolio weights must be ≥ 0 and sum to 1".into()));
            }
        }
        self.execution_config().validate()?;
        self.walkforward_config().validate()?;
        self.plan()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; stamped into every JSON output.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn raw_bars_path(&self, symbol: &str) -> PathBuf {
        self.resolve(&self.data.bars.replace("{symbol}", symbol))
    }

    pub fn feature_path(&self, f: &FeatureSource, symbol: &str) -> PathBuf {
        self.resolve(&f.path.replace("{symbol}", symbol))
    }

    pub fn period(&self) -> TimeDelta {
        TimeDelta::days(self.walkforward.period_days as i64)
    }

    pub fn plan(&self) -> Result<SplitPlan> {
        plan_splits(
            self.in_sample_start,
            self.oos_start,
            self.oos_end,
            self.period(),
            self.walkforward.max_train_periods,
            self.walkforward.use_validation,
        )
    }

    pub fn execution_config(&self) -> ExecutionConfig {
        let e = &self.execution;
        ExecutionConfig {
            initial_capital: e.initial_capital,
            fee_rate: e.fee_rate,
            lambda: self.labels.lambda,
            horizon: self.labels.horizon,
            reversal: e.reversal,
            flat_closes: e.flat_closes,
            intrabar: e.intrabar,
        }
    }

    pub fn walkforward_config(&self) -> WalkForwardConfig {
        WalkForwardConfig {
            tbl: self.labels,
            ffd: self.ffd.clone(),
            augment: self.augment,
            model: self.model.clone(),
            train: self.train.clone(),
            grid: self.grid.clone(),
            holdout_fraction: self.walkforward.holdout_fraction,
            seed: self.seed,
        }
    }

    pub fn portfolio_weights(&self) -> Vec<f64> {
        self.portfolio_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.symbols.len() as f64; self.symbols.len()])
    }

    pub fn bars_per_year(&self) -> f64 {
        crate::metrics::bars_per_year(self.interval_minutes)
    }
}
