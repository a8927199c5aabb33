//! Stage commands over an on-disk layout: each reads the previous stage's
//! files under the output directory and writes its own.
//!
//! ```text
//! <output>/bars/<SYM>_<I>m.csv       resample
//! <output>/labels/<SYM>.csv          label
//! <output>/run/<SYM>/...             run (per-split records, checkpoints, signals,
//!                                    trades, equity, manifest, timings)
//! <output>/report/<SYM>.json         report
//! <output>/portfolio/...             portfolio
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backtest::{portfolio_equity, simulate, trades_to_csv, EquityCurve, SignalSeries};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fracdiff::FfdSummary;
use crate::labeling::{labels_to_csv, phi_of, triple_barrier_labels, Label};
use crate::market_data::{
    align, feature_to_csv, format_ts, load_bars_csv, load_feature_csv, parse_ts, resample, write_bars_csv, write_text,
    AlignedFrame, Bar, KlineClient, KlineTransport,
};
use crate::metrics::{correlation_to_csv, perf_report, PerfReport};
use crate::sae::{load_checkpoint, save_checkpoint};
use crate::seeds::{derive_seed, sha256_hex};
use crate::synthetic::{generate, SyntheticConfig};
use crate::walkforward::{
    concat_results, run_splits_with, verify_audit, AuditRecord, CandidateScore, Hyperparams, Split, SplitResult,
    SplitTimings, Stage, TimeRange,
};

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    interval: u32,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.output_dir(),
            interval: cfg.interval_minutes,
        }
    }

    pub fn bars(&self, symbol: &str) -> PathBuf {
        self.root.join("bars").join(format!("{symbol}_{}m.csv", self.interval))
    }

    pub fn labels(&self, symbol: &str) -> PathBuf {
        self.root.join("labels").join(format!("{symbol}.csv"))
    }

    pub fn run_dir(&self, symbol: &str) -> PathBuf {
        self.root.join("run").join(symbol)
    }

    pub fn split_record(&self, symbol: &str, k: usize) -> PathBuf {
        self.run_dir(symbol).join(format!("split_{k}.json"))
    }

    pub fn split_timings(&self, symbol: &str, k: usize) -> PathBuf {
        self.run_dir(symbol).join(format!("split_{k}_timings.json"))
    }

    pub fn checkpoint(&self, symbol: &str, k: usize) -> PathBuf {
        self.run_dir(symbol).join(format!("split_{k}_model.json"))
    }

    pub fn signals(&self, symbol: &str) -> PathBuf {
        self.run_dir(symbol).join("signals.csv")
    }

    pub fn trades(&self, symbol: &str) -> PathBuf {
        self.run_dir(symbol).join("trades.csv")
    }

    pub fn equity(&self, symbol: &str) -> PathBuf {
        self.run_dir(symbol).join("equity.csv")
    }

    pub fn manifest(&self, symbol: &str) -> PathBuf {
        self.run_dir(symbol).join("manifest.json")
    }

    pub fn timings(&self, symbol: &str) -> PathBuf {
        self.run_dir(symbol).join("timings.json")
    }

    pub fn report(&self, symbol: &str) -> PathBuf {
        self.root.join("report").join(format!("{symbol}.json"))
    }

    pub fn plot(&self, symbol: &str) -> PathBuf {
        self.root.join("report").join(format!("{symbol}_plot.csv"))
    }

    pub fn portfolio_dir(&self) -> PathBuf {
        self.root.join("portfolio")
    }

    fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput {
            artifact: path.display().to_string(),
            hint: format!("produce it with the `{producer}` command"),
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

// ---------------------------------------------------------------- data stages

/// Writes a deterministic synthetic market for every symbol: raw 1-minute bars
/// plus any configured feature named `drift` or `macro`.
pub fn synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let span = cfg.oos_end - cfg.in_sample_start;
    let days = ((span.num_minutes() + 1439) / 1440) as u32;
    let mut written = Vec::new();
    for symbol in &cfg.symbols {
        let market = generate(&SyntheticConfig::new(symbol.as_str(), cfg.in_sample_start, days, cfg.seed))?;
        let bars_path = cfg.raw_bars_path(symbol);
        write_bars_csv(&bars_path, &market.bars)?;
        written.push(bars_path);
        for source in &cfg.data.features {
            let series = market.features.iter().find(|f| f.name == source.name).ok_or_else(|| {
                Error::Config(format!(
                    "synthetic data provides features `drift` and `macro`, not `{}`",
                    source.name
                ))
            })?;
            let path = cfg.feature_path(source, symbol);
            write_text(&path, &feature_to_csv(series))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FetchSummary {
    pub symbol: String,
    pub bars: usize,
    pub gaps: usize,
    pub path: PathBuf,
}

/// Downloads 1-minute klines for the full configured span into the raw bar files.
pub fn fetch<T: KlineTransport>(cfg: &RunConfig, transport: &T) -> Result<Vec<FetchSummary>> {
    let client = KlineClient::new(transport, cfg.resolve(&cfg.data.cache_dir));
    cfg.symbols
        .iter()
        .map(|symbol| {
            let got = client.fetch_klines(symbol, cfg.in_sample_start, cfg.oos_end)?;
            let path = cfg.raw_bars_path(symbol);
            write_bars_csv(&path, &got.bars)?;
            Ok(FetchSummary {
                symbol: symbol.clone(),
                bars: got.bars.len(),
                gaps: got.gaps.len(),
                path,
            })
        })
        .collect()
}

pub fn resample_all(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(cfg);
    cfg.symbols
        .iter()
        .map(|symbol| {
            let raw = cfg.raw_bars_path(symbol);
            require(&raw, "fetch` or `synth")?;
            let bars = resample(&load_bars_csv(&raw)?, cfg.interval_minutes)?;
            let out = layout.bars(symbol);
            write_bars_csv(&out, &bars)?;
            Ok(out)
        })
        .collect()
}

fn load_resampled(cfg: &RunConfig, symbol: &str) -> Result<Vec<Bar>> {
    let path = Layout::new(cfg).bars(symbol);
    require(&path, "resample")?;
    load_bars_csv(&path)
}

/// Full-history labels for inspection. The last `horizon` bars have incomplete
/// windows and are left out.
pub fn label_all(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(cfg);
    cfg.symbols
        .iter()
        .map(|symbol| {
            let bars = load_resampled(cfg, symbol)?;
            let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
            let labels = triple_barrier_labels(&closes, &cfg.labels)?;
            let keep = bars.len().saturating_sub(cfg.labels.horizon);
            let index: Vec<_> = bars[..keep].iter().map(|b| b.timestamp).collect();
            let out = layout.labels(symbol);
            write_text(&out, &labels_to_csv(&index, &labels[..keep])?)?;
            Ok(out)
        })
        .collect()
}

/// Resampled bars and the aligned feature frame (`close` plus configured features).
pub fn load_frame(cfg: &RunConfig, symbol: &str) -> Result<(Vec<Bar>, AlignedFrame)> {
    let bars = load_resampled(cfg, symbol)?;
    let features = cfg
        .data
        .features
        .iter()
        .map(|f| {
            let path = cfg.feature_path(f, symbol);
            require(&path, "synth")?;
            load_feature_csv(&path, f.name.as_str())
        })
        .collect::<Result<Vec<_>>>()?;
    let frame = align(&bars, &features)?;
    Ok((bars, frame))
}

// ---------------------------------------------------------------- run

/// A completed split as persisted for resumption.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitRecord {
    config_hash: String,
    seed: u64,
    result: SplitResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSeeds {
    pub augment: u64,
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSplit {
    pub index: usize,
    pub train_periods: Vec<usize>,
    pub validation_period: Option<usize>,
    pub test_period: usize,
    pub train: TimeRange,
    pub validation: Option<TimeRange>,
    pub test: TimeRange,
    pub train_rows: usize,
    pub selection_rows: usize,
    pub test_rows: usize,
    /// Long, flat, short counts in the training labels (before augmentation).
    pub train_class_counts: [usize; 3],
    pub ffd: BTreeMap<String, FfdSummary>,
    pub hyperparams: Option<Hyperparams>,
    pub candidates: Vec<CandidateScore>,
    pub seeds: Vec<CandidateSeeds>,
    pub val_phi: f64,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub records: usize,
    pub violations: usize,
    pub rows_by_stage: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub symbol: String,
    pub interval_minutes: u32,
    pub period_days: u32,
    pub max_train_periods: usize,
    pub use_validation: bool,
    pub splits: Vec<ManifestSplit>,
    pub audit: AuditSummary,
    /// SHA-256 of each output file, keyed by its path under the output directory.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTiming {
    pub index: usize,
    pub resumed: bool,
    pub timings: SplitTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub symbol: String,
    pub jobs: usize,
    pub splits: Vec<SplitTiming>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub symbol: String,
    pub splits: usize,
    pub resumed: usize,
    pub trades: usize,
    pub final_equity: f64,
    pub manifest: PathBuf,
}

fn stage_name(stage: Stage) -> String {
    serde_json::to_value(stage)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn load_record(cfg: &RunConfig, layout: &Layout, symbol: &str, split: &Split, hash: &str) -> Result<Option<SplitResult>> {
    let path = layout.split_record(symbol, split.index);
    if !path.exists() {
        return Ok(None);
    }
    let rec: SplitRecord = read_json(&path)?;
    if rec.config_hash != hash || rec.seed != cfg.seed {
        return Err(Error::ResumeMismatch(format!(
            "{} was written with config {} seed {}, current config is {} seed {}; use a fresh output directory",
            path.display(),
            rec.config_hash,
            rec.seed,
            hash,
            cfg.seed
        )));
    }
    if rec.result.split != *split {
        return Err(Error::ResumeMismatch(format!("{} describes a different split", path.display())));
    }
    let mut result = rec.result;
    if result.hyperparams.is_some() {
        let ckpt = layout.checkpoint(symbol, split.index);
        require(&ckpt, "run")?;
        result.model = Some(load_checkpoint(&ckpt)?);
    }
    if let Ok(t) = read_json::<SplitTimings>(&layout.split_timings(symbol, split.index)) {
        result.timings = t;
    }
    Ok(Some(result))
}

fn persist(layout: &Layout, symbol: &str, hash: &str, seed: u64, r: &SplitResult) -> Result<()> {
    let k = r.split.index;
    if let Some(model) = &r.model {
        save_checkpoint(model, &layout.checkpoint(symbol, k))?;
    }
    write_json(&layout.split_timings(symbol, k), &r.timings)?;
    let mut stored = r.clone();
    stored.model = None;
    stored.timings = SplitTimings::default();
    // written last: its presence marks the split complete
    write_json(
        &layout.split_record(symbol, k),
        &SplitRecord {
            config_hash: hash.to_string(),
            seed,
            result: stored,
        },
    )
}

/// Walk-forward training and out-of-sample backtest for every symbol.
/// Completed splits found on disk are reused when their config hash matches.
pub fn run_all(cfg: &RunConfig, jobs: usize) -> Result<Vec<RunSummary>> {
    cfg.symbols.iter().map(|s| run_symbol(cfg, s, jobs)).collect()
}

pub fn run_symbol(cfg: &RunConfig, symbol: &str, jobs: usize) -> Result<RunSummary> {
    let started = std::time::Instant::now();
    let layout = Layout::new(cfg);
    let hash = cfg.hash();
    let plan = cfg.plan()?;
    let wf = cfg.walkforward_config();
    let (bars, frame) = load_frame(cfg, symbol)?;
    let span_start = plan.periods[0].start;
    let span_end = plan.splits.last().expect("plan has splits").test.end;
    let step = chrono::TimeDelta::minutes(cfg.interval_minutes as i64);
    if frame.index.first().is_none_or(|t| *t > span_start) || frame.index.last().is_none_or(|t| *t + step < span_end) {
        return Err(Error::InsufficientData {
            needed: ((span_end - span_start).num_minutes() / step.num_minutes()) as usize,
            got: frame.len(),
        });
    }

    let mut results: Vec<Option<SplitResult>> = plan
        .splits
        .iter()
        .map(|s| load_record(cfg, &layout, symbol, s, &hash))
        .collect::<Result<_>>()?;
    let resumed = results.iter().filter(|r| r.is_some()).count();
    let todo: Vec<Split> = plan
        .splits
        .iter()
        .zip(&results)
        .filter(|(_, r)| r.is_none())
        .map(|(s, _)| s.clone())
        .collect();
    let write_lock = Mutex::new(());
    let fresh = run_splits_with(&todo, &frame, &wf, jobs, |r| {
        let _guard = write_lock.lock().expect("lock");
        persist(&layout, symbol, &hash, cfg.seed, r)
    })?;
    for r in fresh {
        let k = r.split.index;
        results[k] = Some(r);
    }
    let results: Vec<SplitResult> = results.into_iter().map(|r| r.expect("every split ran")).collect();

    let audit: Vec<AuditRecord> = results.iter().flat_map(|r| r.audit.iter().cloned()).collect();
    verify_audit(&audit, &plan)?;

    let oos = concat_results(&results)?;
    let first = *oos
        .index
        .first()
        .ok_or_else(|| Error::InsufficientData { needed: 1, got: 0 })?;
    let start = bars.iter().position(|b| b.timestamp == first).expect("signal index comes from the bars");
    if start == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    // the last in-sample bar anchors the curve at the initial capital
    let window = &bars[start - 1..start + oos.len()];
    let mut index = vec![window[0].timestamp];
    index.extend_from_slice(&oos.index);
    let mut signals = vec![Label::Flat];
    signals.extend_from_slice(&oos.signals);
    let anchored = SignalSeries::new(index, signals)?;
    let (curve, trades) = simulate(&anchored, window, &cfg.execution_config())?;

    write_text(&layout.signals(symbol), &oos.to_csv())?;
    write_text(&layout.trades(symbol), &trades_to_csv(&trades))?;
    curve.write_csv(&layout.equity(symbol))?;

    let mut output_paths = vec![layout.signals(symbol), layout.trades(symbol), layout.equity(symbol)];
    let mut manifest_splits = Vec::with_capacity(results.len());
    let mut rows_by_stage: BTreeMap<String, usize> = BTreeMap::new();
    for rec in &audit {
        *rows_by_stage.entry(stage_name(rec.stage)).or_default() += rec.rows;
    }
    for r in &results {
        let k = r.split.index;
        output_paths.push(layout.split_record(symbol, k));
        let checkpoint = r.model.as_ref().map(|_| layout.checkpoint(symbol, k));
        if let Some(c) = &checkpoint {
            output_paths.push(c.clone());
        }
        let seeds = r
            .candidates
            .iter()
            .enumerate()
            .map(|(ci, _)| CandidateSeeds {
                augment: derive_seed(cfg.seed, &format!("augment/{ci}"), k as u64),
                train: derive_seed(cfg.seed, &format!("train/{ci}"), k as u64),
            })
            .collect();
        manifest_splits.push(ManifestSplit {
            index: k,
            train_periods: r.split.train_periods.clone(),
            validation_period: r.split.validation_period,
            test_period: r.split.test_period,
            train: r.split.train,
            validation: r.split.validation,
            test: r.split.test,
            train_rows: r.train_rows,
            selection_rows: r.selection_rows,
            test_rows: r.predictions.len(),
            train_class_counts: r.train_class_counts,
            ffd: r.ffd.summary(),
            hyperparams: r.hyperparams,
            candidates: r.candidates.clone(),
            seeds,
            val_phi: r.val_phi,
            checkpoint: checkpoint.map(|c| layout.relative(&c)),
        });
    }
    let outputs = output_paths
        .iter()
        .map(|p| Ok((layout.relative(p), file_digest(p)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let manifest = Manifest {
        config_hash: hash,
        seed: cfg.seed,
        symbol: symbol.to_string(),
        interval_minutes: cfg.interval_minutes,
        period_days: cfg.walkforward.period_days,
        max_train_periods: cfg.walkforward.max_train_periods,
        use_validation: cfg.walkforward.use_validation,
        splits: manifest_splits,
        audit: AuditSummary {
            records: audit.len(),
            violations: 0,
            rows_by_stage,
        },
        outputs,
    };
    write_json(&layout.manifest(symbol), &manifest)?;
    write_json(
        &layout.timings(symbol),
        &RunTimings {
            symbol: symbol.to_string(),
            jobs,
            splits: results
                .iter()
                .map(|r| SplitTiming {
                    index: r.split.index,
                    resumed: !todo.iter().any(|s| s.index == r.split.index),
                    timings: r.timings,
                })
                .collect(),
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )?;

    Ok(RunSummary {
        symbol: symbol.to_string(),
        splits: results.len(),
        resumed,
        trades: trades.len(),
        final_equity: *curve.equity.last().expect("anchored curve is non-empty"),
        manifest: layout.manifest(symbol),
    })
}

/// Reads a `timestamp,signal` file written by `run`.
pub fn load_signals(path: &Path) -> Result<SignalSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        msg,
    };
    let mut lines = text.lines();
    if lines.next() != Some("timestamp,signal") {
        return Err(err(1, "expected header `timestamp,signal`".into()));
    }
    let (mut index, mut signals) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let (t, s) = line.split_once(',').ok_or_else(|| err(i + 2, "expected two fields".into()))?;
        index.push(parse_ts(t).map_err(|m| err(i + 2, m))?);
        let v: i8 = s.trim().parse().map_err(|e: std::num::ParseIntError| err(i + 2, e.to_string()))?;
        signals.push(Label::try_from(v).map_err(|m| err(i + 2, m.to_string()))?);
    }
    SignalSeries::new(index, signals)
}

// ---------------------------------------------------------------- reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolReport {
    pub config_hash: String,
    pub seed: u64,
    pub symbol: String,
    pub bars_per_year: f64,
    pub start: String,
    pub end: String,
    pub sae: PerfReport,
    pub buy_and_hold: PerfReport,
}

/// Unlevered, fee-free holding of the asset over the curve's index.
pub fn buy_and_hold(curve: &EquityCurve, bars: &[Bar], capital: f64) -> Result<EquityCurve> {
    let closes: BTreeMap<_, _> = bars.iter().map(|b| (b.timestamp, b.close)).collect();
    let prices = curve
        .timestamps
        .iter()
        .map(|t| {
            closes
                .get(t)
                .copied()
                .ok_or_else(|| Error::Shape(format!("no bar at {}", format_ts(t))))
        })
        .collect::<Result<Vec<f64>>>()?;
    let p0 = prices.first().copied().unwrap_or(1.0);
    EquityCurve::new(curve.timestamps.clone(), prices.iter().map(|p| capital * p / p0).collect())
}

fn load_curves(cfg: &RunConfig, symbol: &str) -> Result<(EquityCurve, EquityCurve)> {
    let layout = Layout::new(cfg);
    let path = layout.equity(symbol);
    require(&path, "run")?;
    let sae = EquityCurve::load_csv(&path)?;
    let bars = load_resampled(cfg, symbol)?;
    let bh = buy_and_hold(&sae, &bars, cfg.execution.initial_capital)?;
    Ok((sae, bh))
}

pub fn report_all(cfg: &RunConfig) -> Result<Vec<SymbolReport>> {
    let layout = Layout::new(cfg);
    let bpy = cfg.bars_per_year();
    cfg.symbols
        .iter()
        .map(|symbol| {
            let (sae_curve, bh_curve) = load_curves(cfg, symbol)?;
            let signals_path = layout.signals(symbol);
            require(&signals_path, "run")?;
            let signals = load_signals(&signals_path)?;
            let trades_path = layout.trades(symbol);
            require(&trades_path, "run")?;
            let trades = std::fs::read_to_string(&trades_path)
                .map_err(|e| Error::io(&trades_path, e))?
                .lines()
                .count()
                .saturating_sub(1);

            // realised labels over the out-of-sample bars, from the full price path
            let bars = load_resampled(cfg, symbol)?;
            let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
            let labels = triple_barrier_labels(&closes, &cfg.labels)?;
            let at: BTreeMap<_, _> = bars.iter().zip(&labels).map(|(b, l)| (b.timestamp, *l)).collect();
            let truth = signals
                .index
                .iter()
                .map(|t| at.get(t).copied().ok_or_else(|| Error::Shape(format!("no bar at {}", format_ts(t)))))
                .collect::<Result<Vec<_>>>()?;
            let phi = phi_of(&signals.signals, &truth, &cfg.labels)?;

            let mut sae = perf_report(&sae_curve, bpy)?;
            sae.trade_count = Some(trades);
            sae.phi = Some(phi.value);
            let buy_and_hold = perf_report(&bh_curve, bpy)?;

            let mut plot = String::from("timestamp,sae,buy_and_hold\n");
            for ((t, a), b) in sae_curve.timestamps.iter().zip(&sae_curve.equity).zip(&bh_curve.equity) {
                plot.push_str(&format!("{},{a},{b}\n", format_ts(t)));
            }
            write_text(&layout.plot(symbol), &plot)?;

            let report = SymbolReport {
                config_hash: cfg.hash(),
                seed: cfg.seed,
                symbol: symbol.clone(),
                bars_per_year: bpy,
                start: sae_curve.timestamps.first().map(format_ts).unwrap_or_default(),
                end: sae_curve.timestamps.last().map(format_ts).unwrap_or_default(),
                sae,
                buy_and_hold,
            };
            write_json(&layout.report(symbol), &report)?;
            Ok(report)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub config_hash: String,
    pub seed: u64,
    pub symbols: Vec<String>,
    pub weights: Vec<f64>,
    pub sae: PerfReport,
    pub buy_and_hold: PerfReport,
}

/// Fixed-weight portfolio of the per-symbol strategies, plus the return
/// correlation between them.
pub fn portfolio(cfg: &RunConfig) -> Result<PortfolioReport> {
    let layout = Layout::new(cfg);
    let weights = cfg.portfolio_weights();
    let (sae, bh): (Vec<_>, Vec<_>) = cfg
        .symbols
        .iter()
        .map(|s| load_curves(cfg, s))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let sae_port = portfolio_equity(&sae, &weights)?;
    let bh_port = portfolio_equity(&bh, &weights)?;
    let dir = layout.portfolio_dir();
    let mut csv = String::from("timestamp,sae,buy_and_hold\n");
    for ((t, a), b) in sae_port.timestamps.iter().zip(&sae_port.equity).zip(&bh_port.equity) {
        csv.push_str(&format!("{},{a},{b}\n", format_ts(t)));
    }
    write_text(&dir.join("equity.csv"), &csv)?;
    let corr = crate::metrics::return_correlation(&sae)?;
    write_text(&dir.join("correlation.csv"), &correlation_to_csv(&cfg.symbols, &corr))?;
    let bpy = cfg.bars_per_year();
    let report = PortfolioReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        symbols: cfg.symbols.clone(),
        weights,
        sae: perf_report(&sae_port, bpy)?,
        buy_and_hold: perf_report(&bh_port, bpy)?,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}
