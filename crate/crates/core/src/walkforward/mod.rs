//! Walk-forward splitting and the per-split fit → label → augment → train →
//! predict pipeline.

mod plan;

pub use plan::{concat_signals, plan_splits, Split, SplitPlan, TimeRange};

use std::cell::RefCell;
use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentConfig};
use crate::backtest::SignalSeries;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fracdiff::{apply_ffd_spec, fit_ffd_spec, FfdConfig, FfdSpec};
use crate::labeling::{phi_of, triple_barrier_labels, Label, TblConfig};
use crate::market_data::{format_ts, AlignedFrame, Timestamp};
use crate::sae::{train, Activation, LossWeights, SaeArchitecture, TrainConfig, TrainedSae};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![64],
            classifier_hidden: vec![64, 32],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub bottleneck: usize,
    pub noise_ratio: f64,
    pub loss_weights: LossWeights,
}

/// Candidate values tried in every split; the product is searched in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub bottleneck: Vec<usize>,
    pub noise_ratio: Vec<f64>,
    pub loss_weights: Vec<LossWeights>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            bottleneck: vec![8],
            noise_ratio: vec![0.1],
            loss_weights: vec![LossWeights::default()],
        }
    }
}

impl HyperGrid {
    pub fn candidates(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &bottleneck in &self.bottleneck {
            for &noise_ratio in &self.noise_ratio {
                for &loss_weights in &self.loss_weights {
                    out.push(Hyperparams {
                        bottleneck,
                        noise_ratio,
                        loss_weights,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForwardConfig {
    pub tbl: TblConfig,
    pub ffd: FfdConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub grid: HyperGrid,
    /// Trailing share of the train window held out for selection when no
    /// validation period is planned.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for WalkForwardConfig {
    fn default() -> Self {
        Self {
            tbl: TblConfig::default(),
            ffd: FfdConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            grid: HyperGrid::default(),
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl WalkForwardConfig {
    pub fn validate(&self) -> Result<()> {
        self.tbl.validate()?;
        self.augment.validate()?;
        self.train.validate()?;
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout fraction must lie in (0, 1)".into()));
        }
        let c = self.grid.candidates();
        if c.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        for h in &c {
            AugmentConfig {
                noise_ratio: h.noise_ratio,
                ..self.augment
            }
            .validate()?;
            TrainConfig {
                loss_weights: h.loss_weights,
                ..self.train.clone()
            }
            .validate()?;
            if h.bottleneck == 0 {
                return Err(Error::Config("bottleneck must be ≥ 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FfdFit,
    FfdTransform,
    Labeling,
    Augment,
    Standardize,
    Training,
    Selection,
    Predict,
}

/// One recorded data access: the span of timestamps a stage consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub split: usize,
    pub stage: Stage,
    pub first: Timestamp,
    pub last: Timestamp,
    pub rows: usize,
}

/// Checks that every stage other than prediction read only timestamps before
/// its split's test start, and prediction stayed before the test end.
pub fn verify_audit(records: &[AuditRecord], plan: &SplitPlan) -> Result<()> {
    for r in records {
        let split = plan
            .splits
            .get(r.split)
            .ok_or_else(|| Error::PlanViolation(format!("audit names unknown split {}", r.split)))?;
        let limit_ok = match r.stage {
            Stage::Predict => r.last < split.test.end,
            _ => r.last < split.test.start,
        };
        if !limit_ok {
            return Err(Error::PlanViolation(format!(
                "split {}: stage {:?} read {} (test range {} .. {})",
                r.split,
                r.stage,
                format_ts(&r.last),
                format_ts(&split.test.start),
                format_ts(&split.test.end)
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub hyperparams: Hyperparams,
    pub val_phi: f64,
    pub selected_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitTimings {
    pub ffd_seconds: f64,
    pub train_seconds: f64,
    pub predict_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: Split,
    pub ffd: FfdSpec,
    pub train_rows: usize,
    pub selection_rows: usize,
    pub train_class_counts: [usize; 3],
    /// Absent when the training labels carry no direction and nothing is trained.
    pub hyperparams: Option<Hyperparams>,
    pub candidates: Vec<CandidateScore>,
    pub val_phi: f64,
    pub predictions: SignalSeries,
    pub model: Option<TrainedSae>,
    pub audit: Vec<AuditRecord>,
    pub timings: SplitTimings,
}

/// Frame access that logs which timestamps each stage consumed.
struct Reader<'a> {
    frame: &'a AlignedFrame,
    split: usize,
    log: RefCell<Vec<AuditRecord>>,
}

impl Reader<'_> {
    fn touch(&self, stage: Stage, index: &[Timestamp]) {
        if let (Some(first), Some(last)) = (index.first(), index.last()) {
            self.log.borrow_mut().push(AuditRecord {
                split: self.split,
                stage,
                first: *first,
                last: *last,
                rows: index.len(),
            });
        }
    }

    fn rows(&self, stage: Stage, range: Range<usize>) -> AlignedFrame {
        self.touch(stage, &self.frame.index[range.clone()]);
        self.frame.rows(range)
    }

    fn closes(&self, range: Range<usize>) -> Result<Vec<f64>> {
        self.touch(Stage::Labeling, &self.frame.index[range.clone()]);
        let c = self
            .frame
            .column("close")
            .ok_or_else(|| Error::SpecMismatch("frame has no `close` column".into()))?;
        Ok(c[range].to_vec())
    }
}

/// Differenced features and labels for one chronological segment. Labels use
/// only the segment's own closes and the final `horizon` rows are dropped.
struct Segment {
    data: Dataset,
    index: Vec<Timestamp>,
}

fn segment(reader: &Reader<'_>, rows: Range<usize>, spec: &FfdSpec, tbl: &TblConfig) -> Result<Segment> {
    let warm = spec.max_window();
    let from = rows.start.saturating_sub(warm);
    let first_row = rows.start.max(warm);
    let label_end = rows.end.saturating_sub(tbl.horizon);
    if first_row >= label_end {
        return Err(Error::InsufficientData {
            needed: warm.max(rows.start) + tbl.horizon + 1,
            got: rows.end,
        });
    }
    let diffed = apply_ffd_spec(&reader.rows(Stage::FfdTransform, from..rows.end), spec)?;
    // diffed row j corresponds to frame row from + warm + j
    let offset = first_row - (from + warm);
    let labels = triple_barrier_labels(&reader.closes(rows.clone())?, tbl)?;
    let take = label_end - first_row;
    let feats = diffed.rows(offset..offset + take);
    let seg_labels = labels[first_row - rows.start..label_end - rows.start].to_vec();
    Ok(Segment {
        index: feats.index.clone(),
        data: Dataset::from_frame(&feats, seg_labels)?,
    })
}

/// Runs one split end to end. Errors carry the split index.
pub fn run_split(split: &Split, frame: &AlignedFrame, cfg: &WalkForwardConfig) -> Result<SplitResult> {
    run_split_inner(split, frame, cfg).map_err(|e| e.in_split(split.index))
}

fn run_split_inner(split: &Split, frame: &AlignedFrame, cfg: &WalkForwardConfig) -> Result<SplitResult> {
    cfg.validate()?;
    let started = Instant::now();
    let reader = Reader {
        frame,
        split: split.index,
        log: RefCell::new(Vec::new()),
    };
    let train_rows = frame.row_range(split.train.start, split.train.end);
    let (fit_rows, sel_rows) = match &split.validation {
        Some(v) => (train_rows.clone(), frame.row_range(v.start, v.end)),
        None => {
            let len = train_rows.len();
            let cut = train_rows.start + ((len as f64) * (1.0 - cfg.holdout_fraction)).round() as usize;
            (train_rows.start..cut, cut..train_rows.end)
        }
    };

    let spec = fit_ffd_spec(&reader.rows(Stage::FfdFit, fit_rows.clone()), &cfg.ffd)?;
    let ffd_seconds = started.elapsed().as_secs_f64();

    let fit = segment(&reader, fit_rows, &spec, &cfg.tbl)?;
    let sel = segment(&reader, sel_rows, &spec, &cfg.tbl)?;
    let counts = fit.data.class_counts();

    let test_rows = frame.row_range(split.test.start, split.test.end);
    let warm = spec.max_window();
    if test_rows.start < warm {
        return Err(Error::InsufficientData {
            needed: warm,
            got: test_rows.start,
        });
    }

    let train_started = Instant::now();
    let mut candidates = Vec::new();
    let mut best: Option<(Hyperparams, TrainedSae)> = None;
    if counts[Label::Long.class_index()] + counts[Label::Short.class_index()] > 0 {
        for (ci, hp) in cfg.grid.candidates().into_iter().enumerate() {
            let aug_cfg = AugmentConfig {
                noise_ratio: hp.noise_ratio,
                seed: derive_seed(cfg.seed, &format!("augment/{ci}"), split.index as u64),
                ..cfg.augment
            };
            reader.touch(Stage::Augment, &fit.index);
            let augmented = augment(&fit.data, &aug_cfg)?;
            let arch = SaeArchitecture::new(
                fit.data.n_cols(),
                &cfg.model.encoder_hidden,
                hp.bottleneck,
                &cfg.model.classifier_hidden,
                cfg.model.activation,
            )?;
            let train_cfg = TrainConfig {
                loss_weights: hp.loss_weights,
                seed: derive_seed(cfg.seed, &format!("train/{ci}"), split.index as u64),
                ..cfg.train.clone()
            };
            reader.touch(Stage::Standardize, &fit.index);
            reader.touch(Stage::Training, &fit.index);
            reader.touch(Stage::Selection, &sel.index);
            let model = train(&augmented, &sel.data, &arch, &train_cfg, &cfg.tbl)?;
            candidates.push(CandidateScore {
                hyperparams: hp,
                val_phi: model.val_phi,
                selected_epoch: model.selected_epoch,
                epochs_run: model.history.len(),
            });
            if best.as_ref().is_none_or(|(_, b)| model.val_phi > b.val_phi) {
                best = Some((hp, model));
            }
        }
    }
    let train_seconds = train_started.elapsed().as_secs_f64();

    let predict_started = Instant::now();
    let test_index = frame.index[test_rows.clone()].to_vec();
    let (hyperparams, model, val_phi, signals) = match best {
        Some((hp, model)) => {
            let signals = if test_rows.is_empty() {
                Vec::new()
            } else {
                let diffed = apply_ffd_spec(&reader.rows(Stage::Predict, test_rows.start - warm..test_rows.end), &spec)?;
                model.predict(&Dataset::from_frame(&diffed, vec![Label::Flat; diffed.len()])?)?
            };
            let phi = model.val_phi;
            (Some(hp), Some(model), phi, signals)
        }
        None => {
            let phi = phi_of(&vec![Label::Flat; sel.data.n_rows()], &sel.data.labels, &cfg.tbl)?.value;
            (None, None, phi, vec![Label::Flat; test_index.len()])
        }
    };
    let predictions = SignalSeries::new(test_index, signals)?;
    let predict_seconds = predict_started.elapsed().as_secs_f64();

    Ok(SplitResult {
        split: split.clone(),
        ffd: spec,
        train_rows: fit.data.n_rows(),
        selection_rows: sel.data.n_rows(),
        train_class_counts: counts,
        hyperparams,
        candidates,
        val_phi,
        predictions,
        model,
        audit: reader.log.into_inner(),
        timings: SplitTimings {
            ffd_seconds,
            train_seconds,
            predict_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

/// Runs `splits` on a pool of `jobs` threads; results come back in input order.
pub fn run_splits(splits: &[Split], frame: &AlignedFrame, cfg: &WalkForwardConfig, jobs: usize) -> Result<Vec<SplitResult>> {
    run_splits_with(splits, frame, cfg, jobs, |_| Ok(()))
}

/// [`run_splits`], calling `on_done` as each split finishes (from a worker thread).
pub fn run_splits_with<F>(splits: &[Split], frame: &AlignedFrame, cfg: &WalkForwardConfig, jobs: usize, on_done: F) -> Result<Vec<SplitResult>>
where
    F: Fn(&SplitResult) -> Result<()> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        splits
            .par_iter()
            .map(|s| {
                let r = run_split(s, frame, cfg)?;
                on_done(&r)?;
                Ok(r)
            })
            .collect()
    })
}

/// Concatenated test predictions of `results`, which must follow plan order.
pub fn concat_results(results: &[SplitResult]) -> Result<SignalSeries> {
    let parts: Vec<_> = results.iter().map(|r| (&r.split.test, &r.predictions)).collect();
    concat_signals(&parts)
}
