use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, class_probs_batch, Batch, LossWeights, SaeArchitecture, SaeParams, N_CLASSES};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::labeling::{phi_of, Label, TblConfig};
use crate::seeds::derive_seed;

const CLASS_WEIGHT_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss_weights: LossWeights,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Overrides the inverse-frequency default when set.
    pub class_weights: Option<[f64; N_CLASSES]>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_weights: LossWeights::default(),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            class_weights: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.loss_weights;
        if !(w.reconstruction >= 0.0 && w.classification >= 0.0) || w.reconstruction + w.classification <= 0.0 {
            return Err(Error::Config("loss weights must be ≥ 0 with a positive sum".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("invalid optimizer hyperparameters".into()));
        }
        if let Some(cw) = self.class_weights {
            if cw.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::Config("class weights must be finite and ≥ 0".into()));
            }
        }
        Ok(())
    }
}

/// Inverse class frequency, each weight capped at 10× the smallest one.
/// Absent classes receive the cap.
pub fn class_weights_for(counts: [usize; N_CLASSES]) -> [f64; N_CLASSES] {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return [1.0; N_CLASSES];
    }
    let raw = counts.map(|c| if c == 0 { f64::INFINITY } else { total as f64 / (N_CLASSES as f64 * c as f64) });
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    raw.map(|w| w.min(CLASS_WEIGHT_CAP * min))
}

/// Per-feature mean and sample std from training rows; zero std becomes 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let n = train.n_rows();
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        let cols = train.n_cols();
        let mut mean = vec![0.0; cols];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(train.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut ss = vec![0.0; cols];
        for r in 0..n {
            for ((s, v), m) in ss.iter_mut().zip(train.row(r)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = ss
            .into_iter()
            .map(|s| {
                let sd = (s / (n - 1) as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.mean.len();
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % cols]) / self.std[i % cols])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_reconstruction: f64,
    pub train_classification: f64,
    pub val_phi: f64,
    pub val_ln_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSae {
    pub architecture: SaeArchitecture,
    pub params: SaeParams,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub class_weights: [f64; N_CLASSES],
    pub history: Vec<EpochStats>,
    pub selected_epoch: usize,
    pub val_phi: f64,
}

/// Argmax over `(−1, 0, +1)` probabilities; any exact tie for the maximum gives 0.
pub fn predict_probs_argmax(p: &[f64; N_CLASSES]) -> Label {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hits: Vec<usize> = (0..N_CLASSES).filter(|&i| p[i] == max).collect();
    if hits.len() == 1 {
        Label::from_class_index(hits[0])
    } else {
        Label::Flat
    }
}

impl TrainedSae {
    /// Labels for raw (unstandardized) rows laid out like `feature_names`.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<Label>> {
        let cols = self.feature_names.len();
        if cols == 0 || x.len() % cols != 0 {
            return Err(Error::Shape(format!("{} values do not form rows of {cols}", x.len())));
        }
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let z = self.standardizer.transform(x);
        let probs = class_probs_batch(&self.params, &self.architecture, &z)?;
        Ok(probs.iter().map(predict_probs_argmax).collect())
    }

    /// Labels for a dataset whose feature names must match the model's.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<Label>> {
        if data.feature_names != self.feature_names {
            return Err(Error::SpecMismatch(format!(
                "model expects {:?}, got {:?}",
                self.feature_names, data.feature_names
            )));
        }
        self.predict_raw(&data.x)
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &SaeParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut SaeParams, grads: &SaeParams, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Mini-batch Adam; after each epoch scores Φ on `val` and keeps the best
/// snapshot (earliest wins ties), stopping after `patience` epochs without gain.
pub fn train(
    train_set: &Dataset,
    val: &Dataset,
    arch: &SaeArchitecture,
    cfg: &TrainConfig,
    tbl: &TblConfig,
) -> Result<TrainedSae> {
    cfg.validate()?;
    arch.validate()?;
    tbl.validate()?;
    if train_set.n_cols() != arch.input_dim {
        return Err(Error::Shape(format!(
            "architecture expects {} features, training set has {}",
            arch.input_dim,
            train_set.n_cols()
        )));
    }
    if val.feature_names != train_set.feature_names {
        return Err(Error::SpecMismatch("validation features differ from training features".into()));
    }
    if val.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }

    let standardizer = Standardizer::fit(train_set)?;
    let xs = standardizer.transform(&train_set.x);
    let val_x = standardizer.transform(&val.x);
    let class_weights = cfg.class_weights.unwrap_or_else(|| class_weights_for(train_set.class_counts()));

    let mut params = SaeParams::init(arch, derive_seed(cfg.seed, "sae-init", 0));
    let mut adam = Adam::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "sae-shuffle", 0));
    let rows = train_set.n_rows();
    let dim = arch.input_dim;
    let mut order: Vec<usize> = (0..rows).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * dim);
    let mut by = Vec::with_capacity(cfg.batch_size);

    let mut history = Vec::new();
    let mut best: Option<(SaeParams, usize, f64, f64)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut tot, mut rec, mut cls) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &r in chunk {
                bx.extend_from_slice(&xs[r * dim..(r + 1) * dim]);
                by.push(train_set.labels[r]);
            }
            let batch = Batch { x: &bx, labels: &by };
            let (l, g) = backward(&params, arch, &batch, &cfg.loss_weights, &class_weights).map_err(|e| match e {
                Error::Numeric { .. } => Error::Training {
                    last_finite_epoch: epoch - 1,
                },
                other => other,
            })?;
            let w = chunk.len() as f64 / rows as f64;
            tot += l.total * w;
            rec += l.reconstruction * w;
            cls += l.classification * w;
            adam.step(&mut params, &g, cfg);
        }
        if !tot.is_finite() || params.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Training {
                last_finite_epoch: epoch - 1,
            });
        }

        let probs = class_probs_batch(&params, arch, &val_x).map_err(|_| Error::Training {
            last_finite_epoch: epoch - 1,
        })?;
        let pred: Vec<Label> = probs.iter().map(predict_probs_argmax).collect();
        let phi = phi_of(&pred, &val.labels, tbl)?;
        history.push(EpochStats {
            epoch,
            train_loss: tot,
            train_reconstruction: rec,
            train_classification: cls,
            val_phi: phi.value,
            val_ln_phi: phi.ln,
        });

        let improved = best.as_ref().is_none_or(|b| phi.ln > b.3);
        if improved {
            best = Some((params.clone(), epoch, phi.value, phi.ln));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (params, selected_epoch, val_phi, _) = best.expect("at least one epoch runs");
    Ok(TrainedSae {
        architecture: arch.clone(),
        params,
        feature_names: train_set.feature_names.clone(),
        standardizer,
        class_weights,
        history,
        selected_epoch,
        val_phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::Activation;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tbl() -> TblConfig {
        TblConfig::default()
    }

    /// Sign parity of three standard normals: no half-space or slab beats ~60%.
    fn parity_set(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(3 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            labels.push(if v[0] * v[1] * v[2] > 0.0 { Label::Long } else { Label::Short });
            x.extend_from_slice(&v);
        }
        Dataset::new(vec!["a".into(), "b".into(), "c".into()], x, labels).unwrap()
    }

    fn xor_set(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            x.push(a);
            x.push(b);
            labels.push(if a * b > 0.0 { Label::Long } else { Label::Short });
        }
        Dataset::new(vec!["a".into(), "b".into()], x, labels).unwrap()
    }

    fn accuracy(model: &TrainedSae, d: &Dataset) -> f64 {
        let p = model.predict(d).unwrap();
        p.iter().zip(&d.labels).filter(|(a, b)| a == b).count() as f64 / d.n_rows() as f64
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(predict_probs_argmax(&[0.1, 0.2, 0.7]), Label::Long);
        assert_eq!(predict_probs_argmax(&[0.7, 0.2, 0.1]), Label::Short);
        let third = 1.0 / 3.0;
        assert_eq!(predict_probs_argmax(&[third, third, third]), Label::Flat);
        assert_eq!(predict_probs_argmax(&[0.45, 0.1, 0.45]), Label::Flat);
    }

    #[test]
    fn class_weight_defaults() {
        let w = class_weights_for([10, 80, 10]);
        assert!((w[0] - 100.0 / 30.0).abs() < 1e-12);
        assert!((w[1] - 100.0 / 240.0).abs() < 1e-12);
        let capped = class_weights_for([1, 1000, 1]);
        assert!((capped[0] / capped[1] - 10.0).abs() < 1e-12);
        let missing = class_weights_for([0, 50, 50]);
        assert!((missing[0] / missing[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn standardizer_uses_train_stats() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![1.0, 5.0, 3.0, 5.0, 5.0, 5.0],
            vec![Label::Flat; 3],
        )
        .unwrap();
        let s = Standardizer::fit(&d).unwrap();
        assert_eq!(s.mean, vec![3.0, 5.0]);
        assert_eq!(s.std, vec![2.0, 1.0]);
        assert_eq!(s.transform(&[5.0, 6.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.loss_weights = LossWeights {
            reconstruction: 0.0,
            classification: 0.0,
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn parity_needs_hidden_layers() {
        let train_d = parity_set(1000, 1);
        let val_d = parity_set(500, 2);
        let test_d = parity_set(2000, 3);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 32,
            max_epochs: 300,
            patience: 60,
            class_weights: Some([1.0; 3]),
            seed: 7,
            ..TrainConfig::default()
        };
        let deep = SaeArchitecture::new(3, &[16], 4, &[16], Activation::Tanh).unwrap();
        let m = train(&train_d, &val_d, &deep, &cfg, &tbl()).unwrap();
        let acc = accuracy(&m, &test_d);
        assert!(acc > 0.9, "deep accuracy {acc}");

        let linear = SaeArchitecture::new(3, &[], 2, &[], Activation::Identity).unwrap();
        let m = train(&train_d, &val_d, &linear, &cfg, &tbl()).unwrap();
        let acc = accuracy(&m, &test_d);
        assert!(acc <= 0.6, "linear accuracy {acc}");
    }

    #[test]
    fn selected_snapshot_is_best_observed() {
        let train_d = xor_set(200, 4);
        let val_d = xor_set(100, 5);
        let arch = SaeArchitecture::new(2, &[8], 2, &[8], Activation::Relu).unwrap();
        let cfg = TrainConfig {
            max_epochs: 30,
            patience: 5,
            batch_size: 16,
            seed: 1,
            ..TrainConfig::default()
        };
        let m = train(&train_d, &val_d, &arch, &cfg, &tbl()).unwrap();
        let best = m.history.iter().map(|h| h.val_ln_phi).fold(f64::NEG_INFINITY, f64::max);
        let sel = &m.history[m.selected_epoch - 1];
        assert_eq!(sel.val_ln_phi, best);
        assert_eq!(sel.val_phi, m.val_phi);
        // recomputing Φ from the stored snapshot agrees
        let phi = phi_of(&m.predict(&val_d).unwrap(), &val_d.labels, &tbl()).unwrap();
        assert_eq!(phi.value, m.val_phi);
        // early stop: last epoch is at most `patience` past the selection
        assert!(m.history.len() <= m.selected_epoch + cfg.patience);
    }

    #[test]
    fn training_is_deterministic() {
        let train_d = xor_set(300, 6);
        let val_d = xor_set(100, 7);
        let arch = SaeArchitecture::new(2, &[8], 3, &[8], Activation::Relu).unwrap();
        let cfg = TrainConfig {
            max_epochs: 8,
            batch_size: 32,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train(&train_d, &val_d, &arch, &cfg, &tbl()).unwrap();
        let b = train(&train_d, &val_d, &arch, &cfg, &tbl()).unwrap();
        assert_eq!(a, b);
        let c = train(&train_d, &val_d, &arch, &TrainConfig { seed: 43, ..cfg }, &tbl()).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn linear_autoencoder_recovers_subspace() {
        // 5-dim data on a 2-dim linear subspace
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let basis = [[1.0, 0.5, -0.3, 0.2, 0.8], [-0.4, 1.0, 0.6, -0.7, 0.1]];
        let n = 400;
        let mut x = Vec::with_capacity(n * 5);
        for _ in 0..n {
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            for j in 0..5 {
                x.push(a * basis[0][j] + b * basis[1][j]);
            }
        }
        let names: Vec<String> = (0..5).map(|j| format!("f{j}")).collect();
        let d = Dataset::new(names, x, vec![Label::Flat; n]).unwrap();
        let arch = SaeArchitecture::new(5, &[], 2, &[], Activation::Identity).unwrap();
        let cfg = TrainConfig {
            loss_weights: LossWeights {
                reconstruction: 1.0,
                classification: 0.0,
            },
            learning_rate: 1e-2,
            batch_size: 32,
            max_epochs: 400,
            patience: 1000,
            seed: 3,
            ..TrainConfig::default()
        };
        let m = train(&d, &d, &arch, &cfg, &tbl()).unwrap();
        // the selected snapshot is epoch 1 (Φ is constant); score the final loss instead
        let last = m.history.last().unwrap();
        assert!(last.train_reconstruction < 1e-6, "{}", last.train_reconstruction);
    }

    #[test]
    fn classification_loss_non_increasing_in_weight() {
        // convex case: linear classifier on separable-ish data, no hidden layers
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 300;
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let centre = [-2.0, 0.0, 2.0][c];
            x.push(centre + rng.random_range(-1.5..1.5));
            x.push(rng.random_range(-1.0..1.0));
            labels.push(Label::from_class_index(c));
        }
        let d = Dataset::new(vec!["a".into(), "b".into()], x, labels).unwrap();
        let arch = SaeArchitecture::new(2, &[], 2, &[], Activation::Identity).unwrap();
        let mut prev = f64::INFINITY;
        for w_cls in [0.0, 0.5, 1.0, 2.0] {
            let cfg = TrainConfig {
                loss_weights: LossWeights {
                    reconstruction: 1.0,
                    classification: w_cls,
                },
                learning_rate: 1e-2,
                batch_size: 300,
                max_epochs: 1500,
                patience: 2000,
                class_weights: Some([1.0; 3]),
                seed: 5,
                ..TrainConfig::default()
            };
            let m = train(&d, &d, &arch, &cfg, &tbl()).unwrap();
            let final_cls = m.history.last().unwrap().train_classification;
            assert!(final_cls <= prev + 1e-6, "w_cls {w_cls}: {final_cls} > {prev}");
            prev = final_cls;
        }
    }

    #[test]
    fn predict_checks_features_and_is_row_independent() {
        let train_d = xor_set(200, 4);
        let arch = SaeArchitecture::new(2, &[4], 2, &[4], Activation::Relu).unwrap();
        let cfg = TrainConfig {
            max_epochs: 3,
            seed: 2,
            ..TrainConfig::default()
        };
        let m = train(&train_d, &train_d, &arch, &cfg, &tbl()).unwrap();
        let all = m.predict(&train_d).unwrap();
        for r in 0..train_d.n_rows() {
            assert_eq!(m.predict_raw(train_d.row(r)).unwrap()[0], all[r]);
        }
        let mut renamed = train_d.clone();
        renamed.feature_names = vec!["b".into(), "a".into()];
        assert!(matches!(m.predict(&renamed), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn divergence_reports_last_finite_epoch() {
        let train_d = xor_set(100, 4);
        let arch = SaeArchitecture::new(2, &[4], 2, &[4], Activation::Relu).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            max_epochs: 50,
            patience: 100,
            seed: 2,
            ..TrainConfig::default()
        };
        match train(&train_d, &train_d, &arch, &cfg, &tbl()) {
            Err(Error::Training { .. }) => {}
            other => panic!("{:?}", other.map(|m| m.selected_epoch)),
        }
    }
}
