//! Supervised autoencoder: encoder → code → decoder, plus a classifier head
//! over `[input ‖ code]`, with hand-written backpropagation.
//!
//! Inside each of the three stacks every layer but the last applies the hidden
//! activation; the code, the reconstruction and the class logits are linear.

mod checkpoint;
mod train;

pub use checkpoint::{checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use train::{
    class_weights_for, predict_probs_argmax, train, EpochStats, Standardizer, TrainConfig, TrainedSae,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::Label;

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaeArchitecture {
    pub input_dim: usize,
    /// Output widths of the encoder layers; the last one is the bottleneck.
    pub encoder_layers: Vec<usize>,
    /// Output widths of the decoder layers; the last one equals `input_dim`.
    pub decoder_layers: Vec<usize>,
    /// Output widths of the classifier layers, fed `input_dim + bottleneck`; ends in 3.
    pub classifier_layers: Vec<usize>,
    pub activation: Activation,
}

impl SaeArchitecture {
    /// Encoder `hidden… → bottleneck`, mirrored decoder, classifier `hidden… → 3`.
    pub fn new(
        input_dim: usize,
        encoder_hidden: &[usize],
        bottleneck: usize,
        classifier_hidden: &[usize],
        activation: Activation,
    ) -> Result<Self> {
        let mut encoder_layers = encoder_hidden.to_vec();
        encoder_layers.push(bottleneck);
        let mut decoder_layers: Vec<usize> = encoder_hidden.iter().rev().copied().collect();
        decoder_layers.push(input_dim);
        let mut classifier_layers = classifier_hidden.to_vec();
        classifier_layers.push(N_CLASSES);
        let arch = Self {
            input_dim,
            encoder_layers,
            decoder_layers,
            classifier_layers,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn bottleneck(&self) -> usize {
        *self.encoder_layers.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input dimension must be ≥ 1".into()));
        }
        if self.encoder_layers.is_empty() || self.bottleneck() == 0 {
            return Err(Error::Config("bottleneck must be ≥ 1".into()));
        }
        if self.decoder_layers.last() != Some(&self.input_dim) {
            return Err(Error::Config("decoder must end at the input dimension".into()));
        }
        if self.classifier_layers.last() != Some(&N_CLASSES) {
            return Err(Error::Config("classifier must end in 3 classes".into()));
        }
        let all = self
            .encoder_layers
            .iter()
            .chain(&self.decoder_layers)
            .chain(&self.classifier_layers);
        if all.clone().any(|w| *w == 0) {
            return Err(Error::Config("layer widths must be ≥ 1".into()));
        }
        Ok(())
    }

    fn stack_shapes(&self) -> [Vec<(usize, usize)>; 3] {
        let chain = |first: usize, widths: &[usize]| {
            let mut n_in = first;
            widths
                .iter()
                .map(|&w| {
                    let s = (n_in, w);
                    n_in = w;
                    s
                })
                .collect::<Vec<_>>()
        };
        [
            chain(self.input_dim, &self.encoder_layers),
            chain(self.bottleneck(), &self.decoder_layers),
            chain(self.input_dim + self.bottleneck(), &self.classifier_layers),
        ]
    }
}

/// Fully connected layer; `w` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    /// `rows × n_in` → `rows × n_out` pre-activations.
    fn forward(&self, input: &[f64], rows: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows * self.n_out);
        for r in 0..rows {
            let a = &input[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let wrow = &self.w[o * self.n_in..(o + 1) * self.n_in];
                let mut s = self.b[o];
                for (wi, ai) in wrow.iter().zip(a) {
                    s += wi * ai;
                }
                out.push(s);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeParams {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    pub classifier: Vec<Dense>,
}

impl SaeParams {
    pub fn zeros(arch: &SaeArchitecture) -> Self {
        let [e, d, c] = arch.stack_shapes();
        let build = |s: Vec<(usize, usize)>| s.into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        Self {
            encoder: build(e),
            decoder: build(d),
            classifier: build(c),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: &SaeArchitecture, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in p.layers_mut() {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.random_range(-limit..limit);
            }
        }
        p
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(&self.decoder).chain(&self.classifier)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(self.classifier.iter_mut())
    }

    /// Every weight and bias vector, in a fixed order.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        self.layers().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn check_shapes(&self, arch: &SaeArchitecture) -> Result<()> {
        let [e, d, c] = arch.stack_shapes();
        let ok = |layers: &[Dense], shapes: &[(usize, usize)]| {
            layers.len() == shapes.len()
                && layers.iter().zip(shapes).all(|(l, &(i, o))| {
                    l.n_in == i && l.n_out == o && l.w.len() == i * o && l.b.len() == o
                })
        };
        if !(ok(&self.encoder, &e) && ok(&self.decoder, &d) && ok(&self.classifier, &c)) {
            return Err(Error::Shape("parameters do not match the architecture".into()));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric {
                layer: "parameters".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub reconstruction: Vec<f64>,
    pub class_probs: [f64; N_CLASSES],
    pub code: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub classification: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reconstruction: 1.0,
            classification: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Unweighted mean squared reconstruction error.
    pub reconstruction: f64,
    /// Unweighted mean class-weighted cross-entropy.
    pub classification: f64,
}

/// Borrowed mini-batch: `rows × input_dim` standardized inputs plus labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a [f64],
    pub labels: &'a [Label],
}

impl Batch<'_> {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }
}

struct StackCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

fn stack_forward(
    layers: &[Dense],
    act: Activation,
    input: Vec<f64>,
    rows: usize,
    name: &str,
) -> Result<(Vec<f64>, StackCache)> {
    let mut cache = StackCache {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut a = input;
    for (i, layer) in layers.iter().enumerate() {
        let z = layer.forward(&a, rows);
        let out: Vec<f64> = if i + 1 < layers.len() {
            z.iter().map(|&v| act.apply(v)).collect()
        } else {
            z.clone()
        };
        if z.iter().chain(&out).any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: format!("{name}.{i}"),
            });
        }
        cache.inputs.push(a);
        cache.pre.push(z);
        a = out;
    }
    Ok((a, cache))
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the stack input.
fn stack_backward(
    layers: &[Dense],
    act: Activation,
    cache: &StackCache,
    d_out: Vec<f64>,
    rows: usize,
    grads: &mut [Dense],
) -> Vec<f64> {
    let mut d_a = d_out;
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let (n_in, n_out) = (layer.n_in, layer.n_out);
        let d_z: Vec<f64> = if i + 1 < layers.len() {
            d_a.iter()
                .zip(&cache.pre[i])
                .map(|(g, &z)| g * act.derivative(z))
                .collect()
        } else {
            d_a
        };
        let input = &cache.inputs[i];
        let g = &mut grads[i];
        let mut d_in = vec![0.0; rows * n_in];
        for r in 0..rows {
            let a_row = &input[r * n_in..(r + 1) * n_in];
            let dz_row = &d_z[r * n_out..(r + 1) * n_out];
            let din_row = &mut d_in[r * n_in..(r + 1) * n_in];
            for (o, &dz) in dz_row.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                g.b[o] += dz;
                let gw = &mut g.w[o * n_in..(o + 1) * n_in];
                let w = &layer.w[o * n_in..(o + 1) * n_in];
                for k in 0..n_in {
                    gw[k] += dz * a_row[k];
                    din_row[k] += dz * w[k];
                }
            }
        }
        d_a = d_in;
    }
    d_a
}

fn concat_rows(x: &[f64], x_cols: usize, code: &[f64], code_cols: usize, rows: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * (x_cols + code_cols));
    for r in 0..rows {
        out.extend_from_slice(&x[r * x_cols..(r + 1) * x_cols]);
        out.extend_from_slice(&code[r * code_cols..(r + 1) * code_cols]);
    }
    out
}

fn softmax(logits: &[f64]) -> [f64; N_CLASSES] {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p = [0.0; N_CLASSES];
    let mut s = 0.0;
    for (pi, &z) in p.iter_mut().zip(logits) {
        *pi = (z - m).exp();
        s += *pi;
    }
    for pi in &mut p {
        *pi /= s;
    }
    p
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

struct BatchForward {
    reconstruction: Vec<f64>,
    logits: Vec<f64>,
    code: Vec<f64>,
    enc: StackCache,
    dec: StackCache,
    cls: StackCache,
}

fn forward_batch(params: &SaeParams, arch: &SaeArchitecture, x: &[f64], rows: usize) -> Result<BatchForward> {
    if x.len() != rows * arch.input_dim {
        return Err(Error::Shape(format!(
            "expected {} inputs per row, got {} values for {rows} rows",
            arch.input_dim,
            x.len()
        )));
    }
    let act = arch.activation;
    let (code, enc) = stack_forward(&params.encoder, act, x.to_vec(), rows, "encoder")?;
    let (reconstruction, dec) = stack_forward(&params.decoder, act, code.clone(), rows, "decoder")?;
    let joined = concat_rows(x, arch.input_dim, &code, arch.bottleneck(), rows);
    let (logits, cls) = stack_forward(&params.classifier, act, joined, rows, "classifier")?;
    Ok(BatchForward {
        reconstruction,
        logits,
        code,
        enc,
        dec,
        cls,
    })
}

/// Single-row forward pass on a standardized input.
pub fn forward(params: &SaeParams, arch: &SaeArchitecture, x: &[f64]) -> Result<ForwardOutput> {
    let out = forward_batch(params, arch, x, 1)?;
    Ok(ForwardOutput {
        class_probs: softmax(&out.logits),
        reconstruction: out.reconstruction,
        code: out.code,
    })
}

/// Class probabilities for every row of a standardized batch.
pub fn class_probs_batch(params: &SaeParams, arch: &SaeArchitecture, x: &[f64]) -> Result<Vec<[f64; N_CLASSES]>> {
    let rows = x.len() / arch.input_dim.max(1);
    let out = forward_batch(params, arch, x, rows)?;
    Ok(out.logits.chunks(N_CLASSES).map(softmax).collect())
}

fn losses(
    out: &BatchForward,
    arch: &SaeArchitecture,
    batch: &Batch<'_>,
    weights: &LossWeights,
    class_weights: &[f64; N_CLASSES],
) -> LossBreakdown {
    let rows = batch.rows() as f64;
    let d = arch.input_dim as f64;
    let rec = out
        .reconstruction
        .iter()
        .zip(batch.x)
        .map(|(r, x)| (r - x).powi(2))
        .sum::<f64>()
        / (rows * d);
    let cls = out
        .logits
        .chunks(N_CLASSES)
        .zip(batch.labels)
        .map(|(z, y)| {
            let c = y.class_index();
            class_weights[c] * (log_sum_exp(z) - z[c])
        })
        .sum::<f64>()
        / rows;
    LossBreakdown {
        total: weights.reconstruction * rec + weights.classification * cls,
        reconstruction: rec,
        classification: cls,
    }
}

fn check_batch(batch: &Batch<'_>) -> Result<()> {
    if batch.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(())
}

/// `w_rec · MSE(reconstruction, x) + w_cls · weighted cross-entropy`, batch mean.
pub fn loss(
    params: &SaeParams,
    arch: &SaeArchitecture,
    batch: &Batch<'_>,
    weights: &LossWeights,
    class_weights: &[f64; N_CLASSES],
) -> Result<LossBreakdown> {
    check_batch(batch)?;
    let out = forward_batch(params, arch, batch.x, batch.rows())?;
    Ok(losses(&out, arch, batch, weights, class_weights))
}

/// Loss and its exact gradient with respect to every parameter.
pub fn backward(
    params: &SaeParams,
    arch: &SaeArchitecture,
    batch: &Batch<'_>,
    weights: &LossWeights,
    class_weights: &[f64; N_CLASSES],
) -> Result<(LossBreakdown, SaeParams)> {
    check_batch(batch)?;
    let rows = batch.rows();
    let out = forward_batch(params, arch, batch.x, rows)?;
    let breakdown = losses(&out, arch, batch, weights, class_weights);
    if !breakdown.total.is_finite() {
        return Err(Error::Numeric { layer: "loss".into() });
    }
    let act = arch.activation;
    let mut grads = SaeParams::zeros(arch);

    let rec_scale = 2.0 * weights.reconstruction / (rows * arch.input_dim) as f64;
    let d_rec: Vec<f64> = out
        .reconstruction
        .iter()
        .zip(batch.x)
        .map(|(r, x)| rec_scale * (r - x))
        .collect();

    let mut d_logits = Vec::with_capacity(rows * N_CLASSES);
    for (z, y) in out.logits.chunks(N_CLASSES).zip(batch.labels) {
        let p = softmax(z);
        let c = y.class_index();
        let scale = weights.classification * class_weights[c] / rows as f64;
        for (k, pk) in p.iter().enumerate() {
            let target = if k == c { 1.0 } else { 0.0 };
            d_logits.push(scale * (pk - target));
        }
    }

    let mut d_code = stack_backward(&params.decoder, act, &out.dec, d_rec, rows, &mut grads.decoder);
    let d_joined = stack_backward(&params.classifier, act, &out.cls, d_logits, rows, &mut grads.classifier);
    let (dim, b) = (arch.input_dim, arch.bottleneck());
    for r in 0..rows {
        let src = &d_joined[r * (dim + b) + dim..(r + 1) * (dim + b)];
        for (dst, s) in d_code[r * b..(r + 1) * b].iter_mut().zip(src) {
            *dst += s;
        }
    }
    stack_backward(&params.encoder, act, &out.enc, d_code, rows, &mut grads.encoder);
    Ok((breakdown, grads))
}
