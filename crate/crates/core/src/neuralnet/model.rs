//! Two-branch sequence regressor over a single flat parameter vector.
//!
//! Per example: main (Bi)LSTM -> dense, optional funding (Bi)LSTM -> dense, categorical
//! embedding lookups and scaled mass are concatenated, batch-normalized, and mapped to one
//! output unit.

use std::ops::Range;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::lstm::{lstm_layer_backward, lstm_layer_forward, DropoutMasks, LayerCache, LstmWeights, GATES};
use super::{Activation, NetError, Result};
use crate::features::WindowedExample;

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;
const FORGET_BIAS: f64 = 1.0;

/// One recurrent branch followed by a dense layer of the same width as the hidden state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub input_size: usize,
    pub hidden_size: usize,
    pub bidirectional: bool,
}

impl BranchSpec {
    fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    fn lstm_width(&self) -> usize {
        self.directions() * self.hidden_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    /// Vocabulary size plus the reserved index.
    pub rows: usize,
    pub dim: usize,
}

impl EmbeddingSpec {
    /// Table for `n_labels` known labels: `ceil(n/2)` dimensions, at least one.
    pub fn for_vocabulary(n_labels: usize) -> Self {
        Self {
            rows: n_labels + 1,
            dim: n_labels.div_ceil(2).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub main: BranchSpec,
    pub funding: Option<BranchSpec>,
    pub embeddings: Vec<EmbeddingSpec>,
    pub use_mass: bool,
}

impl Architecture {
    pub fn concat_width(&self) -> usize {
        self.main.hidden_size
            + self.funding.map_or(0, |f| f.hidden_size)
            + self.embeddings.iter().map(|e| e.dim).sum::<usize>()
            + usize::from(self.use_mass)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    fn layout(&self) -> Layout {
        let mut cur = 0usize;
        let mut take = |n: usize| {
            let r = cur..cur + n;
            cur += n;
            r
        };
        let branch = |spec: &BranchSpec, take: &mut dyn FnMut(usize) -> Range<usize>| {
            let h = spec.hidden_size;
            let dirs = (0..spec.directions())
                .map(|_| {
                    let w = take(GATES * h * (spec.input_size + h));
                    let b = take(GATES * h);
                    (w, b)
                })
                .collect();
            BranchLayout {
                dirs,
                dense_w: take(h * spec.lstm_width()),
                dense_b: take(h),
            }
        };
        let main = branch(&self.main, &mut take);
        let funding = self.funding.as_ref().map(|f| branch(f, &mut take));
        let embeddings = self.embeddings.iter().map(|e| take(e.rows * e.dim)).collect();
        let c = self.concat_width();
        let bn_gamma = take(c);
        let bn_beta = take(c);
        let out_w = take(c);
        let out_b = take(1);
        Layout {
            main,
            funding,
            embeddings,
            bn_gamma,
            bn_beta,
            out_w,
            out_b,
            total: cur,
        }
    }
}

#[derive(Debug, Clone)]
struct BranchLayout {
    dirs: Vec<(Range<usize>, Range<usize>)>,
    dense_w: Range<usize>,
    dense_b: Range<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    main: BranchLayout,
    funding: Option<BranchLayout>,
    embeddings: Vec<Range<usize>>,
    bn_gamma: Range<usize>,
    bn_beta: Range<usize>,
    out_w: Range<usize>,
    out_b: Range<usize>,
    total: usize,
}

/// Trainable values plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub values: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    out.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
}

impl ModelParams {
    pub fn zeros(architecture: Architecture) -> Self {
        let layout = architecture.layout();
        let c = architecture.concat_width();
        Self {
            architecture,
            values: vec![0.0; layout.total],
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
        }
    }

    /// Glorot-uniform weights, zero biases with the forget gate offset, unit batch-norm gain.
    pub fn init<R: Rng + ?Sized>(architecture: Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(architecture);
        let layout = p.architecture.layout();
        let arch = p.architecture.clone();
        let branches = std::iter::once((&layout.main, arch.main))
            .chain(layout.funding.as_ref().zip(arch.funding));
        for (bl, spec) in branches {
            let h = spec.hidden_size;
            for (w, b) in &bl.dirs {
                glorot(rng, &mut p.values[w.clone()], spec.input_size + h, GATES * h);
                p.values[b.start..b.start + h].fill(FORGET_BIAS);
            }
            glorot(rng, &mut p.values[bl.dense_w.clone()], spec.lstm_width(), h);
        }
        for (r, e) in layout.embeddings.iter().zip(&arch.embeddings) {
            glorot(rng, &mut p.values[r.clone()], e.rows, e.dim);
        }
        p.values[layout.bn_gamma.clone()].fill(1.0);
        glorot(rng, &mut p.values[layout.out_w.clone()], arch.concat_width(), 1);
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Folds the batch statistics of a training pass into the running estimates.
    pub fn update_running_stats(&mut self, cache: &BatchCache) {
        for j in 0..self.running_mean.len() {
            self.running_mean[j] = BN_MOMENTUM * self.running_mean[j] + (1.0 - BN_MOMENTUM) * cache.batch_mean[j];
            self.running_var[j] = BN_MOMENTUM * self.running_var[j] + (1.0 - BN_MOMENTUM) * cache.batch_var[j];
        }
    }
}

/// Activation and dropout choices that shape a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetSettings {
    pub lstm_activation: Activation,
    pub output_activation: Activation,
    pub dropout: f64,
    pub recurrent_dropout: f64,
}

impl NetSettings {
    /// Rates at or above 1 are clamped to 0.99.
    pub fn new(lstm_activation: Activation, output_activation: Activation, dropout: f64, recurrent_dropout: f64) -> Self {
        let clamp = |name: &str, r: f64| {
            if r >= 1.0 {
                log::warn!("neuralnet: {name} {r} clamped to 0.99");
                0.99
            } else {
                r.max(0.0)
            }
        };
        Self {
            lstm_activation,
            output_activation,
            dropout: clamp("dropout", dropout),
            recurrent_dropout: clamp("recurrent dropout", recurrent_dropout),
        }
    }
}

pub enum Mode<'a> {
    /// Dropout active, batch statistics, cache retained.
    Train(&'a mut dyn RngCore),
    /// Dropout off, running statistics.
    Eval,
}

#[derive(Debug, Clone)]
struct BranchCache {
    lstm_out: Vec<f64>,
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
struct ExampleCache {
    main: BranchCache,
    funding: Option<BranchCache>,
}

/// Intermediate values of a training-mode pass.
#[derive(Debug, Clone)]
pub struct BatchCache {
    examples: Vec<ExampleCache>,
    xhat: Vec<Vec<f64>>,
    normalized: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    pre_output: Vec<f64>,
    outputs: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Predicted log2 lifetime per example.
    pub outputs: Vec<f64>,
    pub cache: Option<BatchCache>,
}

fn dims(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(NetError::DimensionMismatch(format!("{what}: got {got}, expected {want}")))
    }
}

fn branch_forward(
    values: &[f64],
    layout: &BranchLayout,
    spec: &BranchSpec,
    sequence: &[Vec<f64>],
    settings: &NetSettings,
    rng: Option<&mut (dyn RngCore + '_)>,
) -> Result<(Vec<f64>, Option<BranchCache>)> {
    let keep = rng.is_some();
    let mut rng = rng;
    let mut lstm_out = Vec::with_capacity(spec.lstm_width());
    let mut layers = Vec::new();
    let reversed: Vec<Vec<f64>> = if spec.bidirectional {
        sequence.iter().rev().cloned().collect()
    } else {
        Vec::new()
    };
    for (d, (w, b)) in layout.dirs.iter().enumerate() {
        let weights = LstmWeights::new(spec.input_size, spec.hidden_size, &values[w.clone()], &values[b.clone()])?;
        let seq: &[Vec<f64>] = if d == 0 { sequence } else { &reversed };
        let masks = rng.as_deref_mut().map(|r| {
            DropoutMasks::sample(r, spec.input_size, spec.hidden_size, settings.dropout, settings.recurrent_dropout)
        });
        let out = lstm_layer_forward(seq, &weights, settings.lstm_activation, masks.as_ref(), keep)?;
        lstm_out.extend_from_slice(&out.hidden);
        layers.extend(out.cache);
    }
    let h = spec.hidden_size;
    let wd = &values[layout.dense_w.clone()];
    let bd = &values[layout.dense_b.clone()];
    let dense = (0..h)
        .map(|i| {
            bd[i] + wd[i * lstm_out.len()..(i + 1) * lstm_out.len()]
                .iter()
                .zip(&lstm_out)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .collect();
    let cache = keep.then_some(BranchCache { lstm_out, layers });
    Ok((dense, cache))
}

fn branch_backward(
    values: &[f64],
    layout: &BranchLayout,
    spec: &BranchSpec,
    cache: &BranchCache,
    activation: Activation,
    d_dense: &[f64],
    grads: &mut [f64],
) -> Result<()> {
    let width = cache.lstm_out.len();
    let wd = &values[layout.dense_w.clone()];
    let mut d_lstm = vec![0.0; width];
    for (i, &g) in d_dense.iter().enumerate() {
        grads[layout.dense_b.start + i] += g;
        let row = layout.dense_w.start + i * width;
        for k in 0..width {
            grads[row + k] += g * cache.lstm_out[k];
            d_lstm[k] += g * wd[i * width + k];
        }
    }
    let h = spec.hidden_size;
    for (d, ((w, b), layer)) in layout.dirs.iter().zip(&cache.layers).enumerate() {
        let weights = LstmWeights::new(spec.input_size, h, &values[w.clone()], &values[b.clone()])?;
        let (gw, gb) = grads[w.start..b.end].split_at_mut(w.len());
        lstm_layer_backward(&weights, layer, activation, &d_lstm[d * h..(d + 1) * h], gw, gb);
    }
    Ok(())
}

/// Runs a batch through the network.
pub fn model_forward(
    params: &ModelParams,
    settings: &NetSettings,
    batch: &[WindowedExample],
    mode: Mode<'_>,
) -> Result<ForwardPass> {
    if batch.is_empty() {
        return Err(NetError::EmptySet("batch"));
    }
    let arch = &params.architecture;
    let layout = arch.layout();
    dims("parameter vector", params.values.len(), layout.total)?;
    let values = &params.values;
    let mut rng = match mode {
        Mode::Train(r) => Some(r),
        Mode::Eval => None,
    };
    let training = rng.is_some();
    let width = arch.concat_width();
    let mut concat = Vec::with_capacity(batch.len());
    let mut caches = Vec::with_capacity(batch.len());
    for ex in batch {
        let mut row = Vec::with_capacity(width);
        let (d, main) = branch_forward(values, &layout.main, &arch.main, &ex.seq_main, settings, rng.as_deref_mut())?;
        row.extend(d);
        let funding = match (&layout.funding, &arch.funding) {
            (Some(fl), Some(fs)) => {
                let (d, c) = branch_forward(values, fl, fs, &ex.seq_funding, settings, rng.as_deref_mut())?;
                row.extend(d);
                c
            }
            _ => None,
        };
        dims("categorical inputs", ex.categoricals.len(), arch.embeddings.len())?;
        for ((r, e), &idx) in layout.embeddings.iter().zip(&arch.embeddings).zip(&ex.categoricals) {
            if idx >= e.rows {
                return Err(NetError::VocabularyOverflow { index: idx, rows: e.rows });
            }
            row.extend_from_slice(&values[r.start + idx * e.dim..r.start + (idx + 1) * e.dim]);
        }
        if arch.use_mass {
            row.push(ex.mass);
        }
        concat.push(row);
        if let Some(main) = main {
            caches.push(ExampleCache { main, funding });
        }
    }

    let n = batch.len() as f64;
    let (mean, var) = if training {
        let mut mean = vec![0.0; width];
        let mut var = vec![0.0; width];
        for row in &concat {
            for j in 0..width {
                mean[j] += row[j] / n;
            }
        }
        for row in &concat {
            for j in 0..width {
                var[j] += (row[j] - mean[j]).powi(2) / n;
            }
        }
        (mean, var)
    } else {
        (params.running_mean.clone(), params.running_var.clone())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let gamma = &values[layout.bn_gamma.clone()];
    let beta = &values[layout.bn_beta.clone()];
    let out_w = &values[layout.out_w.clone()];
    let out_b = values[layout.out_b.start];
    let mut xhat = Vec::with_capacity(batch.len());
    let mut normalized = Vec::with_capacity(batch.len());
    let mut pre_output = Vec::with_capacity(batch.len());
    let mut outputs = Vec::with_capacity(batch.len());
    for row in &concat {
        let xh: Vec<f64> = (0..width).map(|j| (row[j] - mean[j]) * inv_std[j]).collect();
        let y: Vec<f64> = (0..width).map(|j| gamma[j] * xh[j] + beta[j]).collect();
        let pre = out_b + y.iter().zip(out_w).map(|(a, b)| a * b).sum::<f64>();
        outputs.push(settings.output_activation.apply(pre));
        pre_output.push(pre);
        xhat.push(xh);
        normalized.push(y);
    }
    let cache = training.then(|| BatchCache {
        examples: caches,
        xhat,
        normalized,
        inv_std,
        pre_output,
        outputs: outputs.clone(),
        batch_mean: mean,
        batch_var: var,
    });
    Ok(ForwardPass { outputs, cache })
}

/// Mean squared error of a training pass and its gradient with respect to every value.
pub fn model_backward(
    params: &ModelParams,
    settings: &NetSettings,
    batch: &[WindowedExample],
    cache: &BatchCache,
) -> Result<(f64, Vec<f64>)> {
    let arch = &params.architecture;
    let layout = arch.layout();
    dims("cached batch", cache.outputs.len(), batch.len())?;
    let values = &params.values;
    let width = arch.concat_width();
    let n = batch.len() as f64;
    let mut grads = vec![0.0; layout.total];
    let out_w = &values[layout.out_w.clone()];
    let gamma = &values[layout.bn_gamma.clone()];

    let mut loss = 0.0;
    let mut d_xhat = vec![vec![0.0; width]; batch.len()];
    for (b, ex) in batch.iter().enumerate() {
        let err = cache.outputs[b] - ex.target;
        loss += err * err / n;
        let d_out = 2.0 * err / n;
        let d_pre = d_out * settings.output_activation.derivative(cache.pre_output[b], cache.outputs[b]);
        grads[layout.out_b.start] += d_pre;
        for j in 0..width {
            grads[layout.out_w.start + j] += d_pre * cache.normalized[b][j];
            let dy = d_pre * out_w[j];
            grads[layout.bn_gamma.start + j] += dy * cache.xhat[b][j];
            grads[layout.bn_beta.start + j] += dy;
            d_xhat[b][j] = dy * gamma[j];
        }
    }
    let mut sum_d = vec![0.0; width];
    let mut sum_dx = vec![0.0; width];
    for b in 0..batch.len() {
        for j in 0..width {
            sum_d[j] += d_xhat[b][j];
            sum_dx[j] += d_xhat[b][j] * cache.xhat[b][j];
        }
    }

    for (b, ex) in batch.iter().enumerate() {
        let d_concat: Vec<f64> = (0..width)
            .map(|j| cache.inv_std[j] / n * (n * d_xhat[b][j] - sum_d[j] - cache.xhat[b][j] * sum_dx[j]))
            .collect();
        let ec = &cache.examples[b];
        let mut off = 0;
        let h = arch.main.hidden_size;
        branch_backward(values, &layout.main, &arch.main, &ec.main, settings.lstm_activation, &d_concat[..h], &mut grads)?;
        off += h;
        if let (Some(fl), Some(fs), Some(fc)) = (&layout.funding, &arch.funding, &ec.funding) {
            let h = fs.hidden_size;
            branch_backward(values, fl, fs, fc, settings.lstm_activation, &d_concat[off..off + h], &mut grads)?;
            off += h;
        }
        for ((r, e), &idx) in layout.embeddings.iter().zip(&arch.embeddings).zip(&ex.categoricals) {
            let start = r.start + idx * e.dim;
            for k in 0..e.dim {
                grads[start + k] += d_concat[off + k];
            }
            off += e.dim;
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RecordId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(bidirectional: bool, extras: bool) -> Architecture {
        Architecture {
            main: BranchSpec {
                input_size: 2,
                hidden_size: 2,
                bidirectional,
            },
            funding: extras.then_some(BranchSpec {
                input_size: 4,
                hidden_size: 2,
                bidirectional,
            }),
            embeddings: if extras {
                vec![EmbeddingSpec::for_vocabulary(3), EmbeddingSpec::for_vocabulary(1)]
            } else {
                vec![]
            },
            use_mass: extras,
        }
    }

    fn examples(rng: &mut ChaCha8Rng, n: usize, extras: bool) -> Vec<WindowedExample> {
        (0..n)
            .map(|i| WindowedExample {
                record: RecordId(i),
                seq_main: (0..3).map(|_| vec![rng.random(), rng.random()]).collect(),
                seq_funding: if extras {
                    (0..2).map(|_| (0..4).map(|_| rng.random()).collect()).collect()
                } else {
                    vec![]
                },
                categoricals: if extras { vec![1 + i % 3, i % 2] } else { vec![] },
                mass: rng.random(),
                target: rng.random_range(-2.0..2.0),
            })
            .collect()
    }

    fn loss_at(p: &ModelParams, s: &NetSettings, batch: &[WindowedExample]) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model_forward(p, s, batch, Mode::Train(&mut rng)).unwrap();
        out.outputs
            .iter()
            .zip(batch)
            .map(|(o, e)| (o - e.target).powi(2))
            .sum::<f64>()
            / batch.len() as f64
    }

    fn check_gradients(a: Architecture, s: NetSettings, batch_size: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extras = a.funding.is_some();
        let p = ModelParams::init(a, &mut rng);
        let batch = examples(&mut rng, batch_size, extras);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let pass = model_forward(&p, &s, &batch, Mode::Train(&mut r)).unwrap();
        let (loss, grads) = model_backward(&p, &s, &batch, pass.cache.as_ref().unwrap()).unwrap();
        assert!((loss - loss_at(&p, &s, &batch)).abs() < 1e-14);
        let eps = 1e-5;
        for k in 0..p.len() {
            let mut a = p.clone();
            a.values[k] += eps;
            let mut b = p.clone();
            b.values[k] -= eps;
            let fd = (loss_at(&a, &s, &batch) - loss_at(&b, &s, &batch)) / (2.0 * eps);
            let denom = fd.abs().max(grads[k].abs());
            let rel = if denom < 1e-8 { 0.0 } else { (fd - grads[k]).abs() / denom };
            assert!(rel < 1e-4, "param {k}: analytic {} vs fd {fd}", grads[k]);
        }
    }

    #[test]
    fn gradients_time_only() {
        let s = NetSettings::new(Activation::Tanh, Activation::Linear, 0.0, 0.0);
        check_gradients(arch(false, false), s, 2, 1);
    }

    #[test]
    fn gradients_bidirectional_all_inputs() {
        let s = NetSettings::new(Activation::Sigmoid, Activation::Tanh, 0.0, 0.0);
        check_gradients(arch(true, true), s, 3, 2);
    }

    #[test]
    fn layout_sizes() {
        let a = arch(true, true);
        assert_eq!(a.concat_width(), 2 + 2 + 2 + 1 + 1);
        let p = ModelParams::zeros(a.clone());
        let lstm = |i: usize| 4 * 2 * (i + 2) + 4 * 2;
        let expected = 2 * lstm(2) + 2 * 4 + 2 + 2 * lstm(4) + 2 * 4 + 2 + 4 * 2 + 2 + 3 * 8 + 1;
        assert_eq!(p.len(), expected);
        assert_eq!(EmbeddingSpec::for_vocabulary(5), EmbeddingSpec { rows: 6, dim: 3 });
        assert_eq!(EmbeddingSpec::for_vocabulary(0).dim, 1);
    }

    #[test]
    fn perfect_predictions_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = NetSettings::new(Activation::Tanh, Activation::Linear, 0.0, 0.0);
        let p = ModelParams::init(arch(false, true), &mut rng);
        let mut batch = examples(&mut rng, 4, true);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let pass = model_forward(&p, &s, &batch, Mode::Train(&mut r)).unwrap();
        for (e, o) in batch.iter_mut().zip(&pass.outputs) {
            e.target = *o;
        }
        let (loss, g) = model_backward(&p, &s, &batch, pass.cache.as_ref().unwrap()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_bias_gradient_is_mean_error() {
        // With a linear output the bias gradient reduces to 2 * mean(prediction - target).
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = NetSettings::new(Activation::Tanh, Activation::Linear, 0.0, 0.0);
        let a = arch(false, false);
        let layout = a.layout();
        let p = ModelParams::init(a, &mut rng);
        let batch = examples(&mut rng, 5, false);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let pass = model_forward(&p, &s, &batch, Mode::Train(&mut r)).unwrap();
        let (_, g) = model_backward(&p, &s, &batch, pass.cache.as_ref().unwrap()).unwrap();
        let expected = pass.outputs.iter().zip(&batch).map(|(o, e)| 2.0 * (o - e.target)).sum::<f64>() / 5.0;
        assert!((g[layout.out_b.start] - expected).abs() < 1e-12);
    }

    #[test]
    fn vocabulary_overflow_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = NetSettings::new(Activation::Tanh, Activation::Linear, 0.0, 0.0);
        let p = ModelParams::init(arch(false, true), &mut rng);
        let mut batch = examples(&mut rng, 2, true);
        batch[1].categoricals[0] = 4;
        let err = model_forward(&p, &s, &batch, Mode::Eval).unwrap_err();
        assert_eq!(err, NetError::VocabularyOverflow { index: 4, rows: 4 });
    }

    #[test]
    fn eval_mode_is_deterministic_and_uses_running_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = NetSettings::new(Activation::Tanh, Activation::Linear, 0.5, 0.5);
        let p = ModelParams::init(arch(true, true), &mut rng);
        let batch = examples(&mut rng, 3, true);
        let a = model_forward(&p, &s, &batch, Mode::Eval).unwrap();
        let b = model_forward(&p, &s, &batch[..1], Mode::Eval).unwrap();
        assert!(a.cache.is_none());
        assert_eq!(a.outputs[0], b.outputs[0]);
    }

    #[test]
    fn rates_of_one_are_clamped() {
        let s = NetSettings::new(Activation::Tanh, Activation::Linear, 1.0, 1.0);
        assert_eq!(s.dropout, 0.99);
        assert_eq!(s.recurrent_dropout, 0.99);
    }
}
