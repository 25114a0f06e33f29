//! LSTM cell, unidirectional and bidirectional layers, and backpropagation through time.
//!
//! Gate weights are stored as four stacked blocks (forget, input, candidate, output), each
//! `hidden x (input + hidden)` row-major over the concatenation `[x_t, h_{t-1}]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, NetError, Result};

pub const GATES: usize = 4;
const FORGET: usize = 0;
const INPUT: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// Borrowed gate parameters.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub input_size: usize,
    pub hidden_size: usize,
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> LstmWeights<'a> {
    pub fn new(input_size: usize, hidden_size: usize, weights: &'a [f64], bias: &'a [f64]) -> Result<Self> {
        let cols = input_size + hidden_size;
        if weights.len() != GATES * hidden_size * cols || bias.len() != GATES * hidden_size {
            return Err(NetError::DimensionMismatch(format!(
                "lstm weights {} / bias {} for input {input_size}, hidden {hidden_size}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            input_size,
            hidden_size,
            weights,
            bias,
        })
    }

    fn cols(&self) -> usize {
        self.input_size + self.hidden_size
    }

    fn pre_activation(&self, gate: usize, unit: usize, x: &[f64], h: &[f64]) -> f64 {
        let row = gate * self.hidden_size + unit;
        let w = &self.weights[row * self.cols()..(row + 1) * self.cols()];
        let (wx, wh) = w.split_at(self.input_size);
        let mut acc = self.bias[row];
        for (a, b) in wx.iter().zip(x) {
            acc += a * b;
        }
        for (a, b) in wh.iter().zip(h) {
            acc += a * b;
        }
        acc
    }
}

/// Owned gate parameters of one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            weights: vec![0.0; GATES * hidden_size * (input_size + hidden_size)],
            bias: vec![0.0; GATES * hidden_size],
        }
    }

    pub fn random<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        p.weights.iter_mut().for_each(|w| *w = rng.random_range(-scale..scale));
        p.bias.iter_mut().for_each(|b| *b = rng.random_range(-scale..scale));
        p
    }

    pub fn view(&self) -> LstmWeights<'_> {
        LstmWeights {
            input_size: self.input_size,
            hidden_size: self.hidden_size,
            weights: &self.weights,
            bias: &self.bias,
        }
    }
}

/// Cell and hidden state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            cell: vec![0.0; hidden_size],
            hidden: vec![0.0; hidden_size],
        }
    }
}

/// One step's gate activations and resulting state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub cell: Vec<f64>,
    /// `activation(cell)`.
    pub cell_activation: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmStep {
    pub fn state(&self) -> LstmState {
        LstmState {
            cell: self.cell.clone(),
            hidden: self.hidden.clone(),
        }
    }
}

/// `f = σ(W_f[x,h]+b_f)`, `i = σ(..)`, `c̄ = tanh(..)`, `C = f*C_prev + i*c̄`,
/// `o = σ(..)`, `h = o * activation(C)`.
pub fn lstm_cell_forward(
    x: &[f64],
    prev: &LstmState,
    params: &LstmWeights<'_>,
    activation: Activation,
) -> Result<LstmStep> {
    let hsz = params.hidden_size;
    if x.len() != params.input_size || prev.hidden.len() != hsz || prev.cell.len() != hsz {
        return Err(NetError::DimensionMismatch(format!(
            "lstm step: input {} (expected {}), hidden {} / cell {} (expected {hsz})",
            x.len(),
            params.input_size,
            prev.hidden.len(),
            prev.cell.len()
        )));
    }
    let gate = |g: usize, f: fn(f64) -> f64| -> Vec<f64> {
        (0..hsz)
            .map(|j| f(params.pre_activation(g, j, x, &prev.hidden)))
            .collect()
    };
    let forget = gate(FORGET, sigmoid);
    let input = gate(INPUT, sigmoid);
    let candidate = gate(CANDIDATE, tanh);
    let output = gate(OUTPUT, sigmoid);
    let cell: Vec<f64> = (0..hsz)
        .map(|j| forget[j] * prev.cell[j] + input[j] * candidate[j])
        .collect();
    let cell_activation: Vec<f64> = cell.iter().map(|&c| activation.apply(c)).collect();
    let hidden = (0..hsz).map(|j| output[j] * cell_activation[j]).collect();
    Ok(LstmStep {
        forget,
        input,
        candidate,
        output,
        cell,
        cell_activation,
        hidden,
    })
}

/// Inverted-dropout masks, fixed for a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub input: Vec<f64>,
    pub recurrent: Vec<f64>,
}

impl DropoutMasks {
    pub fn ones(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input: vec![1.0; input_size],
            recurrent: vec![1.0; hidden_size],
        }
    }

    /// Each unit is kept with probability `1 - rate` and scaled by `1 / (1 - rate)`.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        input_size: usize,
        hidden_size: usize,
        rate: f64,
        recurrent_rate: f64,
    ) -> Self {
        fn draw<R: Rng + ?Sized>(rng: &mut R, n: usize, rate: f64) -> Vec<f64> {
            if rate <= 0.0 {
                return vec![1.0; n];
            }
            let keep = 1.0 - rate;
            (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        }
        Self {
            input: draw(rng, input_size, rate),
            recurrent: draw(rng, hidden_size, recurrent_rate),
        }
    }
}

/// Per-step values retained for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    masked_inputs: Vec<Vec<f64>>,
    masked_prev_hidden: Vec<Vec<f64>>,
    prev_cell: Vec<Vec<f64>>,
    steps: Vec<LstmStep>,
    masks: DropoutMasks,
}

impl LayerCache {
    pub fn steps(&self) -> &[LstmStep] {
        &self.steps
    }
}

#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub hidden: Vec<f64>,
    pub cache: Option<LayerCache>,
}

/// Runs a sequence from a zero state and returns the final hidden state.
pub fn lstm_layer_forward(
    sequence: &[Vec<f64>],
    params: &LstmWeights<'_>,
    activation: Activation,
    masks: Option<&DropoutMasks>,
    keep_cache: bool,
) -> Result<LayerOutput> {
    if sequence.is_empty() {
        return Err(NetError::DimensionMismatch("empty sequence".into()));
    }
    let ones;
    let masks = match masks {
        Some(m) => m,
        None => {
            ones = DropoutMasks::ones(params.input_size, params.hidden_size);
            &ones
        }
    };
    let mut state = LstmState::zeros(params.hidden_size);
    let mut cache = keep_cache.then(|| LayerCache {
        masked_inputs: Vec::with_capacity(sequence.len()),
        masked_prev_hidden: Vec::with_capacity(sequence.len()),
        prev_cell: Vec::with_capacity(sequence.len()),
        steps: Vec::with_capacity(sequence.len()),
        masks: masks.clone(),
    });
    for x in sequence {
        if x.len() != params.input_size {
            return Err(NetError::DimensionMismatch(format!(
                "sequence step has {} features, expected {}",
                x.len(),
                params.input_size
            )));
        }
        let xm: Vec<f64> = x.iter().zip(&masks.input).map(|(a, m)| a * m).collect();
        let hm: Vec<f64> = state
            .hidden
            .iter()
            .zip(&masks.recurrent)
            .map(|(a, m)| a * m)
            .collect();
        let masked_prev = LstmState {
            cell: state.cell.clone(),
            hidden: hm,
        };
        let step = lstm_cell_forward(&xm, &masked_prev, params, activation)?;
        state = step.state();
        if let Some(c) = cache.as_mut() {
            c.masked_inputs.push(xm);
            c.masked_prev_hidden.push(masked_prev.hidden);
            c.prev_cell.push(masked_prev.cell);
            c.steps.push(step);
        }
    }
    Ok(LayerOutput {
        hidden: state.hidden,
        cache,
    })
}

/// Accumulates parameter gradients given `d_final` = dL/dh_T.
pub fn lstm_layer_backward(
    params: &LstmWeights<'_>,
    cache: &LayerCache,
    activation: Activation,
    d_final: &[f64],
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) {
    let hsz = params.hidden_size;
    let isz = params.input_size;
    let cols = params.cols();
    let mut dh = d_final.to_vec();
    let mut dc_next = vec![0.0; hsz];
    let mut dpre = vec![0.0; GATES * hsz];
    for t in (0..cache.steps.len()).rev() {
        let s = &cache.steps[t];
        let xm = &cache.masked_inputs[t];
        let hm = &cache.masked_prev_hidden[t];
        let c_prev = &cache.prev_cell[t];
        for j in 0..hsz {
            let dc = dc_next[j]
                + dh[j] * s.output[j] * activation.derivative(s.cell[j], s.cell_activation[j]);
            let d_out = dh[j] * s.cell_activation[j];
            dpre[OUTPUT * hsz + j] = d_out * s.output[j] * (1.0 - s.output[j]);
            dpre[FORGET * hsz + j] = dc * c_prev[j] * s.forget[j] * (1.0 - s.forget[j]);
            dpre[INPUT * hsz + j] = dc * s.candidate[j] * s.input[j] * (1.0 - s.input[j]);
            dpre[CANDIDATE * hsz + j] = dc * s.input[j] * (1.0 - s.candidate[j] * s.candidate[j]);
            dc_next[j] = dc * s.forget[j];
        }
        let mut dh_prev_masked = vec![0.0; hsz];
        for (row, &g) in dpre.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad_bias[row] += g;
            let base = row * cols;
            let w = &params.weights[base..base + cols];
            let gw = &mut grad_weights[base..base + cols];
            for k in 0..isz {
                gw[k] += g * xm[k];
            }
            for k in 0..hsz {
                gw[isz + k] += g * hm[k];
                dh_prev_masked[k] += g * w[isz + k];
            }
        }
        for k in 0..hsz {
            dh[k] = dh_prev_masked[k] * cache.masks.recurrent[k];
        }
    }
}

/// Forward output `[h_fwd_T, h_bwd_T]` where the backward direction reads the reversed sequence.
pub fn bilstm_forward(
    sequence: &[Vec<f64>],
    forward: &LstmWeights<'_>,
    backward: &LstmWeights<'_>,
    activation: Activation,
    masks: Option<(&DropoutMasks, &DropoutMasks)>,
    keep_cache: bool,
) -> Result<(Vec<f64>, Option<(LayerCache, LayerCache)>)> {
    let reversed: Vec<Vec<f64>> = sequence.iter().rev().cloned().collect();
    let f = lstm_layer_forward(sequence, forward, activation, masks.map(|m| m.0), keep_cache)?;
    let b = lstm_layer_forward(&reversed, backward, activation, masks.map(|m| m.1), keep_cache)?;
    let mut out = f.hidden;
    out.extend(b.hidden);
    let caches = match (f.cache, b.cache) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    Ok((out, caches))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn activation_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(tanh(0.0), 0.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -50.0f64..50.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn gates_stay_in_range(
            seed in any::<u64>(),
            scale in 0.1f64..20.0,
            xs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..6),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = LstmParams::random(3, 4, scale, &mut rng);
            let out = lstm_layer_forward(&xs, &p.view(), Activation::Tanh, None, true).unwrap();
            for s in out.cache.unwrap().steps() {
                for j in 0..4 {
                    prop_assert!(s.forget[j] >= 0.0 && s.forget[j] <= 1.0);
                    prop_assert!(s.input[j] >= 0.0 && s.input[j] <= 1.0);
                    prop_assert!(s.output[j] >= 0.0 && s.output[j] <= 1.0);
                    prop_assert!(s.candidate[j] >= -1.0 && s.candidate[j] <= 1.0);
                    prop_assert!(s.hidden[j].abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn zero_weights_fixed_point() {
        let p = LstmParams::zeros(2, 3);
        let step = lstm_cell_forward(&[0.7, -3.0], &LstmState::zeros(3), &p.view(), Activation::Tanh).unwrap();
        assert_eq!(step.candidate, vec![0.0; 3]);
        assert_eq!(step.cell, vec![0.0; 3]);
        assert_eq!(step.hidden, vec![0.0; 3]);

        let prev = LstmState {
            cell: vec![2.0, -4.0, 1.0],
            hidden: vec![0.0; 3],
        };
        let step = lstm_cell_forward(&[5.0, 5.0], &prev, &p.view(), Activation::Tanh).unwrap();
        assert_eq!(step.cell, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let p = LstmParams::zeros(2, 3);
        let r = lstm_cell_forward(&[1.0], &LstmState::zeros(3), &p.view(), Activation::Tanh);
        assert!(matches!(r, Err(NetError::DimensionMismatch(_))));
        assert!(LstmWeights::new(2, 3, &p.weights[1..], &p.bias).is_err());
    }

    /// Scalar re-implementation with one gate matrix per call site.
    fn scalar_cell(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
        let hs = p.hidden_size;
        let cols = p.input_size + hs;
        let z: Vec<f64> = x.iter().chain(h.iter()).copied().collect();
        let pre = |g: usize, j: usize| {
            let row = g * hs + j;
            let mut s = p.bias[row];
            for k in 0..cols {
                s += p.weights[row * cols + k] * z[k];
            }
            s
        };
        let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut c_new = vec![0.0; hs];
        let mut h_new = vec![0.0; hs];
        for j in 0..hs {
            let f = logistic(pre(0, j));
            let i = logistic(pre(1, j));
            let cb = pre(2, j).tanh();
            let o = logistic(pre(3, j));
            c_new[j] = f * c[j] + i * cb;
            h_new[j] = o * c_new[j].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn cell_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = LstmParams::random(3, 2, 0.5, &mut rng);
        let prev = LstmState {
            cell: vec![0.3, -0.2],
            hidden: vec![-0.1, 0.4],
        };
        let x = [0.5, -1.0, 0.25];
        let step = lstm_cell_forward(&x, &prev, &p.view(), Activation::Tanh).unwrap();
        let (h, c) = scalar_cell(&x, &prev.hidden, &prev.cell, &p);
        for j in 0..2 {
            assert!((step.hidden[j] - h[j]).abs() < 1e-12);
            assert!((step.cell[j] - c[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn bilstm_compositional_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = LstmParams::random(2, 3, 0.7, &mut rng);
        let b = LstmParams::random(2, 3, 0.7, &mut rng);
        let seq: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let (out, _) = bilstm_forward(&seq, &a.view(), &b.view(), Activation::Tanh, None, false).unwrap();
        assert_eq!(out.len(), 6);
        let f = lstm_layer_forward(&seq, &a.view(), Activation::Tanh, None, false).unwrap().hidden;
        let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
        let r = lstm_layer_forward(&rev, &b.view(), Activation::Tanh, None, false).unwrap().hidden;
        for j in 0..3 {
            assert!((out[j] - f[j]).abs() < 1e-12);
            assert!((out[3 + j] - r[j]).abs() < 1e-12);
        }
        // Reversing the input with swapped directions swaps the halves.
        let (swapped, _) = bilstm_forward(&rev, &b.view(), &a.view(), Activation::Tanh, None, false).unwrap();
        assert_eq!(&swapped[..3], &out[3..]);
        assert_eq!(&swapped[3..], &out[..3]);

        let pal = vec![vec![0.1, 0.2], vec![0.5, -0.3], vec![0.1, 0.2]];
        let (o, _) = bilstm_forward(&pal, &a.view(), &a.view(), Activation::Tanh, None, false).unwrap();
        assert_eq!(&o[..3], &o[3..]);
        let single = vec![vec![0.4, 0.9]];
        let (o, _) = bilstm_forward(&single, &a.view(), &a.view(), Activation::Tanh, None, false).unwrap();
        assert_eq!(&o[..3], &o[3..]);
    }

    #[test]
    fn inverted_dropout_scales_kept_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DropoutMasks::sample(&mut rng, 2000, 10, 0.25, 0.0);
        assert!(m.input.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
        let mean = m.input.iter().sum::<f64>() / 2000.0;
        assert!((mean - 1.0).abs() < 0.05);
        assert_eq!(m.recurrent, vec![1.0; 10]);
    }

    #[test]
    fn layer_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::random(2, 3, 0.6, &mut rng);
        let seq: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let dfinal = [0.3, -0.7, 1.1];
        let loss = |p: &LstmParams| {
            let h = lstm_layer_forward(&seq, &p.view(), Activation::Tanh, None, false).unwrap().hidden;
            h.iter().zip(dfinal).map(|(a, b)| a * b).sum::<f64>()
        };
        let out = lstm_layer_forward(&seq, &p.view(), Activation::Tanh, None, true).unwrap();
        let mut gw = vec![0.0; p.weights.len()];
        let mut gb = vec![0.0; p.bias.len()];
        lstm_layer_backward(&p.view(), out.cache.as_ref().unwrap(), Activation::Tanh, &dfinal, &mut gw, &mut gb);
        let eps = 1e-6;
        for k in 0..p.weights.len() {
            let mut a = p.clone();
            a.weights[k] += eps;
            let mut b = p.clone();
            b.weights[k] -= eps;
            let fd = (loss(&a) - loss(&b)) / (2.0 * eps);
            assert!((fd - gw[k]).abs() < 1e-7, "w[{k}]: fd {fd} vs {}", gw[k]);
        }
        for k in 0..p.bias.len() {
            let mut a = p.clone();
            a.bias[k] += eps;
            let mut b = p.clone();
            b.bias[k] -= eps;
            let fd = (loss(&a) - loss(&b)) / (2.0 * eps);
            assert!((fd - gb[k]).abs() < 1e-7);
        }
    }
}
