//! First-order update rules with per-parameter state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::NetError;

const EPSILON: f64 = 1e-7;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const RMSPROP_RHO: f64 = 0.9;
const ADADELTA_RHO: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adadelta,
    RmsProp,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Adam, OptimizerKind::Adadelta, OptimizerKind::RmsProp];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::RmsProp => "rmsprop",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| NetError::InvalidConfig(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Self {
        Self {
            kind,
            learning_rate,
            step: 0,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for k in 0..params.len() {
                    let g = grads[k];
                    self.first[k] = ADAM_BETA1 * self.first[k] + (1.0 - ADAM_BETA1) * g;
                    self.second[k] = ADAM_BETA2 * self.second[k] + (1.0 - ADAM_BETA2) * g * g;
                    let m = self.first[k] / c1;
                    let v = self.second[k] / c2;
                    params[k] -= lr * m / (v.sqrt() + EPSILON);
                }
            }
            OptimizerKind::RmsProp => {
                for k in 0..params.len() {
                    let g = grads[k];
                    self.second[k] = RMSPROP_RHO * self.second[k] + (1.0 - RMSPROP_RHO) * g * g;
                    params[k] -= lr * g / (self.second[k].sqrt() + EPSILON);
                }
            }
            OptimizerKind::Adadelta => {
                // `second` accumulates squared gradients, `first` squared updates.
                for k in 0..params.len() {
                    let g = grads[k];
                    self.second[k] = ADADELTA_RHO * self.second[k] + (1.0 - ADADELTA_RHO) * g * g;
                    let update = g * (self.first[k] + EPSILON).sqrt() / (self.second[k] + EPSILON).sqrt();
                    self.first[k] = ADADELTA_RHO * self.first[k] + (1.0 - ADADELTA_RHO) * update * update;
                    params[k] -= lr * update;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        for kind in OptimizerKind::ALL {
            let mut opt = Optimizer::new(kind, 0.1, 3);
            let mut p = vec![1.0, -2.0, 0.5];
            for _ in 0..5 {
                opt.step(&mut p, &[0.0; 3]);
            }
            assert_eq!(p, vec![1.0, -2.0, 0.5], "{kind}");
        }
    }

    #[test]
    fn rmsprop_descends_on_square() {
        // Hand-rolled scalar recurrence as the reference trajectory.
        let (mut w, mut acc) = (1.0f64, 0.0f64);
        let mut reference = Vec::new();
        for _ in 0..10 {
            let g = 2.0 * w;
            acc = 0.9 * acc + 0.1 * g * g;
            w -= 0.1 * g / (acc.sqrt() + 1e-7);
            reference.push(w);
        }
        let mut opt = Optimizer::new(OptimizerKind::RmsProp, 0.1, 1);
        let mut p = [1.0];
        let mut prev = 1.0f64;
        for r in reference {
            let g = [2.0 * p[0]];
            opt.step(&mut p, &g);
            assert!((p[0] - r).abs() < 1e-15);
            assert!(p[0].abs() < prev.abs());
            prev = p[0];
        }
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        for g in [3.7, -0.02, 1e3] {
            let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, 1);
            let mut p = [0.0];
            opt.step(&mut p, &[g]);
            assert!((p[0] + 0.01 * f64::signum(g)).abs() < 1e-6);
        }
    }

    #[test]
    fn single_linear_neuron_fits() {
        // y = w x with data from y = 2x; the update uses dL/dw = mean 2 (w x - y) x.
        let xs = [0.5, 1.0, 1.5, 2.0];
        for kind in OptimizerKind::ALL {
            let lr = if kind == OptimizerKind::Adadelta { 1.0 } else { 0.05 };
            let mut opt = Optimizer::new(kind, lr, 1);
            let mut w = [0.0];
            for _ in 0..2000 {
                let g = xs.iter().map(|x| 2.0 * (w[0] * x - 2.0 * x) * x).sum::<f64>() / 4.0;
                opt.step(&mut w, &[g]);
                assert!(w[0].is_finite());
            }
            assert!((w[0] - 2.0).abs() < 0.05, "{kind}: {}", w[0]);
        }
    }

    #[test]
    fn names_round_trip() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
        }
    }
}
