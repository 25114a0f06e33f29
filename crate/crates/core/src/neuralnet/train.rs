//! Mini-batch training with early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{model_backward, model_forward, Mode, ModelParams, NetSettings};
use super::optim::{Optimizer, OptimizerKind};
use super::{NetError, Result};
use crate::features::WindowedExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BatchSize {
    Fixed(usize),
    Full,
}

impl BatchSize {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Full => n,
            BatchSize::Fixed(b) if b > n => {
                log::warn!("neuralnet: batch size {b} exceeds {n} training examples; using {n}");
                n
            }
            BatchSize::Fixed(b) => b.max(1),
        }
    }

    pub fn label(self) -> String {
        match self {
            BatchSize::Fixed(b) => b.to_string(),
            BatchSize::Full => "full".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: BatchSize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(NetError::InvalidConfig("max_epochs must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(NetError::InvalidConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation loss.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Parameters after the last completed epoch.
    pub last: ModelParams,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub fn mse_loss(predictions: &[f64], examples: &[WindowedExample]) -> f64 {
    predictions
        .iter()
        .zip(examples)
        .map(|(p, e)| (p - e.target).powi(2))
        .sum::<f64>()
        / examples.len() as f64
}

/// Inference-mode predictions.
pub fn predict(params: &ModelParams, settings: &NetSettings, examples: &[WindowedExample]) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    Ok(model_forward(params, settings, examples, Mode::Eval)?.outputs)
}

/// Trains until `patience` epochs pass without a strict validation improvement or
/// `max_epochs` is reached.
pub fn train(
    settings: &NetSettings,
    train_set: &[WindowedExample],
    val_set: &[WindowedExample],
    init: ModelParams,
    optimizer: OptimizerKind,
    learning_rate: f64,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(NetError::EmptySet("training"));
    }
    if val_set.is_empty() {
        return Err(NetError::EmptySet("validation"));
    }
    let batch = config.batch_size.resolve(train_set.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init;
    let mut opt = Optimizer::new(optimizer, learning_rate, params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stopped_early = false;
    let mut scratch = Vec::with_capacity(batch);

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(batch) {
            scratch.clear();
            scratch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let pass = model_forward(&params, settings, &scratch, Mode::Train(&mut rng))?;
            let cache = pass.cache.expect("training pass keeps its cache");
            let (loss, grads) = model_backward(&params, settings, &scratch, &cache)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(NetError::DivergedLoss {
                    epoch,
                    detail: format!("training batch loss {loss}"),
                });
            }
            train_loss += loss * chunk.len() as f64 / train_set.len() as f64;
            opt.step(&mut params.values, &grads);
            params.update_running_stats(&cache);
        }
        let val_loss = mse_loss(&predict(&params, settings, val_set)?, val_set);
        if !val_loss.is_finite() {
            return Err(NetError::DivergedLoss {
                epoch,
                detail: format!("validation loss {val_loss}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = params.clone();
        } else if epoch - best_epoch >= config.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_loss: best_val,
        last: params,
        history,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RecordId;
    use crate::neuralnet::{Activation, Architecture, BranchSpec};
    use rand::Rng;

    fn data(rng: &mut ChaCha8Rng, n: usize) -> Vec<WindowedExample> {
        (0..n)
            .map(|i| {
                let seq: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random::<f64>()]).collect();
                let target = seq.iter().map(|s| s[0]).sum::<f64>() - 1.0;
                WindowedExample {
                    record: RecordId(i),
                    seq_main: seq,
                    seq_funding: vec![],
                    categoricals: vec![],
                    mass: 0.0,
                    target,
                }
            })
            .collect()
    }

    fn arch() -> Architecture {
        Architecture {
            main: BranchSpec {
                input_size: 1,
                hidden_size: 4,
                bidirectional: false,
            },
            funding: None,
            embeddings: vec![],
            use_mass: false,
        }
    }

    fn settings() -> NetSettings {
        NetSettings::new(Activation::Tanh, Activation::Linear, 0.0, 0.0)
    }

    #[test]
    fn checkpoint_dominates_and_stops_within_patience() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tr = data(&mut rng, 16);
        let va = data(&mut rng, 6);
        let init = ModelParams::init(arch(), &mut rng);
        let cfg = TrainConfig {
            batch_size: BatchSize::Fixed(4),
            max_epochs: 400,
            patience: 10,
            seed: 3,
        };
        let out = train(&settings(), &tr, &va, init, OptimizerKind::Adam, 0.05, &cfg).unwrap();
        let best = mse_loss(&predict(&out.best, &settings(), &va).unwrap(), &va);
        let last = mse_loss(&predict(&out.last, &settings(), &va).unwrap(), &va);
        assert_eq!(best, out.best_val_loss);
        assert!(best <= last);
        assert!(out.history.len() - 1 - out.best_epoch <= cfg.patience);
        if out.stopped_early {
            assert_eq!(out.history.len() - 1 - out.best_epoch, cfg.patience);
        }
    }

    #[test]
    fn identical_seeds_are_bitwise_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let tr = data(&mut rng, 10);
            let va = data(&mut rng, 4);
            let init = ModelParams::init(arch(), &mut rng);
            let s = NetSettings::new(Activation::Tanh, Activation::Linear, 0.2, 0.2);
            let cfg = TrainConfig {
                batch_size: BatchSize::Fixed(3),
                max_epochs: 30,
                patience: 30,
                seed: 1,
            };
            train(&s, &tr, &va, init, OptimizerKind::RmsProp, 0.01, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.best.values, b.best.values);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn overfits_five_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tr = data(&mut rng, 5);
        let init = ModelParams::init(arch(), &mut rng);
        let cfg = TrainConfig {
            batch_size: BatchSize::Full,
            max_epochs: 5000,
            patience: 5000,
            seed: 0,
        };
        let out = train(&settings(), &tr, &tr, init, OptimizerKind::Adam, 1e-2, &cfg).unwrap();
        let mse = mse_loss(&predict(&out.best, &settings(), &tr).unwrap(), &tr);
        assert!(mse < 1e-3, "train mse {mse}");
    }

    #[test]
    fn diverging_run_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tr = data(&mut rng, 4);
        tr[0].target = f64::NAN;
        let init = ModelParams::init(arch(), &mut rng);
        let cfg = TrainConfig {
            batch_size: BatchSize::Full,
            max_epochs: 5,
            patience: 5,
            seed: 0,
        };
        let err = train(&settings(), &tr, &tr, init, OptimizerKind::Adam, 1e-3, &cfg).unwrap_err();
        assert!(matches!(err, NetError::DivergedLoss { epoch: 0, .. }));
    }

    #[test]
    fn config_checks() {
        let bad = TrainConfig {
            batch_size: BatchSize::Full,
            max_epochs: 5,
            patience: 6,
            seed: 0,
        };
        assert!(bad.validate().is_err());
        assert_eq!(BatchSize::Fixed(96).resolve(40), 40);
        assert_eq!(BatchSize::Full.resolve(40), 40);
    }
}
