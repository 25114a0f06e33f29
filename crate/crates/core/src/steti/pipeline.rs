//! Two-stage training: a failure-date model is selected over a configuration grid and its
//! predictions become the targets of a launch-date model selected over the same grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rmse, Result, StetiError};
use crate::dataset::{FundingTable, MissionRecord};
use crate::features::{
    build_stage_data, log2_target, stage_sequence, Phase, RecordId, StageData, StageEncoder, StageKind,
    StageTargets, WindowedExample,
};
use crate::hypertune::{append_ledger, read_ledger, run_study, HyperParams, SearchSpace, StudyConfig, StudyOutcome};
use crate::neuralnet::{
    predict, train, Architecture, BatchSize, BranchSpec, EmbeddingSpec, EpochRecord, ModelParams, TrainConfig,
};
use crate::seeds::{derive, Stream};

/// Whether a grid cell uses searched or untuned hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Tuned,
    Default,
}

impl Setting {
    pub fn label(self) -> &'static str {
        match self {
            Setting::Tuned => "tuned",
            Setting::Default => "default",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainBudget {
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainBudget {
    fn default() -> Self {
        Self {
            max_epochs: 5000,
            patience: 1000,
        }
    }
}

/// Hyperparameters for each stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageHyper {
    pub failure: HyperParams,
    pub launch: HyperParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tuning {
    /// Only the default setting is trained.
    Off,
    /// Tuned cells use these values.
    Supplied(StageHyper),
    /// A study per stage; trial loss is the test MSE at the first split ratio with full batches.
    Search(StudyConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub phase: Phase,
    pub split_ratios: Vec<f64>,
    pub batch_sizes: Vec<BatchSize>,
    pub default_params: HyperParams,
    pub tuning: Tuning,
    pub budget: TrainBudget,
    /// Recurrent width; `None` uses the window length of each branch.
    pub hidden_size: Option<usize>,
    pub seed: u64,
    /// Directory of per-stage trial ledgers; existing trials are resumed and new ones appended.
    pub tuning_ledgers: Option<PathBuf>,
}

impl PhaseConfig {
    pub fn new(phase: Phase, seed: u64) -> Self {
        Self {
            phase,
            split_ratios: vec![0.75, 0.85],
            batch_sizes: vec![
                BatchSize::Fixed(32),
                BatchSize::Fixed(64),
                BatchSize::Fixed(96),
                BatchSize::Full,
            ],
            default_params: HyperParams::defaults(phase),
            tuning: Tuning::Off,
            budget: TrainBudget::default(),
            hidden_size: None,
            seed,
            tuning_ledgers: None,
        }
    }

    fn check_params(&self, hp: &HyperParams) -> Result<()> {
        hp.validate()?;
        if hp.window_size_funding.is_some() != self.phase.uses_extras() {
            return Err(StetiError::Config(format!(
                "window_size_funding must be {} for the {} phase",
                if self.phase.uses_extras() { "set" } else { "absent" },
                phase_label(self.phase)
            )));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.split_ratios.is_empty() || self.batch_sizes.is_empty() {
            return Err(StetiError::Config("grid needs at least one split ratio and batch size".into()));
        }
        if self.budget.patience > self.budget.max_epochs {
            return Err(StetiError::Config("patience exceeds max_epochs".into()));
        }
        self.check_params(&self.default_params)?;
        if let Tuning::Supplied(h) = &self.tuning {
            self.check_params(&h.failure)?;
            self.check_params(&h.launch)?;
        }
        Ok(())
    }
}

pub fn phase_label(phase: Phase) -> &'static str {
    match phase {
        Phase::TimeOnly => "time_only",
        Phase::TimePlus => "time_plus",
    }
}

/// A predictor plus everything needed to encode new inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hyperparams: HyperParams,
    pub encoder: StageEncoder,
    pub params: ModelParams,
}

impl TrainedModel {
    /// Predicted log2 lifetimes.
    pub fn predict(&self, examples: &[WindowedExample]) -> Result<Vec<f64>> {
        Ok(predict(&self.params, &self.hyperparams.settings(), examples)?)
    }

    /// Encodes each record's window within `records`; targets are the observed log2
    /// lifetimes where known, else 0.
    pub fn encode_records(
        &self,
        records: &[MissionRecord],
        funding: Option<&FundingTable>,
        ids: &[RecordId],
    ) -> Result<Vec<WindowedExample>> {
        let sequence = stage_sequence(records, self.encoder.stage);
        let position: BTreeMap<RecordId, usize> = sequence.iter().enumerate().map(|(p, id)| (*id, p)).collect();
        ids.iter()
            .map(|id| {
                let pos = *position.get(id).ok_or_else(|| {
                    StetiError::Config(format!("record {} is not part of the {:?} sequence", id.0, self.encoder.stage))
                })?;
                let target = match records[id.0].lifetime {
                    Some(l) => log2_target(l)?,
                    None => 0.0,
                };
                Ok(self.encoder.example_at(records, &sequence, pos, funding, target)?)
            })
            .collect()
    }
}

pub fn architecture_for(encoder: &StageEncoder, hp: &HyperParams, hidden_size: Option<usize>) -> Architecture {
    let extras = encoder.phase.uses_extras();
    Architecture {
        main: BranchSpec {
            input_size: encoder.stage.main_features(),
            hidden_size: hidden_size.unwrap_or(hp.window_size),
            bidirectional: hp.bidirectional,
        },
        funding: extras.then(|| BranchSpec {
            input_size: 4,
            hidden_size: hidden_size.unwrap_or(encoder.funding_window),
            bidirectional: hp.bidirectional,
        }),
        embeddings: encoder
            .vocabularies
            .iter()
            .map(|(_, v)| EmbeddingSpec::for_vocabulary(v.len()))
            .collect(),
        use_mass: extras,
    }
}

/// One trained grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub setting: Setting,
    pub split_ratio: f64,
    pub batch_size: BatchSize,
    pub model: TrainedModel,
    pub data: StageData,
    /// RMSE on the test partition against the stage's targets, log2 years.
    pub test_rmse: f64,
    /// RMSE on the test partition against observed log2 lifetimes.
    pub observed_rmse: Option<f64>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub final_val_mse: f64,
    pub history: Vec<EpochRecord>,
}

/// Trains and evaluates one configuration.
#[allow(clippy::too_many_arguments)]
pub fn train_cell(
    records: &[MissionRecord],
    funding: Option<&FundingTable>,
    stage: StageKind,
    phase: Phase,
    setting: Setting,
    hp: &HyperParams,
    split_ratio: f64,
    batch_size: BatchSize,
    targets: &StageTargets,
    budget: TrainBudget,
    hidden_size: Option<usize>,
    seed: u64,
) -> Result<CellOutcome> {
    let data = build_stage_data(records, funding, stage, phase, hp.window_size, hp.funding_window(), split_ratio, targets)?;
    let arch = architecture_for(&data.encoder, hp, hidden_size);
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive(seed, Stream::Init, 0));
    let init = ModelParams::init(arch, &mut init_rng);
    let config = TrainConfig {
        batch_size,
        max_epochs: budget.max_epochs,
        patience: budget.patience,
        seed: derive(seed, Stream::Dropout, 0),
    };
    let settings = hp.settings();
    let outcome = train(&settings, &data.train, &data.val, init, hp.optimizer, hp.learning_rate, &config)?;
    let model = TrainedModel {
        hyperparams: *hp,
        encoder: data.encoder.clone(),
        params: outcome.best,
    };
    let preds = model.predict(&data.test)?;
    let targets_test: Vec<f64> = data.test.iter().map(|e| e.target).collect();
    let test_rmse = rmse(&targets_test, &preds)?;
    let observed: Option<Vec<f64>> = data
        .test
        .iter()
        .map(|e| records[e.record.0].lifetime.map(|l| l.log2()))
        .collect();
    let observed_rmse = observed.map(|o| rmse(&o, &preds)).transpose()?;
    let final_val_mse = outcome.history.last().map_or(f64::NAN, |h| h.val_loss);
    Ok(CellOutcome {
        setting,
        split_ratio,
        batch_size,
        model,
        data,
        test_rmse,
        observed_rmse,
        best_epoch: outcome.best_epoch,
        best_val_mse: outcome.best_val_loss,
        final_val_mse,
        history: outcome.history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub stage: StageKind,
    /// Sweep order: setting, then split ratio, then batch size.
    pub cells: Vec<CellOutcome>,
    pub best: usize,
    /// Best model's prediction for every record owning an example in its cell.
    pub predictions: BTreeMap<RecordId, f64>,
    pub tuning: Option<StudyOutcome>,
}

impl StageResult {
    pub fn best_cell(&self) -> &CellOutcome {
        &self.cells[self.best]
    }
}

fn stage_tag(stage: StageKind) -> u64 {
    match stage {
        StageKind::FailureTime => 1,
        StageKind::LaunchTime => 2,
    }
}

/// Trial ledger of one stage inside a ledger directory.
pub fn ledger_path(dir: &Path, stage: StageKind) -> PathBuf {
    dir.join(match stage {
        StageKind::FailureTime => "stage1_trials.csv",
        StageKind::LaunchTime => "stage2_trials.csv",
    })
}

fn run_stage(
    cfg: &PhaseConfig,
    records: &[MissionRecord],
    funding: Option<&FundingTable>,
    stage: StageKind,
    targets: &StageTargets,
) -> Result<StageResult> {
    cfg.validate()?;
    let tag = stage_tag(stage);
    let (tuned, tuning) = match &cfg.tuning {
        Tuning::Off => (None, None),
        Tuning::Supplied(h) => (
            Some(match stage {
                StageKind::FailureTime => h.failure,
                StageKind::LaunchTime => h.launch,
            }),
            None,
        ),
        Tuning::Search(study) => {
            let study = StudyConfig {
                seed: derive(study.seed, Stream::Tuning, tag),
                ..study.clone()
            };
            let ratio = cfg.split_ratios[0];
            let objective = |hp: &HyperParams, seed: u64| {
                train_cell(
                    records,
                    funding,
                    stage,
                    cfg.phase,
                    Setting::Tuned,
                    hp,
                    ratio,
                    BatchSize::Full,
                    targets,
                    cfg.budget,
                    cfg.hidden_size,
                    seed,
                )
                .map(|c| c.test_rmse * c.test_rmse)
                .map_err(|e| e.to_string())
            };
            let ledger = cfg.tuning_ledgers.as_deref().map(|dir| ledger_path(dir, stage));
            let previous = match &ledger {
                Some(path) if path.exists() => read_ledger(std::fs::File::open(path)?)?,
                _ => Vec::new(),
            };
            let outcome = run_study(objective, &SearchSpace::full(cfg.phase), &study, previous, |t| match &ledger {
                Some(path) => append_ledger(path, t),
                None => Ok(()),
            })?;
            (Some(outcome.best.params), Some(outcome))
        }
    };
    let mut specs = Vec::new();
    let settings: Vec<(Setting, HyperParams)> = tuned
        .map(|t| (Setting::Tuned, t))
        .into_iter()
        .chain(std::iter::once((Setting::Default, cfg.default_params)))
        .collect();
    for (setting, hp) in &settings {
        for &ratio in &cfg.split_ratios {
            for &batch in &cfg.batch_sizes {
                specs.push((*setting, *hp, ratio, batch));
            }
        }
    }
    let cells = specs
        .par_iter()
        .enumerate()
        .map(|(i, (setting, hp, ratio, batch))| {
            let seed = derive(cfg.seed, Stream::Init, tag * 10_000 + i as u64);
            train_cell(
                records,
                funding,
                stage,
                cfg.phase,
                *setting,
                hp,
                *ratio,
                *batch,
                targets,
                cfg.budget,
                cfg.hidden_size,
                seed,
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.test_rmse < cells[best].test_rmse {
            best = i;
        }
    }
    let chosen = &cells[best];
    let examples: Vec<WindowedExample> = chosen.data.all_examples().cloned().collect();
    let preds = chosen.model.predict(&examples)?;
    let predictions = examples.iter().map(|e| e.record).zip(preds).collect();
    Ok(StageResult {
        stage,
        cells,
        best,
        predictions,
        tuning,
    })
}

/// Failure-date stage over failed records in failure order, observed log2 lifetimes as targets.
pub fn stage1_train(cfg: &PhaseConfig, records: &[MissionRecord], funding: Option<&FundingTable>) -> Result<StageResult> {
    run_stage(cfg, records, funding, StageKind::FailureTime, &StageTargets::Observed)
}

/// Launch-date stage over all records in launch order; only records with a transferred
/// target own examples, the rest appear as lookback context.
pub fn stage2_train(
    cfg: &PhaseConfig,
    records: &[MissionRecord],
    funding: Option<&FundingTable>,
    transferred: &BTreeMap<RecordId, f64>,
) -> Result<StageResult> {
    run_stage(
        cfg,
        records,
        funding,
        StageKind::LaunchTime,
        &StageTargets::Transferred(transferred.clone()),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub phase: Phase,
    pub stage1: StageResult,
    pub stage2: StageResult,
}

impl PhaseOutcome {
    pub fn model(&self) -> &TrainedModel {
        &self.stage2.best_cell().model
    }
}

pub fn run_phase(cfg: &PhaseConfig, records: &[MissionRecord], funding: Option<&FundingTable>) -> Result<PhaseOutcome> {
    if cfg.phase.uses_extras() && funding.is_none() {
        return Err(StetiError::Config("the time_plus phase needs funding data".into()));
    }
    let stage1 = stage1_train(cfg, records, funding)?;
    let stage2 = stage2_train(cfg, records, funding, &stage1.predictions)?;
    Ok(PhaseOutcome {
        phase: cfg.phase,
        stage1,
        stage2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub labels: [String; 2],
    pub records: Vec<usize>,
    pub rmse: [f64; 2],
    pub winner: String,
}

/// RMSE of two launch-date models against observed log2 lifetimes of the same records;
/// the first model wins ties.
pub fn compare_models(
    models: [(&str, &TrainedModel); 2],
    records: &[MissionRecord],
    funding: Option<&FundingTable>,
    ids: &[RecordId],
) -> Result<Comparison> {
    let observed = ids
        .iter()
        .map(|id| {
            records[id.0]
                .lifetime
                .map(f64::log2)
                .ok_or_else(|| StetiError::Config(format!("record {} has no observed lifetime", id.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = [0.0; 2];
    for (k, (_, m)) in models.iter().enumerate() {
        let ex = m.encode_records(records, funding, ids)?;
        scores[k] = rmse(&observed, &m.predict(&ex)?)?;
    }
    Ok(Comparison {
        labels: [models[0].0.to_string(), models[1].0.to_string()],
        records: ids.iter().map(|i| i.0).collect(),
        rmse: scores,
        winner: if scores[1] < scores[0] { models[1].0 } else { models[0].0 }.to_string(),
    })
}
