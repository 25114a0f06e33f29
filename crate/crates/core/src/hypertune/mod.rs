//! Sequential hyperparameter search with a resumable trial ledger.
//!
//! Each proposal depends only on the root seed, the trial index and the completed history,
//! so a study resumed from its ledger proposes exactly what an uninterrupted run would.

mod tpe;

use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tpe::{prior_draw, propose, Domain, TpeConfig};

use crate::features::Phase;
use crate::neuralnet::{Activation, NetSettings, OptimizerKind};
use crate::seeds::{derive, Stream};

pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-6, 1e-2);
pub const WINDOW_RANGE: (usize, usize) = (1, 10);

#[derive(Debug, Error)]
pub enum HyperError {
    #[error("hypertune: every one of {0} trials failed")]
    AllTrialsFailed(usize),
    #[error("hypertune: {0}")]
    InvalidParams(String),
    #[error("hypertune: ledger row {row}: {reason}")]
    Ledger { row: usize, reason: String },
    #[error("hypertune: ledger: {0}")]
    Csv(#[from] csv::Error),
    #[error("hypertune: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HyperError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub dropout_rate: f64,
    pub recurrent_dropout_rate: f64,
    pub lstm_activation: Activation,
    pub output_activation: Activation,
    pub bidirectional: bool,
    pub window_size: usize,
    /// Present only when funding sequences are used.
    pub window_size_funding: Option<usize>,
}

impl HyperParams {
    /// Untuned settings.
    pub fn defaults(phase: Phase) -> Self {
        Self {
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            dropout_rate: 0.0,
            recurrent_dropout_rate: 0.0,
            lstm_activation: Activation::Tanh,
            output_activation: Activation::Linear,
            bidirectional: false,
            window_size: 5,
            window_size_funding: phase.uses_extras().then_some(5),
        }
    }

    pub fn settings(&self) -> NetSettings {
        NetSettings::new(
            self.lstm_activation,
            self.output_activation,
            self.dropout_rate,
            self.recurrent_dropout_rate,
        )
    }

    pub fn funding_window(&self) -> usize {
        self.window_size_funding.unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = LEARNING_RATE_RANGE;
        let mut problems = Vec::new();
        if !(self.learning_rate >= lo && self.learning_rate <= hi) {
            problems.push(format!("learning_rate {} outside [{lo}, {hi}]", self.learning_rate));
        }
        for (name, r) in [("dropout_rate", self.dropout_rate), ("recurrent_dropout_rate", self.recurrent_dropout_rate)] {
            if !(0.0..=1.0).contains(&r) {
                problems.push(format!("{name} {r} outside [0, 1]"));
            }
        }
        let windows = std::iter::once(("window_size", self.window_size))
            .chain(self.window_size_funding.map(|w| ("window_size_funding", w)));
        for (name, w) in windows {
            if !(WINDOW_RANGE.0..=WINDOW_RANGE.1).contains(&w) {
                problems.push(format!("{name} {w} outside {}..={}", WINDOW_RANGE.0, WINDOW_RANGE.1));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HyperError::InvalidParams(problems.join("; ")))
        }
    }
}

/// Domain of every tunable field; `Fixed` pins a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: Domain,
    pub optimizer: Domain,
    pub dropout_rate: Domain,
    pub recurrent_dropout_rate: Domain,
    pub lstm_activation: Domain,
    pub output_activation: Domain,
    pub bidirectional: Domain,
    pub window_size: Domain,
    pub window_size_funding: Option<Domain>,
}

fn index_of<T: PartialEq>(all: &[T], v: &T) -> f64 {
    all.iter().position(|x| x == v).expect("value from its own enumeration") as f64
}

impl SearchSpace {
    pub fn full(phase: Phase) -> Self {
        let window = Domain::Integer {
            low: WINDOW_RANGE.0 as i64,
            high: WINDOW_RANGE.1 as i64,
        };
        Self {
            learning_rate: Domain::LogUniform {
                low: LEARNING_RATE_RANGE.0,
                high: LEARNING_RATE_RANGE.1,
            },
            optimizer: Domain::Categorical(OptimizerKind::ALL.len()),
            dropout_rate: Domain::Uniform { low: 0.0, high: 1.0 },
            recurrent_dropout_rate: Domain::Uniform { low: 0.0, high: 1.0 },
            lstm_activation: Domain::Categorical(Activation::ALL.len()),
            output_activation: Domain::Categorical(Activation::ALL.len()),
            bidirectional: Domain::Categorical(2),
            window_size: window,
            window_size_funding: phase.uses_extras().then_some(window),
        }
    }

    /// Only the learning rate varies; every other field is pinned to `base`.
    pub fn learning_rate_only(base: &HyperParams) -> Self {
        let full = Self::full(if base.window_size_funding.is_some() {
            Phase::TimePlus
        } else {
            Phase::TimeOnly
        });
        let pinned = encode(base);
        let mut dims: Vec<Domain> = pinned.iter().map(|&v| Domain::Fixed(v)).collect();
        dims[0] = full.learning_rate;
        Self::from_dims(&dims)
    }

    fn dims(&self) -> Vec<Domain> {
        let mut d = vec![
            self.learning_rate,
            self.optimizer,
            self.dropout_rate,
            self.recurrent_dropout_rate,
            self.lstm_activation,
            self.output_activation,
            self.bidirectional,
            self.window_size,
        ];
        d.extend(self.window_size_funding);
        d
    }

    fn from_dims(d: &[Domain]) -> Self {
        Self {
            learning_rate: d[0],
            optimizer: d[1],
            dropout_rate: d[2],
            recurrent_dropout_rate: d[3],
            lstm_activation: d[4],
            output_activation: d[5],
            bidirectional: d[6],
            window_size: d[7],
            window_size_funding: d.get(8).copied(),
        }
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        let dims = self.dims();
        let point = encode(hp);
        dims.len() == point.len() && dims.iter().zip(&point).all(|(d, v)| d.contains(*v))
    }
}

fn encode(hp: &HyperParams) -> Vec<f64> {
    let mut p = vec![
        hp.learning_rate,
        index_of(&OptimizerKind::ALL, &hp.optimizer),
        hp.dropout_rate,
        hp.recurrent_dropout_rate,
        index_of(&Activation::ALL, &hp.lstm_activation),
        index_of(&Activation::ALL, &hp.output_activation),
        f64::from(u8::from(hp.bidirectional)),
        hp.window_size as f64,
    ];
    p.extend(hp.window_size_funding.map(|w| w as f64));
    p
}

fn decode(p: &[f64]) -> HyperParams {
    HyperParams {
        learning_rate: p[0],
        optimizer: OptimizerKind::ALL[p[1] as usize],
        dropout_rate: p[2],
        recurrent_dropout_rate: p[3],
        lstm_activation: Activation::ALL[p[4] as usize],
        output_activation: Activation::ALL[p[5] as usize],
        bidirectional: p[6] != 0.0,
        window_size: p[7] as usize,
        window_size_funding: p.get(8).map(|&w| w as usize),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub params: HyperParams,
    /// Loss for completed trials.
    pub objective: Option<f64>,
    pub status: TrialStatus,
    /// Seed handed to the objective.
    pub seed: u64,
    pub seconds: f64,
}

impl Trial {
    fn completed_loss(&self) -> Option<f64> {
        match self.status {
            TrialStatus::Ok => self.objective,
            TrialStatus::Failed => None,
        }
    }
}

/// Next proposal given the trials so far.
pub fn sample(space: &SearchSpace, history: &[Trial], config: &TpeConfig, rng: &mut ChaCha8Rng) -> HyperParams {
    let dims = space.dims();
    let mut done: Vec<(&Trial, f64)> = history
        .iter()
        .filter_map(|t| t.completed_loss().map(|l| (t, l)))
        .collect();
    if done.len() < config.n_startup.max(1) {
        let point: Vec<f64> = dims.iter().map(|d| prior_draw(d, rng)).collect();
        return decode(&point);
    }
    done.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.id.cmp(&b.0.id)));
    let n_good = ((config.gamma * done.len() as f64).ceil() as usize).clamp(1, done.len());
    let mut good: Vec<&Trial> = done[..n_good].iter().map(|d| d.0).collect();
    let mut bad: Vec<&Trial> = done[n_good..].iter().map(|d| d.0).collect();
    good.sort_by_key(|t| t.id);
    bad.sort_by_key(|t| t.id);
    let good_pts: Vec<Vec<f64>> = good.iter().map(|t| encode(&t.params)).collect();
    let bad_pts: Vec<Vec<f64>> = bad.iter().map(|t| encode(&t.params)).collect();
    let point: Vec<f64> = dims
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let g: Vec<f64> = good_pts.iter().filter_map(|p| p.get(k).copied()).collect();
            let b: Vec<f64> = bad_pts.iter().filter_map(|p| p.get(k).copied()).collect();
            propose(d, &g, &b, config, rng)
        })
        .collect();
    decode(&point)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub max_trials: usize,
    pub seed: u64,
    pub tpe: TpeConfig,
    /// When false the ledger stores 0 seconds so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            max_trials: 100,
            seed: 0,
            tpe: TpeConfig::default(),
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

impl StudyOutcome {
    /// Lowest completed objective up to and including each trial.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                if let Some(l) = t.completed_loss() {
                    best = best.min(l);
                }
                best
            })
            .collect()
    }
}

fn best_trial(trials: &[Trial]) -> Option<&Trial> {
    trials
        .iter()
        .filter(|t| t.completed_loss().is_some())
        .min_by(|a, b| {
            let (x, y) = (a.completed_loss().unwrap(), b.completed_loss().unwrap());
            x.total_cmp(&y).then(a.id.cmp(&b.id))
        })
}

/// Runs trials `previous.len()..max_trials`; `on_trial` sees each new trial once it finishes.
///
/// The objective receives the proposal and a per-trial seed; an `Err` or a non-finite
/// value marks the trial failed.
pub fn run_study<F, G>(
    mut objective: F,
    space: &SearchSpace,
    config: &StudyConfig,
    previous: Vec<Trial>,
    mut on_trial: G,
) -> Result<StudyOutcome>
where
    F: FnMut(&HyperParams, u64) -> std::result::Result<f64, String>,
    G: FnMut(&Trial) -> Result<()>,
{
    for (i, t) in previous.iter().enumerate() {
        if t.id != i {
            return Err(HyperError::Ledger {
                row: i,
                reason: format!("expected trial id {i}, found {}", t.id),
            });
        }
    }
    let mut trials = previous;
    for id in trials.len()..config.max_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, Stream::Tuning, id as u64));
        let params = sample(space, &trials, &config.tpe, &mut rng);
        let seed = derive(config.seed, Stream::Trial, id as u64);
        let start = Instant::now();
        let result = objective(&params, seed);
        let seconds = if config.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let (objective_value, status) = match result {
            Ok(v) if v.is_finite() => (Some(v), TrialStatus::Ok),
            Ok(v) => {
                log::warn!("hypertune: trial {id} returned non-finite loss {v}");
                (None, TrialStatus::Failed)
            }
            Err(e) => {
                log::warn!("hypertune: trial {id} failed: {e}");
                (None, TrialStatus::Failed)
            }
        };
        let trial = Trial {
            id,
            params,
            objective: objective_value,
            status,
            seed,
            seconds,
        };
        on_trial(&trial)?;
        trials.push(trial);
    }
    let best = best_trial(&trials)
        .cloned()
        .ok_or(HyperError::AllTrialsFailed(trials.len()))?;
    Ok(StudyOutcome { best, trials })
}

pub const LEDGER_HEADER: [&str; 14] = [
    "trial_id",
    "learning_rate",
    "optimizer",
    "dropout_rate",
    "recurrent_dropout_rate",
    "lstm_activation",
    "output_activation",
    "bidirectional",
    "window_size",
    "window_size_funding",
    "objective",
    "status",
    "seed",
    "seconds",
];

fn ledger_row(t: &Trial) -> Vec<String> {
    let p = &t.params;
    vec![
        t.id.to_string(),
        p.learning_rate.to_string(),
        p.optimizer.to_string(),
        p.dropout_rate.to_string(),
        p.recurrent_dropout_rate.to_string(),
        p.lstm_activation.to_string(),
        p.output_activation.to_string(),
        p.bidirectional.to_string(),
        p.window_size.to_string(),
        p.window_size_funding.map_or(String::new(), |w| w.to_string()),
        t.objective.map_or(String::new(), |o| o.to_string()),
        match t.status {
            TrialStatus::Ok => "ok".into(),
            TrialStatus::Failed => "failed".into(),
        },
        t.seed.to_string(),
        t.seconds.to_string(),
    ]
}

pub fn write_ledger<W: Write>(writer: W, trials: &[Trial]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LEDGER_HEADER)?;
    for t in trials {
        w.write_record(ledger_row(t))?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one trial, writing the header first if the file is new or empty.
pub fn append_ledger(path: impl AsRef<Path>, trial: &Trial) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(LEDGER_HEADER)?;
    }
    w.write_record(ledger_row(trial))?;
    w.flush()?;
    Ok(())
}

pub fn read_ledger<R: Read>(reader: R) -> Result<Vec<Trial>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(LEDGER_HEADER.iter().copied()) {
        return Err(HyperError::Ledger {
            row: 0,
            reason: "unexpected header".into(),
        });
    }
    let mut trials = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| HyperError::Ledger { row: row + 1, reason };
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        fn num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {name} `{s}`"))
        }
        let opt_num = |s: &str, name: &str| -> std::result::Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, name).map(Some)
            }
        };
        let parse = || -> std::result::Result<Trial, String> {
            let params = HyperParams {
                learning_rate: num(field(1), "learning_rate")?,
                optimizer: field(2).parse().map_err(|e: crate::neuralnet::NetError| e.to_string())?,
                dropout_rate: num(field(3), "dropout_rate")?,
                recurrent_dropout_rate: num(field(4), "recurrent_dropout_rate")?,
                lstm_activation: field(5).parse().map_err(|e: crate::neuralnet::NetError| e.to_string())?,
                output_activation: field(6).parse().map_err(|e: crate::neuralnet::NetError| e.to_string())?,
                bidirectional: num(field(7), "bidirectional")?,
                window_size: num(field(8), "window_size")?,
                window_size_funding: opt_num(field(9), "window_size_funding")?.map(|w| w as usize),
            };
            let status = match field(11) {
                "ok" => TrialStatus::Ok,
                "failed" => TrialStatus::Failed,
                other => return Err(format!("bad status `{other}`")),
            };
            Ok(Trial {
                id: num(field(0), "trial_id")?,
                params,
                objective: opt_num(field(10), "objective")?,
                status,
                seed: num(field(12), "seed")?,
                seconds: num(field(13), "seconds")?,
            })
        };
        trials.push(parse().map_err(bad)?);
    }
    Ok(trials)
}
