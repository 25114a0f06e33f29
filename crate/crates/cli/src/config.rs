//! Run configuration read from TOML. Every field has a default, so an empty file is valid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use steti::features::Phase;
use steti::neuralnet::BatchSize;
use steti::scenario::ScenarioSpec;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Failures after this decimal year are treated as not yet observed.
    pub observation_date: Option<f64>,
    pub paths: Paths,
    pub steti_fit: StetiFitSection,
    pub train: TrainSection,
    pub tune: TuneSection,
    pub benchmark: BenchmarkSection,
    /// Empty means a mass sweep plus one sweep per categorical attribute.
    pub scenario: Vec<ScenarioEntry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            observation_date: None,
            paths: Paths::default(),
            steti_fit: StetiFitSection::default(),
            train: TrainSection::default(),
            tune: TuneSection::default(),
            benchmark: BenchmarkSection::default(),
            scenario: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub missions: PathBuf,
    pub funding: Option<PathBuf>,
    pub deflator: Option<PathBuf>,
    /// Year whose prices the deflated funding is expressed in; defaults to the last
    /// deflator year.
    pub deflator_base_year: Option<i32>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            missions: "missions.csv".into(),
            funding: None,
            deflator: None,
            deflator_base_year: None,
            out: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StetiFitSection {
    pub epoch: f64,
    pub smoothing_window: usize,
}

impl Default for StetiFitSection {
    fn default() -> Self {
        Self {
            epoch: steti::steti::DEFAULT_EPOCH,
            smoothing_window: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PhaseName {
    TimeOnly,
    TimePlus,
}

impl PhaseName {
    pub fn phase(self) -> Phase {
        match self {
            PhaseName::TimeOnly => Phase::TimeOnly,
            PhaseName::TimePlus => Phase::TimePlus,
        }
    }

    pub fn as_str(self) -> &'static str {
        steti::steti::phase_label(self.phase())
    }
}

/// A batch size as written in the config: a count or `"full"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchEntry {
    Size(usize),
    Word(String),
}

impl BatchEntry {
    pub fn resolve(&self) -> Result<BatchSize, CliError> {
        match self {
            BatchEntry::Size(0) => Err(CliError::Validation("config: batch size must be positive".into())),
            BatchEntry::Size(n) => Ok(BatchSize::Fixed(*n)),
            BatchEntry::Word(w) if w.eq_ignore_ascii_case("full") => Ok(BatchSize::Full),
            BatchEntry::Word(w) => Err(CliError::Validation(format!("config: unknown batch size `{w}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub phases: Vec<PhaseName>,
    pub split_ratios: Vec<f64>,
    pub batch_sizes: Vec<BatchEntry>,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden_size: Option<usize>,
    /// Per-phase `best_hyperparams.json` written by `tune`; adds a tuned setting to the grid.
    pub hyperparams: BTreeMap<PhaseName, PathBuf>,
    pub write_history: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            phases: vec![PhaseName::TimeOnly, PhaseName::TimePlus],
            split_ratios: vec![0.75, 0.85],
            batch_sizes: vec![
                BatchEntry::Size(32),
                BatchEntry::Size(64),
                BatchEntry::Size(96),
                BatchEntry::Word("full".into()),
            ],
            max_epochs: 5000,
            patience: 1000,
            hidden_size: None,
            hyperparams: BTreeMap::new(),
            write_history: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub phases: Vec<PhaseName>,
    pub max_trials: usize,
    /// Defaults to the root seed.
    pub seed: Option<u64>,
    /// Continue from existing trial ledgers instead of starting over.
    pub resume: bool,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            phases: vec![PhaseName::TimeOnly, PhaseName::TimePlus],
            max_trials: 100,
            seed: None,
            resume: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub vif_threshold: f64,
    pub window_min: usize,
    pub window_max: usize,
    pub folds: usize,
    /// Inclusive launch-year range of the records the regression is fitted on.
    pub fit_start: i32,
    pub fit_end: i32,
    pub dummies: bool,
    /// Launch-time model to compare against; defaults to the best model written by `train`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            vif_threshold: 5.0,
            window_min: 1,
            window_max: 20,
            folds: 5,
            fit_start: 1959,
            fit_end: 1999,
            dummies: true,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    /// Output file stem; defaults to `scenario_<index>_<axis>`.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(flatten)]
    pub spec: ScenarioSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config: cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("config: {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Makes relative paths relative to `base`.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.missions);
        fix(&mut self.paths.out);
        self.paths.funding.iter_mut().for_each(fix);
        self.paths.deflator.iter_mut().for_each(fix);
        self.benchmark.checkpoint.iter_mut().for_each(fix);
        self.train.hyperparams.values_mut().for_each(fix);
        for s in &mut self.scenario {
            s.checkpoint.iter_mut().for_each(fix);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(format!("config: {m}")));
        if self.train.split_ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("split ratios must lie strictly between 0 and 1".into());
        }
        if self.train.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.benchmark.window_min == 0 || self.benchmark.window_min > self.benchmark.window_max {
            return bad(format!(
                "benchmark window range {}..={} is empty",
                self.benchmark.window_min, self.benchmark.window_max
            ));
        }
        if self.benchmark.folds < 2 {
            return bad("benchmark needs at least 2 folds".into());
        }
        if self.steti_fit.smoothing_window == 0 {
            return bad("smoothing_window must be positive".into());
        }
        for b in &self.train.batch_sizes {
            b.resolve()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use steti::scenario::{Axis, Baseline, Spacing, Sweep};

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.max_epochs, 5000);
        assert_eq!(cfg.benchmark.window_max, 20);
    }

    #[test]
    fn full_schema_parses() {
        let text = r#"
            seed = 7
            observation_date = 2023.0
            [paths]
            missions = "m.csv"
            funding = "f.csv"
            [train]
            phases = ["time_only"]
            batch_sizes = [32, "full"]
            max_epochs = 10
            patience = 5
            [train.hyperparams]
            time_only = "best.json"
            [[scenario]]
            baseline = "last"
            axis = "launch_mass"
            sweep = { numeric = { low = 1.0, high = 50000.0, count = 50 } }
            [[scenario]]
            name = "countries"
            baseline = { named = "HAKUTO-R M1" }
            axis = "country"
            sweep = { labels = [] }
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.batch_sizes[1].resolve().unwrap(), BatchSize::Full);
        assert_eq!(cfg.scenario.len(), 2);
        assert_eq!(
            cfg.scenario[0].spec.sweep,
            Sweep::Numeric {
                low: 1.0,
                high: 50_000.0,
                count: 50,
                spacing: Spacing::Log
            }
        );
        assert_eq!(cfg.scenario[1].spec.baseline, Baseline::Named("HAKUTO-R M1".into()));
        assert_eq!(cfg.scenario[1].spec.axis, Axis::Country);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        let mut cfg = RunConfig::default();
        cfg.train.split_ratios = vec![1.0];
        assert!(cfg.validate().is_err());
        assert!(BatchEntry::Word("half".into()).resolve().is_err());
    }
}
