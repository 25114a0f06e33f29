//! Model-ready windowed examples for the failure-time and launch-time stages.
//!
//! The main sequence of a stage is the chronologically ordered event list of its key date:
//! failed records in failure order for the failure-time stage, every record in launch order
//! for the launch-time stage. An example is owned by the last record of its window; the
//! first `window_size - 1` events only ever appear as lookback.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{log2_target, FeatureError, Partition, Result, ScalerParams, SplitSpec, Vocabulary};
use crate::dataset::{Categorical, FundingKind, FundingTable, KeyDate, MissionRecord};

/// Index of a record in the caller's master record slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// Lifetimes indexed by failure date.
    FailureTime,
    /// Lifetimes indexed by launch date.
    LaunchTime,
}

impl StageKind {
    pub fn key(self) -> KeyDate {
        match self {
            StageKind::FailureTime => KeyDate::Failure,
            StageKind::LaunchTime => KeyDate::Launch,
        }
    }

    /// Width of one main-sequence step.
    pub fn main_features(self) -> usize {
        match self {
            StageKind::FailureTime => 2,
            StageKind::LaunchTime => 1,
        }
    }
}

/// Which predictors a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Dates (and failure-stage lifetimes) only.
    TimeOnly,
    /// Dates plus funding sequences, categoricals and launch mass.
    TimePlus,
}

impl Phase {
    pub fn uses_extras(self) -> bool {
        matches!(self, Phase::TimePlus)
    }
}

/// One training or inference instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedExample {
    pub record: RecordId,
    /// `window_size` steps, oldest first.
    pub seq_main: Vec<Vec<f64>>,
    /// `window_size_funding` yearly 4-vectors ending at the key year; empty for time-only.
    pub seq_funding: Vec<Vec<f64>>,
    /// Destination, contact type and country indices; empty for time-only.
    pub categoricals: Vec<usize>,
    /// Scaled launch mass; 0 for time-only.
    pub mass: f64,
    /// log2 lifetime.
    pub target: f64,
}

/// Where targets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum StageTargets {
    /// log2 of each failed record's observed lifetime.
    Observed,
    /// Values supplied per record; records without an entry never own an example.
    Transferred(BTreeMap<RecordId, f64>),
}

/// Everything needed to turn records into examples the same way at train and predict time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEncoder {
    pub stage: StageKind,
    pub phase: Phase,
    pub window_size: usize,
    pub funding_window: usize,
    /// Key date.
    pub time_scaler: ScalerParams,
    /// log2 lifetime; failure-time stage only.
    pub lifetime_scaler: Option<ScalerParams>,
    pub mass_scaler: Option<ScalerParams>,
    pub funding_scaler: Option<ScalerParams>,
    /// Keyed by categorical attribute; empty for time-only.
    pub vocabularies: Vec<(Categorical, Vocabulary)>,
}

impl StageEncoder {
    fn main_step(&self, r: &MissionRecord) -> Result<Vec<f64>> {
        let t = r
            .key_date(self.stage.key())
            .ok_or_else(|| FeatureError::Dataset(format!("`{}` has no key date", r.name)))?;
        let mut step = vec![self.time_scaler.scale(0, t)];
        if let Some(ls) = &self.lifetime_scaler {
            let l = r
                .lifetime
                .ok_or_else(|| FeatureError::Dataset(format!("`{}` has no lifetime", r.name)))?;
            step.push(ls.scale(0, log2_target(l)?));
        }
        Ok(step)
    }

    fn funding_rows(&self, r: &MissionRecord, funding: Option<&FundingTable>) -> Result<Vec<[f64; 4]>> {
        let table = funding
            .ok_or_else(|| FeatureError::Dataset("time-plus inputs need a funding table".into()))?;
        let t = r
            .key_date(self.stage.key())
            .ok_or_else(|| FeatureError::Dataset(format!("`{}` has no key date", r.name)))?;
        table
            .window(t.floor() as i32, self.funding_window)
            .map_err(|e| FeatureError::Dataset(e.to_string()))
    }

    /// Index of each categorical attribute of `r`.
    pub fn categorical_indices(&self, r: &MissionRecord) -> Vec<usize> {
        self.vocabularies
            .iter()
            .map(|(c, v)| v.index(r.categorical(*c)))
            .collect()
    }

    pub fn scaled_mass(&self, mass: f64) -> f64 {
        self.mass_scaler.as_ref().map_or(0.0, |s| s.scale(0, mass))
    }

    /// Encodes the window whose last element is `sequence[pos]`.
    pub fn example_at(
        &self,
        records: &[MissionRecord],
        sequence: &[RecordId],
        pos: usize,
        funding: Option<&FundingTable>,
        target: f64,
    ) -> Result<WindowedExample> {
        if pos + 1 < self.window_size || pos >= sequence.len() {
            return Err(FeatureError::SequenceTooShort {
                len: pos + 1,
                window: self.window_size,
            });
        }
        let seq_main = sequence[pos + 1 - self.window_size..=pos]
            .iter()
            .map(|id| self.main_step(&records[id.0]))
            .collect::<Result<Vec<_>>>()?;
        let owner = &records[sequence[pos].0];
        let (seq_funding, categoricals, mass) = if self.phase.uses_extras() {
            let fs = self
                .funding_scaler
                .as_ref()
                .ok_or_else(|| FeatureError::Dataset("missing funding scaler".into()))?;
            let rows = self
                .funding_rows(owner, funding)?
                .into_iter()
                .map(|r| (0..4).map(|j| fs.scale(j, r[j])).collect())
                .collect();
            (rows, self.categorical_indices(owner), self.scaled_mass(owner.launch_mass))
        } else {
            (Vec::new(), Vec::new(), 0.0)
        };
        Ok(WindowedExample {
            record: sequence[pos],
            seq_main,
            seq_funding,
            categoricals,
            mass,
            target,
        })
    }
}

/// Key-ordered event sequence of a stage.
pub fn stage_sequence(records: &[MissionRecord], stage: StageKind) -> Vec<RecordId> {
    let mut ids: Vec<RecordId> = match stage {
        StageKind::FailureTime => (0..records.len())
            .filter(|&i| records[i].is_inactive())
            .map(RecordId)
            .collect(),
        StageKind::LaunchTime => (0..records.len()).map(RecordId).collect(),
    };
    let key = stage.key();
    ids.sort_by(|a, b| {
        let ra = &records[a.0];
        let rb = &records[b.0];
        ra.key_date(key)
            .unwrap_or(f64::INFINITY)
            .total_cmp(&rb.key_date(key).unwrap_or(f64::INFINITY))
            .then(ra.launch_date.total_cmp(&rb.launch_date))
            .then(a.cmp(b))
    });
    ids
}

/// A stage's encoded, chronologically split examples.
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    pub encoder: StageEncoder,
    pub split: SplitSpec,
    /// Key-ordered event sequence the windows slide over.
    pub sequence: Vec<RecordId>,
    pub train: Vec<WindowedExample>,
    pub val: Vec<WindowedExample>,
    pub test: Vec<WindowedExample>,
}

impl StageData {
    /// Train, validation and test examples in chronological order.
    pub fn all_examples(&self) -> impl Iterator<Item = &WindowedExample> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    pub fn partition(&self, p: Partition) -> &[WindowedExample] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.val,
            Partition::Test => &self.test,
        }
    }
}

/// Builds the examples of one stage.
///
/// Scalers are fit on the owners of training examples only; vocabularies are fit on every
/// record in `records` so that inference-only records encode without collisions.
#[allow(clippy::too_many_arguments)]
pub fn build_stage_data(
    records: &[MissionRecord],
    funding: Option<&FundingTable>,
    stage: StageKind,
    phase: Phase,
    window_size: usize,
    funding_window: usize,
    outer_ratio: f64,
    targets: &StageTargets,
) -> Result<StageData> {
    if window_size == 0 || (phase.uses_extras() && funding_window == 0) {
        return Err(FeatureError::ZeroWindow);
    }
    let sequence = stage_sequence(records, stage);
    if sequence.len() < window_size {
        return Err(FeatureError::SequenceTooShort {
            len: sequence.len(),
            window: window_size,
        });
    }

    let target_of = |id: RecordId| -> Result<Option<f64>> {
        match targets {
            StageTargets::Observed => match records[id.0].lifetime {
                Some(l) => Ok(Some(log2_target(l)?)),
                None => Ok(None),
            },
            StageTargets::Transferred(map) => Ok(map.get(&id).copied()),
        }
    };
    let mut owners: Vec<(usize, f64)> = Vec::new();
    for pos in window_size - 1..sequence.len() {
        if let Some(t) = target_of(sequence[pos])? {
            owners.push((pos, t));
        }
    }
    let split = SplitSpec::new(owners.len(), outer_ratio)?;
    let train_owners: Vec<&MissionRecord> = owners[..split.train]
        .iter()
        .map(|(pos, _)| &records[sequence[*pos].0])
        .collect();

    let key = stage.key();
    let times: Vec<f64> = train_owners
        .iter()
        .filter_map(|r| r.key_date(key))
        .collect();
    let time_scaler = ScalerParams::fit_column(key_name(key), &times)?;
    let lifetime_scaler = match stage {
        StageKind::FailureTime => {
            let ls = train_owners
                .iter()
                .map(|r| log2_target(r.lifetime.unwrap_or(f64::NAN)))
                .collect::<Result<Vec<_>>>()?;
            Some(ScalerParams::fit_column("log2_lifetime", &ls)?)
        }
        StageKind::LaunchTime => None,
    };

    let mut encoder = StageEncoder {
        stage,
        phase,
        window_size,
        funding_window: if phase.uses_extras() { funding_window } else { 0 },
        time_scaler,
        lifetime_scaler,
        mass_scaler: None,
        funding_scaler: None,
        vocabularies: Vec::new(),
    };
    if phase.uses_extras() {
        let masses: Vec<f64> = train_owners.iter().map(|r| r.launch_mass).collect();
        encoder.mass_scaler = Some(ScalerParams::fit_column("launch_mass", &masses)?);
        let mut rows = Vec::new();
        for r in &train_owners {
            rows.extend(encoder.funding_rows(r, funding)?.into_iter().map(|a| a.to_vec()));
        }
        let names: Vec<&str> = FundingKind::ALL.iter().map(|k| k.column()).collect();
        encoder.funding_scaler = Some(ScalerParams::fit(&names, &rows)?);
        encoder.vocabularies = Categorical::ALL
            .iter()
            .map(|&c| (c, Vocabulary::fit(records.iter().map(|r| r.categorical(c)))))
            .collect();
    }

    let mut train = Vec::with_capacity(split.train);
    let mut val = Vec::with_capacity(split.val);
    let mut test = Vec::with_capacity(split.test);
    for (i, (pos, t)) in owners.iter().enumerate() {
        let ex = encoder.example_at(records, &sequence, *pos, funding, *t)?;
        match split.partition_of(i) {
            Partition::Train => train.push(ex),
            Partition::Validation => val.push(ex),
            Partition::Test => test.push(ex),
        }
    }
    Ok(StageData {
        encoder,
        split,
        sequence,
        train,
        val,
        test,
    })
}

fn key_name(key: KeyDate) -> &'static str {
    match key {
        KeyDate::Launch => "launch_date",
        KeyDate::Failure => "failure_date",
    }
}

/// Flat CSV: `record,partition,target,mass,cat_0..,main_{step}_{feature}..,funding_{step}_{feature}..`.
pub fn export_examples_csv<W: Write>(writer: W, data: &StageData) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let Some(first) = data.all_examples().next() else {
        return Ok(());
    };
    let mut header = vec![
        "record".to_string(),
        "partition".into(),
        "target".into(),
        "mass".into(),
    ];
    header.extend((0..first.categoricals.len()).map(|k| format!("cat_{k}")));
    for (s, step) in first.seq_main.iter().enumerate() {
        header.extend((0..step.len()).map(|f| format!("main_{s}_{f}")));
    }
    for (s, step) in first.seq_funding.iter().enumerate() {
        header.extend((0..step.len()).map(|f| format!("funding_{s}_{f}")));
    }
    wtr.write_record(&header)?;
    for (p, name) in [
        (Partition::Train, "train"),
        (Partition::Validation, "validation"),
        (Partition::Test, "test"),
    ] {
        for ex in data.partition(p) {
            let mut row = vec![
                ex.record.0.to_string(),
                name.to_string(),
                ex.target.to_string(),
                ex.mass.to_string(),
            ];
            row.extend(ex.categoricals.iter().map(|c| c.to_string()));
            row.extend(ex.seq_main.iter().flatten().map(|v| v.to_string()));
            row.extend(ex.seq_funding.iter().flatten().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FundingSeries, MissionRecord};

    fn cohort(n: usize) -> Vec<MissionRecord> {
        (0..n)
            .map(|i| {
                let launch = 1960.0 + i as f64;
                // Every third record is still operating.
                let failure = (i % 3 != 2).then(|| launch + 1.0 + (i % 5) as f64);
                MissionRecord::new(
                    format!("m{i}"),
                    launch,
                    failure,
                    100.0 + 10.0 * i as f64,
                    ["Lunar", "Mars"][i % 2],
                    "Orbit",
                    ["US", "Japan", "India"][i % 3],
                )
                .unwrap()
            })
            .collect()
    }

    fn funding() -> FundingTable {
        let series: Vec<FundingSeries> = FundingKind::ALL
            .iter()
            .map(|&k| {
                FundingSeries::new(k, (1940..2030).map(|y| (y, (y - 1900) as f64 * (1 + k.index()) as f64)).collect())
                    .unwrap()
            })
            .collect();
        FundingTable::from_series(&series).unwrap()
    }

    #[test]
    fn failure_stage_windows_in_failure_order() {
        let recs = cohort(30);
        let data = build_stage_data(
            &recs,
            None,
            StageKind::FailureTime,
            Phase::TimeOnly,
            3,
            0,
            0.75,
            &StageTargets::Observed,
        )
        .unwrap();
        let failed = recs.iter().filter(|r| r.is_inactive()).count();
        assert_eq!(data.split.total(), failed - 2);
        let mut prev = f64::NEG_INFINITY;
        for ex in data.all_examples() {
            let r = &recs[ex.record.0];
            assert!(r.failure_date.unwrap() >= prev);
            prev = r.failure_date.unwrap();
            assert_eq!(ex.seq_main.len(), 3);
            assert_eq!(ex.seq_main[0].len(), 2);
            assert_eq!(ex.target, r.lifetime.unwrap().log2());
            assert!(ex.seq_funding.is_empty() && ex.categoricals.is_empty());
        }
        for ex in &data.train {
            let v = ex.seq_main.last().unwrap();
            assert!((0.0..=1.0).contains(&v[0]) && (0.0..=1.0).contains(&v[1]));
        }
    }

    #[test]
    fn launch_stage_includes_active_lookback_but_not_as_targets() {
        let recs = cohort(30);
        let targets: BTreeMap<RecordId, f64> = recs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_inactive())
            .map(|(i, _)| (RecordId(i), i as f64 * 0.1))
            .collect();
        let data = build_stage_data(
            &recs,
            Some(&funding()),
            StageKind::LaunchTime,
            Phase::TimePlus,
            4,
            3,
            0.75,
            &StageTargets::Transferred(targets.clone()),
        )
        .unwrap();
        assert_eq!(data.sequence.len(), 30);
        for ex in data.all_examples() {
            assert!(recs[ex.record.0].is_inactive());
            assert_eq!(ex.target, targets[&ex.record]);
            assert_eq!(ex.seq_funding.len(), 3);
            assert_eq!(ex.categoricals.len(), 3);
            assert!(ex.categoricals.iter().all(|&c| c > 0));
        }
        // Records 2, 5, ... are active and sit inside lookback windows.
        let pos = data.sequence.iter().position(|id| id.0 == 3).unwrap();
        assert!(data.sequence[pos - 1].0 == 2);
    }

    #[test]
    fn scaler_ignores_test_records() {
        let recs = cohort(40);
        let build = |recs: &[MissionRecord]| {
            build_stage_data(
                recs,
                Some(&funding()),
                StageKind::FailureTime,
                Phase::TimePlus,
                2,
                2,
                0.75,
                &StageTargets::Observed,
            )
            .unwrap()
        };
        let base = build(&recs);
        let mut perturbed = recs.clone();
        let last_test = base.test.last().unwrap().record.0;
        perturbed[last_test].launch_mass *= 50.0;
        let other = build(&perturbed);
        assert_eq!(base.encoder, other.encoder);
    }

    #[test]
    fn missing_funding_year_is_reported() {
        let recs = cohort(20);
        let series: Vec<FundingSeries> = FundingKind::ALL
            .iter()
            .map(|&k| FundingSeries::new(k, (1970..2030).map(|y| (y, 1.0)).collect()).unwrap())
            .collect();
        let table = FundingTable::from_series(&series).unwrap();
        let r = build_stage_data(
            &recs,
            Some(&table),
            StageKind::LaunchTime,
            Phase::TimePlus,
            1,
            3,
            0.75,
            &StageTargets::Observed,
        );
        assert!(matches!(r, Err(FeatureError::Dataset(_))));
    }

    #[test]
    fn csv_export_has_one_row_per_example() {
        let recs = cohort(20);
        let data = build_stage_data(
            &recs,
            None,
            StageKind::LaunchTime,
            Phase::TimeOnly,
            2,
            0,
            0.75,
            &StageTargets::Observed,
        )
        .unwrap();
        let mut buf = Vec::new();
        export_examples_csv(&mut buf, &data).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + data.split.total());
        assert!(text.starts_with("record,partition,target,mass,main_0_0,main_1_0"));
    }
}
