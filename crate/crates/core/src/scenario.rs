//! What-if sweeps: hold one record fixed, vary a single attribute and score each variant
//! with a trained launch-time model.

use std::fmt;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Categorical, FundingTable, MissionRecord};
use crate::features::{exp2, RecordId, StageKind};
use crate::steti::{Checkpoint, StetiError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario: checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("scenario: baseline `{0}` not found")]
    UnknownBaseline(String),
    #[error("scenario: invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Steti(#[from] StetiError),
    #[error("scenario: {0}")]
    Csv(#[from] csv::Error),
    #[error("scenario: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    LaunchMass,
    Country,
    Destination,
    ContactType,
}

impl Axis {
    pub fn categorical(self) -> Option<Categorical> {
        match self {
            Axis::LaunchMass => None,
            Axis::Country => Some(Categorical::Country),
            Axis::Destination => Some(Categorical::Destination),
            Axis::ContactType => Some(Categorical::ContactType),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::LaunchMass => "launch_mass",
            Axis::Country => "country",
            Axis::Destination => "destination",
            Axis::ContactType => "contact_type",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Numeric {
        low: f64,
        high: f64,
        count: usize,
        #[serde(default)]
        spacing: Spacing,
    },
    /// An empty list means every label the model has seen on this axis.
    Labels(Vec<String>),
}

impl Sweep {
    /// `count` points from `low` to `high`, endpoints exact.
    pub fn numeric_values(low: f64, high: f64, count: usize, spacing: Spacing) -> Result<Vec<f64>> {
        if count == 0 || !(low.is_finite() && high.is_finite()) || high < low {
            return Err(ScenarioError::InvalidSweep(format!("{count} points over [{low}, {high}]")));
        }
        if spacing == Spacing::Log && low <= 0.0 {
            return Err(ScenarioError::InvalidSweep(format!("log spacing needs a positive low end, got {low}")));
        }
        if count == 1 {
            return Ok(vec![low]);
        }
        let last = (count - 1) as f64;
        Ok((0..count)
            .map(|i| match i {
                0 => low,
                i if i == count - 1 => high,
                i => {
                    let f = i as f64 / last;
                    match spacing {
                        Spacing::Linear => low + f * (high - low),
                        Spacing::Log => (low.ln() + f * (high.ln() - low.ln())).exp(),
                    }
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The latest-launched record.
    Last,
    Named(String),
    /// A record outside the dataset; its window is the events launched before it.
    Literal(MissionRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub baseline: Baseline,
    pub axis: Axis,
    pub sweep: Sweep,
}

impl ScenarioSpec {
    /// 1 kg to 50,000 kg over 50 log-spaced points.
    pub fn mass_sweep(baseline: Baseline) -> Self {
        Self {
            baseline,
            axis: Axis::LaunchMass,
            sweep: Sweep::Numeric {
                low: 1.0,
                high: 50_000.0,
                count: 50,
                spacing: Spacing::Log,
            },
        }
    }

    pub fn label_sweep(baseline: Baseline, axis: Axis) -> Self {
        Self {
            baseline,
            axis,
            sweep: Sweep::Labels(Vec::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Number(f64),
    Label(String),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Number(v) => write!(f, "{v}"),
            AxisValue::Label(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub value: AxisValue,
    pub record: MissionRecord,
    pub is_baseline: bool,
}

/// Hypotheticals plus where the baseline sits in the record list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub axis: Axis,
    pub records: Vec<MissionRecord>,
    pub baseline: RecordId,
    pub scenarios: Vec<Scenario>,
}

fn axis_value(r: &MissionRecord, axis: Axis) -> AxisValue {
    match axis.categorical() {
        None => AxisValue::Number(r.launch_mass),
        Some(c) => AxisValue::Label(r.categorical(c).to_string()),
    }
}

fn with_value(r: &MissionRecord, axis: Axis, value: &AxisValue) -> Result<MissionRecord> {
    let mut h = r.clone();
    match (axis.categorical(), value) {
        (None, AxisValue::Number(m)) => {
            if !(m.is_finite() && *m > 0.0) {
                return Err(ScenarioError::InvalidSweep(format!("launch mass must be positive, got {m}")));
            }
            h.launch_mass = *m;
        }
        (Some(c), AxisValue::Label(s)) => *h.categorical_mut(c) = s.clone(),
        _ => return Err(ScenarioError::InvalidSweep(format!("value `{value}` does not fit axis {}", axis.name()))),
    }
    Ok(h)
}

/// Resolves the baseline and builds one hypothetical per sweep value, with the baseline
/// row first when the sweep does not already contain it. `known_labels` fills an empty
/// label sweep.
pub fn build_scenarios(spec: &ScenarioSpec, records: &[MissionRecord], known_labels: &[String]) -> Result<ScenarioSet> {
    let mut records = records.to_vec();
    let baseline = match &spec.baseline {
        Baseline::Last => records
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.launch_date.total_cmp(&b.1.launch_date).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .ok_or_else(|| ScenarioError::UnknownBaseline("last (no records)".into()))?,
        Baseline::Named(name) => records
            .iter()
            .position(|r| &r.name == name)
            .ok_or_else(|| ScenarioError::UnknownBaseline(name.clone()))?,
        Baseline::Literal(r) => {
            records.push(r.clone());
            records.len() - 1
        }
    };
    let base = records[baseline].clone();
    let values: Vec<AxisValue> = match &spec.sweep {
        Sweep::Numeric { low, high, count, spacing } => {
            if spec.axis.categorical().is_some() {
                return Err(ScenarioError::InvalidSweep(format!("{} takes labels", spec.axis.name())));
            }
            Sweep::numeric_values(*low, *high, *count, *spacing)?
                .into_iter()
                .map(AxisValue::Number)
                .collect()
        }
        Sweep::Labels(labels) => {
            if spec.axis.categorical().is_none() {
                return Err(ScenarioError::InvalidSweep("launch_mass takes a numeric range".into()));
            }
            let labels = if labels.is_empty() { known_labels } else { labels.as_slice() };
            if labels.is_empty() {
                return Err(ScenarioError::InvalidSweep("no labels to sweep".into()));
            }
            labels.iter().cloned().map(AxisValue::Label).collect()
        }
    };
    let own = axis_value(&base, spec.axis);
    let mut scenarios = Vec::with_capacity(values.len() + 1);
    if !values.contains(&own) {
        scenarios.push(Scenario {
            value: own.clone(),
            record: base.clone(),
            is_baseline: true,
        });
    }
    for v in values {
        let record = with_value(&base, spec.axis, &v)?;
        scenarios.push(Scenario {
            is_baseline: v == own,
            value: v,
            record,
        });
    }
    Ok(ScenarioSet {
        axis: spec.axis,
        records,
        baseline: RecordId(baseline),
        scenarios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub axis_value: AxisValue,
    pub pred_log2_lifetime: f64,
    pub pred_lifetime_years: f64,
    /// Input outside the training range or a label the model has not seen.
    pub extrapolation: bool,
    pub is_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub axis: Axis,
    pub baseline: String,
    pub rows: Vec<ScenarioRow>,
}

/// Scores every hypothetical in the baseline's sequence context.
pub fn predict_scenarios(checkpoint: &Checkpoint, set: &ScenarioSet, funding: Option<&FundingTable>) -> Result<ScenarioResult> {
    let model = &checkpoint.model;
    let enc = &model.encoder;
    if enc.stage != StageKind::LaunchTime {
        return Err(ScenarioError::CheckpointMismatch("scenarios need a launch-time model".into()));
    }
    if enc.phase.uses_extras() && funding.is_none() {
        return Err(ScenarioError::CheckpointMismatch("this model reads funding, but no table was given".into()));
    }
    let vocabulary = match set.axis.categorical() {
        Some(c) if enc.phase.uses_extras() => Some(
            enc.vocabularies
                .iter()
                .find(|(k, _)| *k == c)
                .map(|(_, v)| v)
                .ok_or_else(|| ScenarioError::CheckpointMismatch(format!("no vocabulary for {}", c.column())))?,
        ),
        _ => None,
    };
    if !enc.phase.uses_extras() {
        warn!("scenario: a time-only model ignores {}; every prediction will match the baseline", set.axis.name());
    }
    let examples = set
        .scenarios
        .par_iter()
        .map(|s| {
            let mut records = set.records.clone();
            records[set.baseline.0] = s.record.clone();
            let ex = model
                .encode_records(&records, funding, &[set.baseline])?
                .pop()
                .expect("one id gives one example");
            Ok(ex)
        })
        .collect::<Vec<std::result::Result<_, StetiError>>>()
        .into_iter()
        .collect::<std::result::Result<Vec<_>, StetiError>>()?;
    let preds = model.predict(&examples)?;
    let rows = set
        .scenarios
        .iter()
        .zip(preds)
        .map(|(s, p)| {
            let extrapolation = match (&s.value, vocabulary) {
                (AxisValue::Number(m), _) => enc.mass_scaler.as_ref().is_some_and(|sc| sc.is_extrapolation(0, *m)),
                (AxisValue::Label(l), Some(v)) => {
                    let unseen = !v.contains(l);
                    if unseen {
                        warn!("scenario: `{l}` is not in the model's {} vocabulary; using the reserved index", set.axis.name());
                    }
                    unseen
                }
                (AxisValue::Label(_), None) => false,
            };
            ScenarioRow {
                axis_value: s.value.clone(),
                pred_log2_lifetime: p,
                pred_lifetime_years: exp2(p),
                extrapolation,
                is_baseline: s.is_baseline,
            }
        })
        .collect();
    Ok(ScenarioResult {
        axis: set.axis,
        baseline: set.records[set.baseline.0].name.clone(),
        rows,
    })
}

/// `axis_value,pred_log2_lifetime,pred_lifetime_years,extrapolation_flag`.
pub fn write_scenario_csv<W: Write>(writer: W, result: &ScenarioResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["axis_value", "pred_log2_lifetime", "pred_lifetime_years", "extrapolation_flag"])?;
    for r in &result.rows {
        w.write_record([
            r.axis_value.to_string(),
            format!("{:.10}", r.pred_log2_lifetime),
            format!("{:.10}", r.pred_lifetime_years),
            u8::from(r.extrapolation).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records() -> Vec<MissionRecord> {
        vec![
            MissionRecord::new("A", 1990.0, Some(1995.0), 500.0, "Mars", "Orbiter", "USA").unwrap(),
            MissionRecord::new("B", 2000.0, None, 1000.0, "Lunar", "Lander", "Japan").unwrap(),
            MissionRecord::new("C", 1980.0, Some(1981.0), 20.0, "Venus", "Flyby", "Soviet Union").unwrap(),
        ]
    }

    #[test]
    fn log_sweep_spans_endpoints() {
        let v = Sweep::numeric_values(1.0, 50_000.0, 50, Spacing::Log).unwrap();
        assert_eq!(v.len(), 50);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[49], 50_000.0);
        let ratio = v[1] / v[0];
        for w in v.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
        let lin = Sweep::numeric_values(0.0, 10.0, 11, Spacing::Linear).unwrap();
        assert_eq!(lin[3], 3.0);
        assert!(Sweep::numeric_values(0.0, 1.0, 5, Spacing::Log).is_err());
        assert!(Sweep::numeric_values(2.0, 1.0, 5, Spacing::Linear).is_err());
    }

    #[test]
    fn baseline_added_when_absent() {
        let set = build_scenarios(&ScenarioSpec::mass_sweep(Baseline::Last), &records(), &[]).unwrap();
        assert_eq!(set.baseline, RecordId(1));
        assert_eq!(set.scenarios.len(), 51);
        assert!(set.scenarios[0].is_baseline);
        assert_eq!(set.scenarios[0].record, records()[1]);
        assert_eq!(set.scenarios.iter().filter(|s| s.is_baseline).count(), 1);
    }

    #[test]
    fn sweep_containing_baseline_keeps_cardinality() {
        let spec = ScenarioSpec {
            baseline: Baseline::Named("B".into()),
            axis: Axis::Country,
            sweep: Sweep::Labels(vec!["USA".into(), "Japan".into(), "India".into()]),
        };
        let set = build_scenarios(&spec, &records(), &[]).unwrap();
        assert_eq!(set.scenarios.len(), 3);
        assert!(set.scenarios[1].is_baseline);
        assert_eq!(set.scenarios[1].record, records()[1]);
    }

    #[test]
    fn only_the_swept_field_changes() {
        let base = records()[1].clone();
        for (axis, value) in [
            (Axis::LaunchMass, AxisValue::Number(42.0)),
            (Axis::Country, AxisValue::Label("ESA".into())),
            (Axis::Destination, AxisValue::Label("Mars".into())),
            (Axis::ContactType, AxisValue::Label("Orbiter".into())),
        ] {
            let h = with_value(&base, axis, &value).unwrap();
            assert_eq!(axis_value(&h, axis), value);
            let mut restored = h.clone();
            match axis.categorical() {
                None => restored.launch_mass = base.launch_mass,
                Some(c) => *restored.categorical_mut(c) = base.categorical(c).to_string(),
            }
            assert_eq!(restored, base);
        }
    }

    #[test]
    fn empty_label_sweep_uses_known_labels_and_literal_baselines_append() {
        let lit = MissionRecord::new("X", 2010.0, None, 100.0, "Mars", "Lander", "India").unwrap();
        let spec = ScenarioSpec::label_sweep(Baseline::Literal(lit.clone()), Axis::Destination);
        let known = vec!["Lunar".to_string(), "Mars".to_string()];
        let set = build_scenarios(&spec, &records(), &known).unwrap();
        assert_eq!(set.records.len(), 4);
        assert_eq!(set.records[3], lit);
        assert_eq!(set.scenarios.len(), 2);
        assert!(matches!(
            build_scenarios(&ScenarioSpec::mass_sweep(Baseline::Named("nope".into())), &records(), &[]),
            Err(ScenarioError::UnknownBaseline(_))
        ));
        let bad = ScenarioSpec {
            sweep: Sweep::Labels(vec!["x".into()]),
            ..ScenarioSpec::mass_sweep(Baseline::Last)
        };
        assert!(build_scenarios(&bad, &records(), &[]).is_err());
    }
}
