//! Feature engineering: min-max scaling, the log2 target transform, stride-1 sliding
//! windows, categorical vocabularies, chronological splits and moving averages.

mod windowed;

pub use windowed::{
    build_stage_data, export_examples_csv, stage_sequence, Phase, RecordId, StageData,
    StageEncoder, StageKind, StageTargets, WindowedExample,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("features: cannot fit a scaler on an empty training set")]
    EmptyTrainingSet,
    #[error("features: feature `{0}` is constant over the training set")]
    ConstantFeature(String),
    #[error("features: lifetime must be positive, got {0}")]
    NonPositiveLifetime(f64),
    #[error("features: sequence of length {len} is shorter than window {window}")]
    SequenceTooShort { len: usize, window: usize },
    #[error("features: window size must be at least 1")]
    ZeroWindow,
    #[error("features: split of {total} records at ratio {ratio} leaves an empty {partition} partition")]
    EmptyPartition {
        total: usize,
        ratio: f64,
        partition: &'static str,
    },
    #[error("features: split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("features: row {row} has {got} values, expected {expected}")]
    RaggedRows { row: usize, got: usize, expected: usize },
    #[error("features: {0}")]
    Dataset(String),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

/// Per-feature min/max in source units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    /// Fits on training rows only; `rows[i][j]` is feature `j` of row `i`.
    pub fn fit<S: AsRef<str>>(names: &[S], rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(FeatureError::EmptyTrainingSet);
        }
        let k = names.len();
        let mut min = vec![f64::INFINITY; k];
        let mut max = vec![f64::NEG_INFINITY; k];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(FeatureError::RaggedRows {
                    row: i,
                    got: row.len(),
                    expected: k,
                });
            }
            for j in 0..k {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        for j in 0..k {
            if max[j] == min[j] {
                log::warn!("{}", FeatureError::ConstantFeature(names[j].clone()));
            }
        }
        Ok(Self { names, min, max })
    }

    /// Single-feature convenience.
    pub fn fit_column(name: &str, values: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        Self::fit(&[name], &rows)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Maps feature `j` to `(v - min) / (max - min)`; constant features map to 0.
    /// Values outside the fitted range are not clamped.
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.0
        }
    }

    pub fn unscale(&self, j: usize, s: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            self.min[j] + s * span
        } else {
            self.min[j]
        }
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().enumerate().map(|(j, &v)| self.scale(j, v)).collect())
            .collect()
    }

    /// True when `v` falls outside the fitted range of feature `j`.
    pub fn is_extrapolation(&self, j: usize, v: f64) -> bool {
        v < self.min[j] || v > self.max[j]
    }
}

pub fn log2_target(lifetime: f64) -> Result<f64> {
    if lifetime > 0.0 && lifetime.is_finite() {
        Ok(lifetime.log2())
    } else {
        Err(FeatureError::NonPositiveLifetime(lifetime))
    }
}

/// Inverse of [`log2_target`].
pub fn exp2(v: f64) -> f64 {
    v.exp2()
}

/// All stride-1 windows of length `n`, oldest first.
pub fn make_windows<T>(sequence: &[T], n: usize) -> Result<Vec<&[T]>> {
    if n == 0 {
        return Err(FeatureError::ZeroWindow);
    }
    if sequence.len() < n {
        return Err(FeatureError::SequenceTooShort {
            len: sequence.len(),
            window: n,
        });
    }
    Ok(sequence.windows(n).collect())
}

/// Label-to-index map with index 0 reserved for labels not seen at fit time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: Vec<String>,
}

impl Vocabulary {
    /// Sorted distinct labels get indices `1..=len`.
    pub fn fit<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set: Vec<String> = labels.into_iter().map(str::to_string).collect();
        set.sort();
        set.dedup();
        Self { labels: set }
    }

    pub fn index(&self, label: &str) -> usize {
        match self.labels.binary_search_by(|l| l.as_str().cmp(label)) {
            Ok(i) => i + 1,
            Err(_) => 0,
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index(label) != 0
    }

    /// Distinct labels, excluding the reserved slot.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows needed in an embedding table: distinct labels plus the reserved row.
    pub fn table_rows(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Fits one vocabulary per categorical attribute and encodes every record.
pub fn encode_categoricals(
    records: &[crate::dataset::MissionRecord],
) -> (BTreeMap<crate::dataset::Categorical, Vocabulary>, Vec<[usize; 3]>) {
    use crate::dataset::Categorical;
    let vocabs: BTreeMap<Categorical, Vocabulary> = Categorical::ALL
        .iter()
        .map(|&c| (c, Vocabulary::fit(records.iter().map(|r| r.categorical(c)))))
        .collect();
    let idx = records
        .iter()
        .map(|r| {
            let mut out = [0usize; 3];
            for (k, c) in Categorical::ALL.iter().enumerate() {
                out[k] = vocabs[c].index(r.categorical(*c));
            }
            out
        })
        .collect();
    (vocabs, idx)
}

/// Partition sizes of a chronological three-way split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub outer_ratio: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSpec {
    /// Outer cut at `floor(ratio * N)`, inner cut of the first part at `floor(ratio * M)`.
    pub fn new(total: usize, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(FeatureError::InvalidRatio(ratio));
        }
        // The nudge keeps exact products such as 0.75 * 4 from flooring one short.
        let cut = |n: usize| ((ratio * n as f64) + 1e-9).floor() as usize;
        let outer = cut(total);
        let train = cut(outer);
        let spec = Self {
            outer_ratio: ratio,
            train,
            val: outer - train,
            test: total - outer,
        };
        for (n, partition) in [(spec.train, "train"), (spec.val, "validation"), (spec.test, "test")] {
            if n == 0 {
                return Err(FeatureError::EmptyPartition {
                    total,
                    ratio,
                    partition,
                });
            }
        }
        Ok(spec)
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    /// Partition of the `i`-th item in chronological order.
    pub fn partition_of(&self, i: usize) -> Partition {
        if i < self.train {
            Partition::Train
        } else if i < self.train + self.val {
            Partition::Validation
        } else {
            Partition::Test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// Splits items already sorted by the stage's key date.
pub fn time_split<T: Clone>(sorted: &[T], outer_ratio: f64) -> Result<(SplitSpec, Vec<T>, Vec<T>, Vec<T>)> {
    let spec = SplitSpec::new(sorted.len(), outer_ratio)?;
    let (train, rest) = sorted.split_at(spec.train);
    let (val, test) = rest.split_at(spec.val);
    Ok((spec, train.to_vec(), val.to_vec(), test.to_vec()))
}

/// Centered moving average of width `w`; the half-width `(w - 1) / 2` shrinks symmetrically
/// near either end so every window stays centered on its point.
pub fn moving_average(series: &[f64], w: usize) -> Vec<f64> {
    let half = w.saturating_sub(1) / 2;
    let n = series.len();
    (0..n)
        .map(|i| {
            let r = half.min(i).min(n - 1 - i);
            let slice = &series[i - r..=i + r];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}
