//! Mission and funding ingestion.
//!
//! Missions arrive as `name,launch_date,failure_date,launch_mass,destination,contact_type,country`
//! with dates either ISO `YYYY-MM-DD` or decimal years. Funding arrives as nominal yearly
//! values (`year,total_rd,defense_rd,space_rd,nasa_budget`) and may be deflated to constant
//! dollars with a `year,index` price series.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Header of `missions.csv`, in order.
pub const MISSION_COLUMNS: [&str; 7] = [
    "name",
    "launch_date",
    "failure_date",
    "launch_mass",
    "destination",
    "contact_type",
    "country",
];

/// Header of `funding.csv`, in order.
pub const FUNDING_COLUMNS: [&str; 5] = ["year", "total_rd", "defense_rd", "space_rd", "nasa_budget"];

/// Header of `deflator.csv`, in order.
pub const DEFLATOR_COLUMNS: [&str; 2] = ["year", "index"];

/// Label substituted for an empty categorical cell.
pub const UNKNOWN_CATEGORY: &str = "unknown";

/// Shortest lifetime (years) accepted for a failed record.
pub const MIN_LIFETIME_YEARS: f64 = 1e-4;

const DATE_RANGE: (f64, f64) = (1900.0, 2100.0);

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset: missing column `{0}`")]
    MissingColumn(String),
    #[error("dataset: row {row}: cannot parse column `{column}` from {value:?}")]
    UnparseableValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset: row {row}: {reason}")]
    InvariantViolation { row: usize, reason: String },
    #[error("dataset: failure date {failure} precedes launch date {launch} for `{name}`")]
    FailureBeforeLaunch {
        name: String,
        launch: f64,
        failure: f64,
    },
    #[error("dataset: observation date {observation} precedes launch date {launch} for `{name}`")]
    ObservationBeforeLaunch {
        name: String,
        launch: f64,
        observation: f64,
    },
    #[error("dataset: deflator has no index for year {0}")]
    MissingDeflatorYear(i32),
    #[error("dataset: deflator base year {0} has no index value")]
    MissingBaseYear(i32),
    #[error("dataset: funding series `{series}` has no value for year {year}")]
    MissingFundingYear { year: i32, series: String },
    #[error("dataset: `{0}` has no failure date to key on")]
    MissingKeyDate(String),
    #[error("dataset: funding series years are not contiguous ({0})")]
    NonContiguousYears(String),
    #[error("dataset: csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset: io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Inactive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Active => f.write_str("active"),
            Status::Inactive => f.write_str("inactive"),
        }
    }
}

/// The four yearly funding attributes, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FundingKind {
    TotalRd,
    DefenseRd,
    SpaceRd,
    NasaBudget,
}

impl FundingKind {
    pub const ALL: [FundingKind; 4] = [
        FundingKind::TotalRd,
        FundingKind::DefenseRd,
        FundingKind::SpaceRd,
        FundingKind::NasaBudget,
    ];

    pub fn column(self) -> &'static str {
        match self {
            FundingKind::TotalRd => "total_rd",
            FundingKind::DefenseRd => "defense_rd",
            FundingKind::SpaceRd => "space_rd",
            FundingKind::NasaBudget => "nasa_budget",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FundingKind::TotalRd => "Total R&D",
            FundingKind::DefenseRd => "National Defense R&D",
            FundingKind::SpaceRd => "Space R&D",
            FundingKind::NasaBudget => "NASA Budget",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Constant-dollar funding values (millions) attached to a record for its key year.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FundingValues {
    pub total_rd: f64,
    pub defense_rd: f64,
    pub space_rd: f64,
    pub nasa_budget: f64,
}

impl FundingValues {
    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            total_rd: v[0],
            defense_rd: v[1],
            space_rd: v[2],
            nasa_budget: v[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.total_rd, self.defense_rd, self.space_rd, self.nasa_budget]
    }

    pub fn get(&self, kind: FundingKind) -> f64 {
        self.to_array()[kind.index()]
    }
}

/// One event-lifetime observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionRecord {
    pub name: String,
    /// Decimal year.
    pub launch_date: f64,
    pub failure_date: Option<f64>,
    /// Years; present exactly when the record is inactive.
    pub lifetime: Option<f64>,
    pub status: Status,
    /// Kilograms.
    pub launch_mass: f64,
    pub destination: String,
    pub contact_type: String,
    pub country: String,
    pub funding: FundingValues,
}

/// Which date of a record keys time-indexed lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyDate {
    Launch,
    Failure,
}

impl MissionRecord {
    /// Builds a record, deriving status and lifetime from the dates and checking invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        launch_date: f64,
        failure_date: Option<f64>,
        launch_mass: f64,
        destination: impl Into<String>,
        contact_type: impl Into<String>,
        country: impl Into<String>,
    ) -> Result<Self, String> {
        let name = name.into();
        if !launch_date.is_finite() || launch_date < DATE_RANGE.0 || launch_date > DATE_RANGE.1 {
            return Err(format!("launch_date {launch_date} outside [1900, 2100]"));
        }
        if !(launch_mass.is_finite() && launch_mass > 0.0) {
            return Err(format!("launch_mass must be positive, got {launch_mass}"));
        }
        let lifetime = match failure_date {
            Some(f) => {
                if !f.is_finite() || f > DATE_RANGE.1 {
                    return Err(format!("failure_date {f} outside [1900, 2100]"));
                }
                if f < launch_date {
                    return Err(format!("failure_date {f} precedes launch_date {launch_date}"));
                }
                let l = f - launch_date;
                if l < MIN_LIFETIME_YEARS {
                    return Err(format!(
                        "lifetime {l} years is below the minimum {MIN_LIFETIME_YEARS}"
                    ));
                }
                Some(l)
            }
            None => None,
        };
        let category = |s: String| {
            if s.trim().is_empty() {
                UNKNOWN_CATEGORY.to_string()
            } else {
                s.trim().to_string()
            }
        };
        Ok(Self {
            name,
            launch_date,
            failure_date,
            lifetime,
            status: if failure_date.is_some() {
                Status::Inactive
            } else {
                Status::Active
            },
            launch_mass,
            destination: category(destination.into()),
            contact_type: category(contact_type.into()),
            country: category(country.into()),
            funding: FundingValues::default(),
        })
    }

    pub fn is_inactive(&self) -> bool {
        self.status == Status::Inactive
    }

    /// Age at `observation` for an operating record, or the lifetime for a failed one.
    pub fn age_at(&self, observation: f64) -> f64 {
        self.lifetime.unwrap_or(observation - self.launch_date)
    }

    pub fn key_date(&self, key: KeyDate) -> Option<f64> {
        match key {
            KeyDate::Launch => Some(self.launch_date),
            KeyDate::Failure => self.failure_date,
        }
    }

    pub fn categorical(&self, feature: Categorical) -> &str {
        match feature {
            Categorical::Destination => &self.destination,
            Categorical::ContactType => &self.contact_type,
            Categorical::Country => &self.country,
        }
    }

    pub fn categorical_mut(&mut self, feature: Categorical) -> &mut String {
        match feature {
            Categorical::Destination => &mut self.destination,
            Categorical::ContactType => &mut self.contact_type,
            Categorical::Country => &mut self.country,
        }
    }
}

/// The three categorical mission attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Categorical {
    Destination,
    ContactType,
    Country,
}

impl Categorical {
    pub const ALL: [Categorical; 3] = [
        Categorical::Destination,
        Categorical::ContactType,
        Categorical::Country,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Categorical::Destination => "destination",
            Categorical::ContactType => "contact_type",
            Categorical::Country => "country",
        }
    }
}

/// Converts a calendar date to `year + (day_of_year - 1) / days_in_year`.
pub fn decimal_year(date: NaiveDate) -> f64 {
    let year = date.year();
    let days_in_year = if date.leap_year() { 366.0 } else { 365.0 };
    year as f64 + (date.ordinal0() as f64) / days_in_year
}

/// Parses either an ISO `YYYY-MM-DD` date or a plain decimal year.
pub fn parse_date(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return Some(decimal_year(d));
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn header_positions<const N: usize>(
    headers: &csv::StringRecord,
    columns: &[&str; N],
) -> Result<[usize; N]> {
    let mut out = [0usize; N];
    for (slot, col) in out.iter_mut().zip(columns.iter()) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == *col)
            .ok_or_else(|| DatasetError::MissingColumn((*col).to_string()))?;
    }
    Ok(out)
}

fn parse_f64(row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DatasetError::UnparseableValue {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

/// Reads missions from a CSV file.
pub fn parse_missions(path: impl AsRef<Path>) -> Result<Vec<MissionRecord>> {
    let file = std::fs::File::open(path)?;
    read_missions(file)
}

/// Reads missions from any reader; row numbers in errors are 1-based data rows.
pub fn read_missions<R: Read>(reader: R) -> Result<Vec<MissionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = header_positions(&headers, &MISSION_COLUMNS)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |k: usize| row.get(pos[k]).unwrap_or("");
        let launch = parse_date(cell(1)).ok_or_else(|| DatasetError::UnparseableValue {
            row: row_no,
            column: "launch_date".into(),
            value: cell(1).into(),
        })?;
        let failure = if cell(2).is_empty() {
            None
        } else {
            Some(
                parse_date(cell(2)).ok_or_else(|| DatasetError::UnparseableValue {
                    row: row_no,
                    column: "failure_date".into(),
                    value: cell(2).into(),
                })?,
            )
        };
        let mass = parse_f64(row_no, "launch_mass", cell(3))?;
        let record =
            MissionRecord::new(cell(0), launch, failure, mass, cell(4), cell(5), cell(6))
                .map_err(|reason| DatasetError::InvariantViolation { row: row_no, reason })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes missions in the `missions.csv` schema with decimal-year dates.
pub fn write_missions<W: Write>(writer: W, records: &[MissionRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(MISSION_COLUMNS)?;
    for r in records {
        wtr.write_record([
            r.name.clone(),
            r.launch_date.to_string(),
            r.failure_date.map(|f| f.to_string()).unwrap_or_default(),
            r.launch_mass.to_string(),
            r.destination.clone(),
            r.contact_type.clone(),
            r.country.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Recomputes status and lifetime as seen at `observation_date`.
///
/// A failure recorded after the observation date is not yet known at that date, so such a
/// record is treated as still operating.
pub fn derive_lifetime_status(record: &MissionRecord, observation_date: f64) -> Result<MissionRecord> {
    if let Some(f) = record.failure_date {
        if f < record.launch_date {
            return Err(DatasetError::FailureBeforeLaunch {
                name: record.name.clone(),
                launch: record.launch_date,
                failure: f,
            });
        }
    }
    if observation_date < record.launch_date {
        return Err(DatasetError::ObservationBeforeLaunch {
            name: record.name.clone(),
            launch: record.launch_date,
            observation: observation_date,
        });
    }
    let mut out = record.clone();
    match record.failure_date {
        Some(f) if f <= observation_date => {
            out.status = Status::Inactive;
            out.lifetime = Some(f - record.launch_date);
        }
        _ => {
            out.status = Status::Active;
            out.failure_date = None;
            out.lifetime = None;
        }
    }
    Ok(out)
}

/// Sorts by the key date, then by launch date; records without the key date go last.
pub fn sort_by_key_date(records: &mut [MissionRecord], key: KeyDate) {
    records.sort_by(|a, b| {
        let ka = a.key_date(key).unwrap_or(f64::INFINITY);
        let kb = b.key_date(key).unwrap_or(f64::INFINITY);
        ka.total_cmp(&kb)
            .then(a.launch_date.total_cmp(&b.launch_date))
            .then(
                a.failure_date
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&b.failure_date.unwrap_or(f64::INFINITY)),
            )
    });
}

/// One named yearly series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundingSeries {
    pub kind: FundingKind,
    pub values: BTreeMap<i32, f64>,
}

impl FundingSeries {
    pub fn new(kind: FundingKind, values: BTreeMap<i32, f64>) -> Result<Self> {
        check_contiguous(values.keys().copied(), kind.column())?;
        if let Some((y, v)) = values.iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(DatasetError::InvariantViolation {
                row: 0,
                reason: format!("{} value {v} for year {y} must be non-negative", kind.column()),
            });
        }
        Ok(Self { kind, values })
    }

    pub fn get(&self, year: i32) -> Result<f64> {
        self.values
            .get(&year)
            .copied()
            .ok_or_else(|| DatasetError::MissingFundingYear {
                year,
                series: self.kind.column().to_string(),
            })
    }
}

fn check_contiguous(years: impl Iterator<Item = i32>, what: &str) -> Result<()> {
    let mut prev: Option<i32> = None;
    for y in years {
        if let Some(p) = prev {
            if y != p + 1 {
                return Err(DatasetError::NonContiguousYears(format!("{what}: {p} -> {y}")));
            }
        }
        prev = Some(y);
    }
    Ok(())
}

/// Price index used to convert nominal to constant dollars of `base_year`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deflator {
    pub values: BTreeMap<i32, f64>,
    pub base_year: i32,
}

impl Deflator {
    pub fn new(values: BTreeMap<i32, f64>, base_year: i32) -> Result<Self> {
        if let Some((y, v)) = values.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(DatasetError::InvariantViolation {
                row: 0,
                reason: format!("deflator index {v} for year {y} must be positive"),
            });
        }
        if !values.contains_key(&base_year) {
            return Err(DatasetError::MissingBaseYear(base_year));
        }
        Ok(Self { values, base_year })
    }

    /// Same price level expressed relative to another base year.
    pub fn rebased(&self, base_year: i32) -> Result<Self> {
        Self::new(self.values.clone(), base_year)
    }

    /// The reciprocal index, which undoes a deflation by `self`.
    pub fn inverted(&self) -> Self {
        Self {
            values: self.values.iter().map(|(y, v)| (*y, 1.0 / v)).collect(),
            base_year: self.base_year,
        }
    }
}

/// `value_constant(y) = value_nominal(y) * index(base) / index(y)`.
pub fn deflate(series: &FundingSeries, deflator: &Deflator) -> Result<FundingSeries> {
    let base = deflator.values[&deflator.base_year];
    let mut values = BTreeMap::new();
    for (&year, &v) in &series.values {
        let idx = deflator
            .values
            .get(&year)
            .ok_or(DatasetError::MissingDeflatorYear(year))?;
        let scaled = if year == deflator.base_year {
            v
        } else {
            v * base / idx
        };
        values.insert(year, scaled);
    }
    Ok(FundingSeries {
        kind: series.kind,
        values,
    })
}

/// The four funding series aligned by year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundingTable {
    rows: BTreeMap<i32, [f64; 4]>,
}

impl FundingTable {
    pub fn from_series(series: &[FundingSeries]) -> Result<Self> {
        let mut rows: BTreeMap<i32, [f64; 4]> = BTreeMap::new();
        for kind in FundingKind::ALL {
            let s = series
                .iter()
                .find(|s| s.kind == kind)
                .ok_or_else(|| DatasetError::MissingColumn(kind.column().to_string()))?;
            for (&y, &v) in &s.values {
                rows.entry(y).or_insert([f64::NAN; 4])[kind.index()] = v;
            }
        }
        if let Some((y, r)) = rows.iter().find(|(_, r)| r.iter().any(|v| v.is_nan())) {
            let kind = FundingKind::ALL[r.iter().position(|v| v.is_nan()).unwrap_or(0)];
            return Err(DatasetError::MissingFundingYear {
                year: *y,
                series: kind.column().to_string(),
            });
        }
        check_contiguous(rows.keys().copied(), "funding table")?;
        Ok(Self { rows })
    }

    pub fn series(&self) -> Vec<FundingSeries> {
        FundingKind::ALL
            .iter()
            .map(|&kind| FundingSeries {
                kind,
                values: self.rows.iter().map(|(y, r)| (*y, r[kind.index()])).collect(),
            })
            .collect()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.rows.keys().copied()
    }

    pub fn row(&self, year: i32) -> Result<[f64; 4]> {
        self.rows
            .get(&year)
            .copied()
            .ok_or_else(|| DatasetError::MissingFundingYear {
                year,
                series: "funding table".into(),
            })
    }

    /// Rows for years `end_year - n + 1 ..= end_year`, oldest first.
    pub fn window(&self, end_year: i32, n: usize) -> Result<Vec<[f64; 4]>> {
        (0..n as i32)
            .rev()
            .map(|back| self.row(end_year - back))
            .collect()
    }

    /// Trailing mean of one series over `end_year - w + 1 ..= end_year`.
    pub fn trailing_mean(&self, kind: FundingKind, w: usize, end_year: i32) -> Result<f64> {
        let rows = self.window(end_year, w).map_err(|e| match e {
            DatasetError::MissingFundingYear { year, .. } => DatasetError::MissingFundingYear {
                year,
                series: kind.column().to_string(),
            },
            other => other,
        })?;
        Ok(rows.iter().map(|r| r[kind.index()]).sum::<f64>() / w as f64)
    }
}

/// Reads nominal funding values as four series.
pub fn parse_funding(path: impl AsRef<Path>) -> Result<Vec<FundingSeries>> {
    read_funding(std::fs::File::open(path)?)
}

pub fn read_funding<R: Read>(reader: R) -> Result<Vec<FundingSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = header_positions(&headers, &FUNDING_COLUMNS)?;
    let mut maps: [BTreeMap<i32, f64>; 4] = Default::default();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let year_raw = row.get(pos[0]).unwrap_or("");
        let year = year_raw
            .trim()
            .parse::<i32>()
            .map_err(|_| DatasetError::UnparseableValue {
                row: row_no,
                column: "year".into(),
                value: year_raw.into(),
            })?;
        for (k, map) in maps.iter_mut().enumerate() {
            let col = FUNDING_COLUMNS[k + 1];
            let v = parse_f64(row_no, col, row.get(pos[k + 1]).unwrap_or(""))?;
            if v < 0.0 {
                return Err(DatasetError::InvariantViolation {
                    row: row_no,
                    reason: format!("{col} must be non-negative, got {v}"),
                });
            }
            map.insert(year, v);
        }
    }
    FundingKind::ALL
        .iter()
        .zip(maps)
        .map(|(&kind, values)| FundingSeries::new(kind, values))
        .collect()
}

pub fn write_funding<W: Write>(writer: W, table: &FundingTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(FUNDING_COLUMNS)?;
    for (y, r) in &table.rows {
        let mut rec = vec![y.to_string()];
        rec.extend(r.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn parse_deflator(path: impl AsRef<Path>, base_year: i32) -> Result<Deflator> {
    read_deflator(std::fs::File::open(path)?, base_year)
}

pub fn read_deflator<R: Read>(reader: R, base_year: i32) -> Result<Deflator> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = header_positions(&headers, &DEFLATOR_COLUMNS)?;
    let mut values = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let raw = row.get(pos[0]).unwrap_or("");
        let year = raw.parse::<i32>().map_err(|_| DatasetError::UnparseableValue {
            row: i + 1,
            column: "year".into(),
            value: raw.into(),
        })?;
        values.insert(year, parse_f64(i + 1, "index", row.get(pos[1]).unwrap_or(""))?);
    }
    Deflator::new(values, base_year)
}

/// Copies each series' value for `floor(key date)` into the record's funding fields.
pub fn join_funding(
    missions: &[MissionRecord],
    series: &[FundingSeries],
    key_date: KeyDate,
) -> Result<Vec<MissionRecord>> {
    missions
        .iter()
        .map(|m| {
            let key = m
                .key_date(key_date)
                .ok_or_else(|| DatasetError::MissingKeyDate(m.name.clone()))?;
            let year = key.floor() as i32;
            let mut vals = [0.0; 4];
            for kind in FundingKind::ALL {
                let s = series
                    .iter()
                    .find(|s| s.kind == kind)
                    .ok_or_else(|| DatasetError::MissingColumn(kind.column().to_string()))?;
                vals[kind.index()] = s.get(year)?;
            }
            let mut out = m.clone();
            out.funding = FundingValues::from_array(vals);
            Ok(out)
        })
        .collect()
}

/// One row of an attribute overview: numeric range or distinct values in first-seen order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSummary {
    pub attribute: String,
    pub data_type: String,
    pub values: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub active: usize,
    pub inactive: usize,
    pub attributes: Vec<AttributeSummary>,
}

fn range_row(attribute: &str, values: impl Iterator<Item = f64>, digits: usize) -> AttributeSummary {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    AttributeSummary {
        attribute: attribute.into(),
        data_type: "float64".into(),
        values: if lo.is_finite() {
            format!("{lo:.digits$} - {hi:.digits$}")
        } else {
            String::new()
        },
    }
}

fn levels_row<'a>(attribute: &str, values: impl Iterator<Item = &'a str>) -> AttributeSummary {
    let mut seen: Vec<&str> = Vec::new();
    for v in values {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    AttributeSummary {
        attribute: attribute.into(),
        data_type: "object".into(),
        values: seen.join("; "),
    }
}

/// Counts plus a per-attribute overview of `records` and, when given, the funding years they
/// launch in.
pub fn summarize(records: &[MissionRecord], funding: Option<&FundingTable>) -> DatasetSummary {
    let inactive = records.iter().filter(|r| r.is_inactive()).count();
    let mut attributes = vec![
        range_row("launch_date", records.iter().map(|r| r.launch_date), 3),
        range_row("failure_date", records.iter().filter_map(|r| r.failure_date), 3),
        range_row("lifetime", records.iter().filter_map(|r| r.lifetime), 3),
        levels_row("status", records.iter().map(|r| if r.is_inactive() { "inactive" } else { "active" })),
        range_row("launch_mass", records.iter().map(|r| r.launch_mass), 1),
    ];
    for c in Categorical::ALL {
        attributes.push(levels_row(c.column(), records.iter().map(|r| r.categorical(c))));
    }
    if let Some(table) = funding {
        for kind in FundingKind::ALL {
            let vals = records
                .iter()
                .filter_map(|r| table.row(r.launch_date.floor() as i32).ok())
                .map(|row| row[kind.index()]);
            attributes.push(range_row(kind.column(), vals, 2));
        }
    }
    DatasetSummary {
        records: records.len(),
        active: records.len() - inactive,
        inactive,
        attributes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const HEADER: &str = "name,launch_date,failure_date,launch_mass,destination,contact_type,country\n";

    #[test]
    fn iso_dates_become_decimal_years() {
        let csv = format!("{HEADER}Luna,1959-01-02,1959-01-05,361,Lunar,Flyby,Soviet Union\n");
        let recs = read_missions(csv.as_bytes()).unwrap();
        let r = &recs[0];
        // Hand calendar: Jan 2 is day 2 of 365, Jan 5 is day 5.
        assert_relative_eq!(r.launch_date, 1959.0 + 1.0 / 365.0, epsilon = 1e-12);
        assert_relative_eq!(r.lifetime.unwrap(), 3.0 / 365.0, epsilon = 1e-12);
        assert!((r.launch_date - 1959.003).abs() < 5e-4);
        assert!((r.lifetime.unwrap() - 0.008).abs() < 5e-4);
        assert_eq!(r.status, Status::Inactive);
    }

    #[test]
    fn leap_year_uses_366_days() {
        let d = NaiveDate::from_ymd_opt(2020, 12, 31).unwrap();
        assert_relative_eq!(decimal_year(d), 2020.0 + 365.0 / 366.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_failure_is_active() {
        let csv = format!("{HEADER}Probe,2020.5,,1000,Mars,Orbit,US\n");
        let r = &read_missions(csv.as_bytes()).unwrap()[0];
        assert_eq!(r.status, Status::Active);
        assert!(r.lifetime.is_none());
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "name,launch_date,launch_mass\nA,2000,1\n";
        match read_missions(csv.as_bytes()) {
            Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "failure_date"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_mass_is_unparseable_and_missing_mass_is_an_error() {
        let csv = format!("{HEADER}A,2000,,heavy,Mars,Orbit,US\n");
        assert!(matches!(
            read_missions(csv.as_bytes()),
            Err(DatasetError::UnparseableValue { row: 1, .. })
        ));
        let csv = format!("{HEADER}A,2000,,,Mars,Orbit,US\n");
        assert!(matches!(
            read_missions(csv.as_bytes()),
            Err(DatasetError::UnparseableValue { row: 1, .. })
        ));
    }

    #[test]
    fn tiny_or_reversed_lifetimes_are_rejected() {
        let csv = format!("{HEADER}A,2000.0,2000.00001,10,Mars,Orbit,US\n");
        assert!(matches!(
            read_missions(csv.as_bytes()),
            Err(DatasetError::InvariantViolation { row: 1, .. })
        ));
        let csv = format!("{HEADER}A,2000.0,1999.0,10,Mars,Orbit,US\n");
        assert!(matches!(
            read_missions(csv.as_bytes()),
            Err(DatasetError::InvariantViolation { row: 1, .. })
        ));
    }

    #[test]
    fn empty_categorical_maps_to_unknown() {
        let csv = format!("{HEADER}A,2000,,10,,Orbit,\n");
        let r = &read_missions(csv.as_bytes()).unwrap()[0];
        assert_eq!(r.destination, UNKNOWN_CATEGORY);
        assert_eq!(r.country, UNKNOWN_CATEGORY);
        assert_eq!(r.contact_type, "Orbit");
    }

    #[test]
    fn derive_status_examples() {
        let failed = MissionRecord::new("a", 2000.0, Some(2005.5), 1.0, "x", "y", "z").unwrap();
        let d = derive_lifetime_status(&failed, 2022.0).unwrap();
        assert_eq!(d.status, Status::Inactive);
        assert_eq!(d.lifetime, Some(5.5));

        let live = MissionRecord::new("b", 2020.0, None, 1.0, "x", "y", "z").unwrap();
        let d = derive_lifetime_status(&live, 2022.0).unwrap();
        assert_eq!(d.status, Status::Active);
        assert_eq!(d.age_at(2022.0), 2.0);

        let mut bad = failed.clone();
        bad.launch_date = 2000.0;
        bad.failure_date = Some(1999.0);
        assert!(matches!(
            derive_lifetime_status(&bad, 2022.0),
            Err(DatasetError::FailureBeforeLaunch { .. })
        ));
    }

    #[test]
    fn failure_after_observation_is_censored() {
        let r = MissionRecord::new("a", 2000.0, Some(2010.0), 1.0, "x", "y", "z").unwrap();
        let d = derive_lifetime_status(&r, 2005.0).unwrap();
        assert_eq!(d.status, Status::Active);
        assert_eq!(d.failure_date, None);
        assert_eq!(d.age_at(2005.0), 5.0);
    }

    fn series(kind: FundingKind, pairs: &[(i32, f64)]) -> FundingSeries {
        FundingSeries::new(kind, pairs.iter().copied().collect()).unwrap()
    }

    #[test]
    fn deflation_examples() {
        let s = series(FundingKind::NasaBudget, &[(2000, 100.0), (2001, 100.0)]);
        let d = Deflator::new([(2000, 50.0), (2001, 100.0)].into_iter().collect(), 2001).unwrap();
        let out = deflate(&s, &d).unwrap();
        assert_eq!(out.values[&2000], 200.0);
        assert_eq!(out.values[&2001], 100.0);
    }

    #[test]
    fn deflation_matches_spreadsheet_recomputation() {
        // value * index(base) / index(year), computed by hand.
        let s = series(
            FundingKind::TotalRd,
            &[(1990, 1000.0), (1991, 1100.0), (1992, 1250.0)],
        );
        let d = Deflator::new(
            [(1990, 130.7), (1991, 136.2), (1992, 140.3)].into_iter().collect(),
            1992,
        )
        .unwrap();
        let out = deflate(&s, &d).unwrap();
        let expect = [1000.0 * 140.3 / 130.7, 1100.0 * 140.3 / 136.2, 1250.0];
        for (got, want) in out.values.values().zip(expect) {
            assert!((got - want).abs() < 1e-9);
        }
        assert_eq!(out.values.keys().copied().collect::<Vec<_>>(), vec![1990, 1991, 1992]);
    }

    #[test]
    fn deflation_missing_year() {
        let s = series(FundingKind::TotalRd, &[(1990, 1.0), (1991, 1.0)]);
        let d = Deflator::new([(1991, 1.0)].into_iter().collect(), 1991).unwrap();
        assert!(matches!(deflate(&s, &d), Err(DatasetError::MissingDeflatorYear(1990))));
    }

    #[test]
    fn deflation_round_trips_through_inverse() {
        let s = series(FundingKind::SpaceRd, &[(1990, 10.0), (1991, 17.5), (1992, 3.25)]);
        let d = Deflator::new(
            [(1990, 0.8), (1991, 0.93), (1992, 1.0)].into_iter().collect(),
            1992,
        )
        .unwrap();
        let there = deflate(&s, &d).unwrap();
        let back = deflate(&there, &d.inverted()).unwrap();
        for (a, b) in s.values.values().zip(back.values.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn non_contiguous_series_rejected() {
        let r = FundingSeries::new(FundingKind::TotalRd, [(1990, 1.0), (1992, 1.0)].into_iter().collect());
        assert!(matches!(r, Err(DatasetError::NonContiguousYears(_))));
    }

    #[test]
    fn join_uses_floor_of_key_year() {
        let all: Vec<FundingSeries> = FundingKind::ALL
            .iter()
            .enumerate()
            .map(|(k, &kind)| series(kind, &[(2000, k as f64), (2001, 10.0 + k as f64)]))
            .collect();
        let r = MissionRecord::new("a", 2000.9, Some(2001.2), 5.0, "x", "y", "z").unwrap();
        let by_launch = join_funding(std::slice::from_ref(&r), &all, KeyDate::Launch).unwrap();
        assert_eq!(by_launch[0].funding.to_array(), [0.0, 1.0, 2.0, 3.0]);
        let by_fail = join_funding(std::slice::from_ref(&r), &all, KeyDate::Failure).unwrap();
        assert_eq!(by_fail[0].funding.to_array(), [10.0, 11.0, 12.0, 13.0]);

        let late = MissionRecord::new("b", 2003.0, None, 5.0, "x", "y", "z").unwrap();
        assert!(matches!(
            join_funding(&[late.clone()], &all, KeyDate::Launch),
            Err(DatasetError::MissingFundingYear { year: 2003, .. })
        ));
        assert!(matches!(
            join_funding(&[late], &all, KeyDate::Failure),
            Err(DatasetError::MissingKeyDate(_))
        ));
    }

    #[test]
    fn funding_table_windows() {
        let all: Vec<FundingSeries> = FundingKind::ALL
            .iter()
            .map(|&kind| series(kind, &[(2000, 1.0), (2001, 2.0), (2002, 6.0)]))
            .collect();
        let t = FundingTable::from_series(&all).unwrap();
        let w = t.window(2002, 2).unwrap();
        assert_eq!(w, vec![[2.0; 4], [6.0; 4]]);
        assert_eq!(t.trailing_mean(FundingKind::SpaceRd, 3, 2002).unwrap(), 3.0);
        assert!(t.window(2002, 4).is_err());
    }

    #[test]
    fn summary_counts_and_ranges() {
        let recs = vec![
            MissionRecord::new("a", 1960.0, Some(1961.5), 100.0, "Lunar", "Impact", "US").unwrap(),
            MissionRecord::new("b", 1970.0, None, 50.0, "Mars", "Orbit", "US").unwrap(),
        ];
        let s = summarize(&recs, None);
        assert_eq!((s.records, s.active, s.inactive), (2, 1, 1));
        assert_eq!(s.attributes[0].values, "1960.000 - 1970.000");
        assert_eq!(s.attributes[2].values, "1.500 - 1.500");
        assert_eq!(s.attributes[3].values, "inactive; active");
        assert_eq!(s.attributes[5].values, "Lunar; Mars");
    }
}
