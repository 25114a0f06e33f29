//! Log-linear OLS baseline for log2 lifetime with a VIF-gated search over funding
//! regressors and trailing moving-average windows, scored by chronological k-fold CV.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Categorical, FundingKind, FundingTable, MissionRecord};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("benchmark: design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },
    #[error("benchmark: need more rows than columns ({rows} rows, {columns} columns)")]
    Underdetermined { rows: usize, columns: usize },
    #[error("benchmark: no candidate keeps every VIF below {0}")]
    NoQualifyingModel(f64),
    #[error("benchmark: {0}")]
    Data(String),
    #[error("benchmark: {0}")]
    Csv(#[from] csv::Error),
    #[error("benchmark: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchmarkError>;

/// Pairwise Pearson correlations of equally long columns.
pub fn pearson_matrix(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let stats: Vec<(f64, f64)> = columns
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let s = c.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt();
            (m, s)
        })
        .collect();
    let k = columns.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j {
                1.0
            } else {
                let cov: f64 = columns[i]
                    .iter()
                    .zip(&columns[j])
                    .map(|(a, b)| (a - stats[i].0) * (b - stats[j].0))
                    .sum();
                (cov / (stats[i].1 * stats[j].1)).clamp(-1.0, 1.0)
            };
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    out
}

/// Coefficients of a least-squares fit, in design-column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// Sum of squared residuals divided by `rows - columns`.
    pub residual_variance: f64,
}

fn residual_variance(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let dof = x.nrows().saturating_sub(x.ncols()).max(1);
    (y - x * beta).norm_squared() / dof as f64
}

/// Full-rank least squares by Householder QR.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (rows, columns) = x.shape();
    if rows <= columns {
        return Err(BenchmarkError::Underdetermined { rows, columns });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = diag_max * 1e-10;
    let rank = r.diagonal().iter().filter(|v| v.abs() > tol).count();
    if rank < columns {
        return Err(BenchmarkError::RankDeficient { rank, columns });
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(BenchmarkError::RankDeficient { rank, columns })?;
    Ok(OlsFit {
        residual_variance: residual_variance(x, y, &beta),
        coefficients: beta.iter().copied().collect(),
    })
}

/// Minimum-norm least squares by SVD; tolerates collinear columns.
pub fn min_norm_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let beta = svd
        .solve(y, smax * 1e-12)
        .map_err(|e| BenchmarkError::Data(e.to_string()))?;
    Ok(OlsFit {
        residual_variance: residual_variance(x, y, &beta),
        coefficients: beta.iter().copied().collect(),
    })
}

/// VIF of each column of `x` (without an intercept column); an intercept is added to each
/// auxiliary regression. Perfectly explained or constant columns give `+inf`.
pub fn vif(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, k) = x.shape();
    (0..k)
        .map(|j| {
            let y = x.column(j).into_owned();
            let mean = y.mean();
            let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
            if sst <= f64::EPSILON * mean.abs().max(1.0) * n as f64 {
                return f64::INFINITY;
            }
            let mut others = DMatrix::from_element(n, k, 1.0);
            let mut c = 1;
            for i in 0..k {
                if i != j {
                    others.set_column(c, &x.column(i));
                    c += 1;
                }
            }
            let Ok(fit) = min_norm_fit(&others, &y) else {
                return f64::INFINITY;
            };
            let beta = DVector::from_vec(fit.coefficients);
            let ssr = (&y - &others * beta).norm_squared();
            let r2 = 1.0 - ssr / sst;
            if r2 >= 1.0 - 1e-10 {
                f64::INFINITY
            } else {
                1.0 / (1.0 - r2)
            }
        })
        .collect()
}

/// Mean of `kind` over years `year - window + 1 ..= year`.
pub fn moving_average_feature(table: &FundingTable, kind: FundingKind, window: usize, year: i32) -> Result<f64> {
    table
        .trailing_mean(kind, window, year)
        .map_err(|e| BenchmarkError::Data(e.to_string()))
}

/// Funding regressors in their documented order.
pub const SEARCH_ORDER: [FundingKind; 4] = [
    FundingKind::NasaBudget,
    FundingKind::DefenseRd,
    FundingKind::SpaceRd,
    FundingKind::TotalRd,
];

/// Nonempty subsets, largest first, lexicographic within a size.
pub fn funding_subsets(kinds: &[FundingKind]) -> Vec<Vec<FundingKind>> {
    let n = kinds.len();
    let mut out = Vec::new();
    for size in (1..=n).rev() {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| kinds[i]).collect());
            let mut i = size;
            while i > 0 && idx[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// One-hot levels per categorical attribute, with the most frequent level (then the
/// alphabetically first) as the dropped reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyEncoding {
    pub levels: Vec<(Categorical, String, Vec<String>)>,
}

impl DummyEncoding {
    pub fn fit(records: &[&MissionRecord]) -> Self {
        let levels = Categorical::ALL
            .iter()
            .map(|&c| {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for r in records {
                    *counts.entry(r.categorical(c)).or_default() += 1;
                }
                let reference = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(k, _)| k.to_string())
                    .unwrap_or_default();
                let rest = counts.keys().filter(|k| **k != reference).map(|k| k.to_string()).collect();
                (c, reference, rest)
            })
            .collect();
        Self { levels }
    }

    pub fn width(&self) -> usize {
        self.levels.iter().map(|l| l.2.len()).sum()
    }

    pub fn names(&self) -> Vec<String> {
        self.levels
            .iter()
            .flat_map(|(c, _, lv)| lv.iter().map(move |l| format!("{}={l}", c.column())))
            .collect()
    }

    /// Unknown labels encode as the reference level.
    pub fn encode(&self, r: &MissionRecord) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (c, _, lv) in &self.levels {
            let v = r.categorical(*c);
            out.extend(lv.iter().map(|l| if l == v { 1.0 } else { 0.0 }));
        }
        out
    }
}

/// Regressor choice for one candidate model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub funding: Vec<FundingKind>,
    pub window: usize,
    pub dummies: bool,
}

impl ModelSpec {
    pub fn numeric_names(&self) -> Vec<String> {
        let mut v = vec!["launch_date".to_string(), "log2_launch_mass".to_string()];
        v.extend(self.funding.iter().map(|k| format!("log2_{}", k.column())));
        v
    }
}

fn numeric_row(r: &MissionRecord, table: &FundingTable, spec: &ModelSpec) -> Result<Vec<f64>> {
    let mut row = vec![r.launch_date, r.launch_mass.log2()];
    let year = r.launch_date.floor() as i32;
    for &k in &spec.funding {
        let m = moving_average_feature(table, k, spec.window, year)?;
        if m <= 0.0 {
            return Err(BenchmarkError::Data(format!(
                "{} trailing mean is not positive at {year}",
                k.column()
            )));
        }
        row.push(m.log2());
    }
    Ok(row)
}

fn design(
    records: &[&MissionRecord],
    table: &FundingTable,
    spec: &ModelSpec,
    enc: &DummyEncoding,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let numeric: Vec<Vec<f64>> = records
        .iter()
        .map(|r| numeric_row(r, table, spec))
        .collect::<Result<_>>()?;
    let p = spec.numeric_names().len();
    let d = if spec.dummies { enc.width() } else { 0 };
    let mut x = DMatrix::from_element(records.len(), 1 + p + d, 1.0);
    let mut num = DMatrix::zeros(records.len(), p);
    for (i, r) in records.iter().enumerate() {
        for j in 0..p {
            x[(i, 1 + j)] = numeric[i][j];
            num[(i, j)] = numeric[i][j];
        }
        if spec.dummies {
            for (j, v) in enc.encode(r).into_iter().enumerate() {
                x[(i, 1 + p + j)] = v;
            }
        }
    }
    Ok((x, num))
}

fn targets(records: &[&MissionRecord]) -> Result<DVector<f64>> {
    records
        .iter()
        .map(|r| {
            r.lifetime
                .map(f64::log2)
                .ok_or_else(|| BenchmarkError::Data(format!("`{}` has no lifetime", r.name)))
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

/// A fitted baseline that can score new records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub spec: ModelSpec,
    pub encoding: DummyEncoding,
    /// `intercept`, launch date, log2 mass, funding terms, dummies.
    pub names: Vec<String>,
    pub fit: OlsFit,
}

/// Strict full-rank fit on the given failed records.
pub fn fit_benchmark(records: &[&MissionRecord], table: &FundingTable, spec: &ModelSpec) -> Result<RegressionModel> {
    let enc = DummyEncoding::fit(records);
    let (x, _) = design(records, table, spec, &enc)?;
    let fit = ols_fit(&x, &targets(records)?)?;
    let mut names = vec!["intercept".to_string()];
    names.extend(spec.numeric_names());
    if spec.dummies {
        names.extend(enc.names());
    }
    Ok(RegressionModel {
        spec: spec.clone(),
        encoding: enc,
        names,
        fit,
    })
}

/// Predicted log2 lifetime.
pub fn benchmark_predict(model: &RegressionModel, record: &MissionRecord, table: &FundingTable) -> Result<f64> {
    let mut row = vec![1.0];
    row.extend(numeric_row(record, table, &model.spec)?);
    if model.spec.dummies {
        row.extend(model.encoding.encode(record));
    }
    Ok(row.iter().zip(&model.fit.coefficients).map(|(a, b)| a * b).sum())
}

/// Contiguous fold boundaries; the first `n % k` folds get one extra record.
pub fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Mean validation RMSE over `k` contiguous chronological folds.
pub fn kfold_cv_rmse(records: &[&MissionRecord], table: &FundingTable, spec: &ModelSpec, k: usize) -> Result<f64> {
    if k < 2 || k > records.len() {
        return Err(BenchmarkError::Data(format!("cannot make {k} folds from {} records", records.len())));
    }
    let mut sorted: Vec<&MissionRecord> = records.to_vec();
    sorted.sort_by(|a, b| a.launch_date.total_cmp(&b.launch_date));
    let mut total = 0.0;
    for fold in fold_ranges(sorted.len(), k) {
        let train: Vec<&MissionRecord> = sorted[..fold.start].iter().chain(&sorted[fold.end..]).copied().collect();
        let val = &sorted[fold.clone()];
        let enc = DummyEncoding::fit(&train);
        let (xt, _) = design(&train, table, spec, &enc)?;
        let fit = min_norm_fit(&xt, &targets(&train)?)?;
        let (xv, _) = design(val, table, spec, &enc)?;
        let pred = xv * DVector::from_vec(fit.coefficients);
        let yv = targets(val)?;
        total += ((yv - pred).norm_squared() / val.len() as f64).sqrt();
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Index into `SearchResult::subsets`.
    pub subset: usize,
    pub window: usize,
    pub mean_rmse: f64,
    pub max_vif: f64,
    pub qualified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub model_no: usize,
    pub funding: Vec<FundingKind>,
    pub lowest_mean_rmse: f64,
    pub best_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub subsets: Vec<SubsetSummary>,
    pub evaluations: Vec<Evaluation>,
    /// Index into `evaluations` of the qualified candidate with the lowest mean RMSE.
    pub selected: usize,
    /// `(regressor, VIF)` of the selected model.
    pub vif_table: Vec<(String, f64)>,
}

impl SearchResult {
    pub fn selected_spec(&self, dummies: bool) -> ModelSpec {
        let e = &self.evaluations[self.selected];
        ModelSpec {
            funding: self.subsets[e.subset].funding.clone(),
            window: e.window,
            dummies,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub funding: Vec<FundingKind>,
    pub windows: RangeInclusive<usize>,
    pub vif_threshold: f64,
    pub folds: usize,
    pub dummies: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            funding: SEARCH_ORDER.to_vec(),
            windows: 1..=20,
            vif_threshold: 5.0,
            folds: 5,
            dummies: true,
        }
    }
}

/// Every subset × window candidate, scored by CV RMSE and gated by VIF on the full fit set.
pub fn feature_search(records: &[&MissionRecord], table: &FundingTable, config: &SearchConfig) -> Result<SearchResult> {
    let subsets = funding_subsets(&config.funding);
    let jobs: Vec<(usize, usize)> = (0..subsets.len())
        .flat_map(|s| config.windows.clone().map(move |w| (s, w)))
        .collect();
    let evaluations = jobs
        .par_iter()
        .map(|&(s, window)| {
            let spec = ModelSpec {
                funding: subsets[s].clone(),
                window,
                dummies: config.dummies,
            };
            let mean_rmse = kfold_cv_rmse(records, table, &spec, config.folds)?;
            let (_, numeric) = design(records, table, &spec, &DummyEncoding::fit(records))?;
            let max_vif = vif(&numeric).into_iter().fold(0.0f64, f64::max);
            Ok(Evaluation {
                subset: s,
                window,
                mean_rmse,
                max_vif,
                qualified: max_vif < config.vif_threshold,
            })
        })
        .collect::<Vec<Result<Evaluation>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summaries = subsets
        .iter()
        .enumerate()
        .map(|(s, f)| {
            let best = evaluations
                .iter()
                .filter(|e| e.subset == s)
                .min_by(|a, b| a.mean_rmse.total_cmp(&b.mean_rmse).then(a.window.cmp(&b.window)))
                .expect("each subset has at least one window");
            SubsetSummary {
                model_no: s + 1,
                funding: f.clone(),
                lowest_mean_rmse: best.mean_rmse,
                best_window: best.window,
            }
        })
        .collect();
    let selected = evaluations
        .iter()
        .enumerate()
        .filter(|(_, e)| e.qualified && e.mean_rmse.is_finite())
        .min_by(|a, b| a.1.mean_rmse.total_cmp(&b.1.mean_rmse).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(BenchmarkError::NoQualifyingModel(config.vif_threshold))?;
    let e = &evaluations[selected];
    let spec = ModelSpec {
        funding: subsets[e.subset].clone(),
        window: e.window,
        dummies: config.dummies,
    };
    let (_, numeric) = design(records, table, &spec, &DummyEncoding::fit(records))?;
    let vif_table = spec.numeric_names().into_iter().zip(vif(&numeric)).collect();
    Ok(SearchResult {
        subsets: summaries,
        evaluations,
        selected,
        vif_table,
    })
}

fn subset_label(f: &[FundingKind]) -> String {
    f.iter().map(|k| k.label()).collect::<Vec<_>>().join("; ")
}

/// `model_no,variables,lowest_mean_rmse,best_window`.
pub fn write_search_csv<W: Write>(writer: W, result: &SearchResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model_no", "variables", "lowest_mean_rmse", "best_window"])?;
    for s in &result.subsets {
        w.write_record([
            s.model_no.to_string(),
            subset_label(&s.funding),
            format!("{:.4}", s.lowest_mean_rmse),
            s.best_window.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `variable,vif` for the selected model.
pub fn write_vif_csv<W: Write>(writer: W, result: &SearchResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variable", "vif"])?;
    for (name, v) in &result.vif_table {
        w.write_record([name.clone(), format!("{v:.3}")])?;
    }
    w.flush()?;
    Ok(())
}
