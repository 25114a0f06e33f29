use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use steti::benchmark::{
    benchmark_predict, feature_search, fit_benchmark, write_search_csv, write_vif_csv, SearchConfig, SEARCH_ORDER,
};
use steti::dataset::{
    deflate, derive_lifetime_status, parse_deflator, parse_funding, parse_missions, summarize, write_funding,
    write_missions, FundingTable, MissionRecord,
};
use steti::features::RecordId;
use steti::hypertune::{StudyConfig, TpeConfig};
use steti::scenario::{
    build_scenarios, predict_scenarios, write_scenario_csv, Axis, Baseline, ScenarioResult, ScenarioSpec,
};
use steti::steti::{
    censoring_diagnostic, compare_models, failure_fit_objective, fit_closed_form, fit_naive, grid_csv,
    launch_curve, ledger_path, phase_summary, read_checkpoint, rmse, run_phase, write_checkpoint,
    write_diagnostic_csv, write_history_csv, Checkpoint, PhaseConfig, PhaseOutcome, StageHyper, StageResult,
    TrainBudget, TrendParams, Tuning,
};

use crate::config::{PhaseName, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub struct Data {
    pub records: Vec<MissionRecord>,
    pub funding: Option<FundingTable>,
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("config: {what} file {} does not exist", path.display())))
    }
}

pub fn load(cfg: &RunConfig) -> Result<Data> {
    let p = &cfg.paths;
    require(&p.missions, "missions")?;
    let mut records = parse_missions(&p.missions)?;
    if let Some(obs) = cfg.observation_date {
        records = records
            .iter()
            .map(|r| derive_lifetime_status(r, obs))
            .collect::<std::result::Result<_, _>>()?;
    }
    let funding = match &p.funding {
        None => None,
        Some(path) => {
            require(path, "funding")?;
            let mut series = parse_funding(path)?;
            if let Some(dpath) = &p.deflator {
                require(dpath, "deflator")?;
                let base = match p.deflator_base_year {
                    Some(y) => y,
                    None => series
                        .iter()
                        .filter_map(|s| s.values.keys().next_back().copied())
                        .max()
                        .ok_or_else(|| CliError::Validation("dataset: funding file has no rows".into()))?,
                };
                let deflator = parse_deflator(dpath, base)?;
                series = series
                    .iter()
                    .map(|s| deflate(s, &deflator))
                    .collect::<std::result::Result<_, _>>()?;
            }
            Some(FundingTable::from_series(&series)?)
        }
    };
    Ok(Data { records, funding })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_bytes(path, &buf)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let dir = cfg.paths.out.join("ingest");
    let summary = summarize(&data.records, data.funding.as_ref());
    write_json(&dir.join("summary.json"), &summary)?;
    write_with(&dir.join("attributes.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["attribute", "data_type", "values"])
            .and_then(|_| {
                summary
                    .attributes
                    .iter()
                    .try_for_each(|a| w.write_record([&a.attribute, &a.data_type, &a.values]))
            })
            .and_then(|_| w.flush().map_err(Into::into))
            .map_err(|e| CliError::Runtime(format!("csv: {e}")))
    })?;
    write_with(&dir.join("missions.csv"), |buf| Ok(write_missions(buf, &data.records)?))?;
    if let Some(table) = &data.funding {
        write_with(&dir.join("funding.csv"), |buf| Ok(write_funding(buf, table)?))?;
    }
    println!(
        "ingest: {} records ({} active, {} inactive)",
        summary.records, summary.active, summary.inactive
    );
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    failed_records: usize,
    closed_form: TrendParams,
    closed_form_objective: f64,
    naive: TrendParams,
}

pub fn steti_fit(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let failed: Vec<&MissionRecord> = data.records.iter().filter(|r| r.lifetime.is_some()).collect();
    let by_failure: Vec<(f64, f64)> = failed
        .iter()
        .filter_map(|r| Some((r.failure_date?, r.lifetime?)))
        .collect();
    let by_launch: Vec<(f64, f64)> = failed.iter().filter_map(|r| Some((r.launch_date, r.lifetime?))).collect();
    let epoch = cfg.steti_fit.epoch;
    let corrected = fit_closed_form(&by_failure, epoch)?;
    let naive = fit_naive(&by_launch, epoch)?;
    let dir = cfg.paths.out.join("steti_fit");
    write_json(
        &dir.join("params.json"),
        &FitReport {
            failed_records: failed.len(),
            closed_form: corrected,
            closed_form_objective: failure_fit_objective(&by_failure, &corrected)?,
            naive,
        },
    )?;
    let (lo, hi) = data
        .records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.launch_date), hi.max(r.launch_date)));
    let mut curve = String::from("launch_date,corrected_lifetime,naive_lifetime\n");
    for year in lo.floor() as i32..=hi.ceil() as i32 {
        let t = f64::from(year);
        let _ = writeln!(curve, "{t},{},{}", launch_curve(t, &corrected), launch_curve(t, &naive));
    }
    write_bytes(&dir.join("curve.csv"), curve.as_bytes())?;
    let rows = censoring_diagnostic(&data.records, &corrected, &naive, cfg.steti_fit.smoothing_window);
    write_with(&dir.join("diagnostic.csv"), |buf| Ok(write_diagnostic_csv(buf, &rows)?))?;
    println!(
        "steti-fit: {} failed records; corrected base {:.4} y, doubling {:.3} y; naive doubling {:.3} y",
        failed.len(),
        corrected.base_lifetime,
        corrected.doubling_time,
        naive.doubling_time
    );
    Ok(())
}

fn phase_config(cfg: &RunConfig, phase: PhaseName) -> Result<PhaseConfig> {
    let t = &cfg.train;
    let mut pc = PhaseConfig::new(phase.phase(), cfg.seed);
    pc.split_ratios = t.split_ratios.clone();
    pc.batch_sizes = t.batch_sizes.iter().map(|b| b.resolve()).collect::<Result<_>>()?;
    pc.budget = TrainBudget {
        max_epochs: t.max_epochs,
        patience: t.patience,
    };
    pc.hidden_size = t.hidden_size;
    Ok(pc)
}

fn test_records(stage: &StageResult) -> Vec<RecordId> {
    stage.best_cell().data.test.iter().map(|e| e.record).collect()
}

fn names(records: &[MissionRecord], ids: &[RecordId]) -> Vec<String> {
    ids.iter().map(|id| records[id.0].name.clone()).collect()
}

fn write_stage(dir: &Path, tag: &str, stage: &StageResult, records: &[MissionRecord], history: bool) -> Result<String> {
    write_bytes(&dir.join(format!("{tag}_grid.csv")), grid_csv(stage).as_bytes())?;
    let file = format!("{tag}_model.json");
    let ck = Checkpoint::new(stage.best_cell().model.clone()).with_test_records(names(records, &test_records(stage)));
    write_with(&dir.join(&file), |buf| Ok(write_checkpoint(buf, &ck)?))?;
    if history {
        write_with(&dir.join(format!("{tag}_history.csv")), |buf| {
            Ok(write_history_csv(buf, &stage.best_cell().history)?)
        })?;
    }
    Ok(file)
}

fn write_phase(dir: &Path, outcome: &PhaseOutcome, records: &[MissionRecord], history: bool) -> Result<()> {
    let c1 = write_stage(dir, "stage1", &outcome.stage1, records, history)?;
    let c2 = write_stage(dir, "stage2", &outcome.stage2, records, history)?;
    write_json(&dir.join("summary.json"), &phase_summary(outcome, [Some(c1), Some(c2)]))
}

fn run_phases(
    cfg: &RunConfig,
    data: &Data,
    phases: &[PhaseName],
    root: &Path,
    mut adjust: impl FnMut(PhaseName, &mut PhaseConfig) -> Result<()>,
) -> Result<Vec<(PhaseName, PhaseOutcome)>> {
    let mut outcomes = Vec::new();
    for &phase in phases {
        let mut pc = phase_config(cfg, phase)?;
        adjust(phase, &mut pc)?;
        info!("{}: training", phase.as_str());
        let outcome = run_phase(&pc, &data.records, data.funding.as_ref())?;
        write_phase(&root.join(phase.as_str()), &outcome, &data.records, cfg.train.write_history)?;
        let s2 = outcome.stage2.best_cell();
        println!(
            "{}: stage 1 test RMSE {:.4}, stage 2 test RMSE {:.4} ({} {} batch {})",
            phase.as_str(),
            outcome.stage1.best_cell().test_rmse,
            s2.test_rmse,
            s2.setting.label(),
            s2.split_ratio,
            s2.batch_size.label()
        );
        outcomes.push((phase, outcome));
    }
    Ok(outcomes)
}

/// Writes `best_model.json` and, with two phases, their comparison on shared test records.
fn pick_best(root: &Path, data: &Data, outcomes: &[(PhaseName, PhaseOutcome)]) -> Result<()> {
    let winner = match outcomes {
        [] => return Ok(()),
        [(_, only)] => only,
        [(pa, a), (pb, b), ..] => {
            let ta: BTreeSet<RecordId> = test_records(&a.stage2).into_iter().collect();
            let shared: Vec<RecordId> = test_records(&b.stage2).into_iter().filter(|id| ta.contains(id)).collect();
            if shared.is_empty() {
                return Err(CliError::Runtime("steti: phases share no test records to compare on".into()));
            }
            let cmp = compare_models(
                [(pa.as_str(), a.model()), (pb.as_str(), b.model())],
                &data.records,
                data.funding.as_ref(),
                &shared,
            )?;
            write_json(&root.join("comparison.json"), &cmp)?;
            println!("compare: {} wins ({:.4} vs {:.4})", cmp.winner, cmp.rmse[0], cmp.rmse[1]);
            if cmp.winner == pa.as_str() {
                a
            } else {
                b
            }
        }
    };
    let ck = Checkpoint::new(winner.model().clone())
        .with_test_records(names(&data.records, &test_records(&winner.stage2)));
    write_with(&root.join("best_model.json"), |buf| Ok(write_checkpoint(buf, &ck)?))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let root = cfg.paths.out.join("train");
    let outcomes = run_phases(cfg, &data, &cfg.train.phases, &root, |phase, pc| {
        if let Some(path) = cfg.train.hyperparams.get(&phase) {
            require(path, "hyperparameter")?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
            let hp: StageHyper = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config: {}: {e}", path.display())))?;
            pc.tuning = Tuning::Supplied(hp);
        }
        Ok(())
    })?;
    pick_best(&root, &data, &outcomes)
}

pub fn tune(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let root = cfg.paths.out.join("tune");
    let study = StudyConfig {
        max_trials: cfg.tune.max_trials,
        seed: cfg.tune.seed.unwrap_or(cfg.seed),
        tpe: TpeConfig::default(),
        record_wall_time: false,
    };
    let outcomes = run_phases(cfg, &data, &cfg.tune.phases, &root, |phase, pc| {
        let dir = root.join(phase.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
        if !cfg.tune.resume {
            for stage in [steti::features::StageKind::FailureTime, steti::features::StageKind::LaunchTime] {
                let path = ledger_path(&dir, stage);
                if path.exists() {
                    std::fs::remove_file(&path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
                }
            }
        }
        pc.tuning = Tuning::Search(study.clone());
        pc.tuning_ledgers = Some(dir);
        Ok(())
    })?;
    for (phase, outcome) in &outcomes {
        let best = |s: &StageResult| {
            s.tuning
                .as_ref()
                .map(|t| t.best.params)
                .ok_or_else(|| CliError::Runtime("hypertune: stage finished without a study".into()))
        };
        let hp = StageHyper {
            failure: best(&outcome.stage1)?,
            launch: best(&outcome.stage2)?,
        };
        write_json(&root.join(phase.as_str()).join("best_hyperparams.json"), &hp)?;
    }
    Ok(())
}

fn default_checkpoint(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.join("train").join("best_model.json")
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path, "checkpoint")?;
    let file = std::fs::File::open(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Ok(read_checkpoint(std::io::BufReader::new(file))?)
}

#[derive(Serialize)]
struct EvaluationRow {
    model_no: usize,
    variables: String,
    window: usize,
    mean_rmse: f64,
    max_vif: f64,
    qualified: bool,
}

#[derive(Serialize)]
struct HeadToHead {
    records: Vec<String>,
    lstm_rmse: f64,
    benchmark_rmse: f64,
    winner: String,
}

pub fn benchmark(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let data = load(cfg)?;
    let table = data
        .funding
        .as_ref()
        .ok_or_else(|| CliError::Validation("config: the benchmark needs a funding file".into()))?;
    let b = &cfg.benchmark;
    let fit_set: Vec<&MissionRecord> = data
        .records
        .iter()
        .filter(|r| r.lifetime.is_some())
        .filter(|r| (b.fit_start..=b.fit_end).contains(&(r.launch_date.floor() as i32)))
        .collect();
    let search = SearchConfig {
        funding: SEARCH_ORDER.to_vec(),
        windows: b.window_min..=b.window_max,
        vif_threshold: b.vif_threshold,
        folds: b.folds,
        dummies: b.dummies,
    };
    let result = feature_search(&fit_set, table, &search)?;
    let dir = cfg.paths.out.join("benchmark");
    write_with(&dir.join("search.csv"), |buf| Ok(write_search_csv(buf, &result)?))?;
    write_with(&dir.join("vif.csv"), |buf| Ok(write_vif_csv(buf, &result)?))?;
    write_with(&dir.join("evaluations.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for e in &result.evaluations {
            let s = &result.subsets[e.subset];
            w.serialize(EvaluationRow {
                model_no: s.model_no,
                variables: s.funding.iter().map(|k| k.column()).collect::<Vec<_>>().join(";"),
                window: e.window,
                mean_rmse: e.mean_rmse,
                max_vif: e.max_vif,
                qualified: e.qualified,
            })
            .map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| CliError::io("evaluations.csv", e))
    })?;
    let spec = result.selected_spec(b.dummies);
    let model = fit_benchmark(&fit_set, table, &spec)?;
    write_json(&dir.join("model.json"), &model)?;
    println!(
        "benchmark: {} evaluations; selected {} with window {} (CV RMSE {:.4})",
        result.evaluations.len(),
        spec.funding.iter().map(|k| k.label()).collect::<Vec<_>>().join(", "),
        spec.window,
        result.evaluations[result.selected].mean_rmse
    );

    let path = checkpoint
        .map(Path::to_path_buf)
        .or_else(|| b.checkpoint.clone())
        .unwrap_or_else(|| default_checkpoint(cfg));
    if !path.exists() {
        info!("benchmark: no model at {}; skipping the head-to-head comparison", path.display());
        return Ok(());
    }
    let ck = load_checkpoint(&path)?;
    if ck.test_records.is_empty() {
        return Err(CliError::Validation(format!("steti: checkpoint {} lists no test records", path.display())));
    }
    let ids: Vec<RecordId> = ck
        .test_records
        .iter()
        .map(|n| {
            data.records
                .iter()
                .position(|r| &r.name == n)
                .map(RecordId)
                .ok_or_else(|| CliError::Validation(format!("steti: test record `{n}` is not in the missions file")))
        })
        .collect::<Result<_>>()?;
    let observed: Vec<f64> = ids
        .iter()
        .map(|id| {
            data.records[id.0]
                .lifetime
                .map(f64::log2)
                .ok_or_else(|| CliError::Validation(format!("steti: test record `{}` has no lifetime", data.records[id.0].name)))
        })
        .collect::<Result<_>>()?;
    let examples = ck.model.encode_records(&data.records, data.funding.as_ref(), &ids)?;
    let lstm = ck.model.predict(&examples)?;
    let base: Vec<f64> = ids
        .iter()
        .map(|id| benchmark_predict(&model, &data.records[id.0], table))
        .collect::<std::result::Result<_, _>>()?;
    let lstm_rmse = rmse(&observed, &lstm)?;
    let benchmark_rmse = rmse(&observed, &base)?;
    let winner = if lstm_rmse <= benchmark_rmse { "lstm" } else { "benchmark" };
    write_json(
        &dir.join("comparison.json"),
        &HeadToHead {
            records: ck.test_records.clone(),
            lstm_rmse,
            benchmark_rmse,
            winner: winner.into(),
        },
    )?;
    let mut csv_text = String::from("name,observed_log2_lifetime,lstm,benchmark\n");
    for (i, id) in ids.iter().enumerate() {
        let _ = writeln!(csv_text, "{},{},{},{}", data.records[id.0].name, observed[i], lstm[i], base[i]);
    }
    write_bytes(&dir.join("comparison.csv"), csv_text.as_bytes())?;
    println!("benchmark: LSTM RMSE {lstm_rmse:.4} vs regression RMSE {benchmark_rmse:.4} on {} records", ids.len());
    Ok(())
}

fn known_labels(ck: &Checkpoint, axis: Axis) -> Vec<String> {
    axis.categorical()
        .and_then(|c| ck.model.encoder.vocabularies.iter().find(|(k, _)| *k == c))
        .map(|(_, v)| v.labels().to_vec())
        .unwrap_or_default()
}

pub fn scenario(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let data = load(cfg)?;
    let fallback = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| default_checkpoint(cfg));
    let entries: Vec<(String, Option<PathBuf>, ScenarioSpec)> = if cfg.scenario.is_empty() {
        let ck = load_checkpoint(&fallback)?;
        let mut v = vec![("launch_mass".to_string(), None, ScenarioSpec::mass_sweep(Baseline::Last))];
        for axis in [Axis::Country, Axis::Destination, Axis::ContactType] {
            if !known_labels(&ck, axis).is_empty() {
                v.push((axis.name().to_string(), None, ScenarioSpec::label_sweep(Baseline::Last, axis)));
            }
        }
        v
    } else {
        cfg.scenario
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let stem = e.name.clone().unwrap_or_else(|| format!("scenario_{i}_{}", e.spec.axis.name()));
                (stem, e.checkpoint.clone(), e.spec.clone())
            })
            .collect()
    };
    let dir = cfg.paths.out.join("scenario");
    let mut all: Vec<(String, ScenarioResult)> = Vec::new();
    for (stem, path, spec) in entries {
        let ck = load_checkpoint(path.as_deref().unwrap_or(&fallback))?;
        let set = build_scenarios(&spec, &data.records, &known_labels(&ck, spec.axis))?;
        let result = predict_scenarios(&ck, &set, data.funding.as_ref())?;
        write_with(&dir.join(format!("{stem}.csv")), |buf| Ok(write_scenario_csv(buf, &result)?))?;
        println!("scenario: {stem}: {} rows around `{}`", result.rows.len(), result.baseline);
        all.push((stem, result));
    }
    write_json(&dir.join("scenarios.json"), &all)
}
