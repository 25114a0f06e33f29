use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn steti(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steti"))
        .arg("--config")
        .arg(fixtures().join("config.toml"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = steti(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                acc.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn ingest_reports_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["ingest"]);
    let expected = csv_rows(&fixtures().join("missions.csv"));
    assert_eq!(csv_rows(&dir.path().join("ingest/missions.csv")), expected);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("ingest/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["records"].as_u64().unwrap() as usize, expected);
    assert!(stdout.contains(&expected.to_string()));
}

#[test]
fn steti_fit_recovers_generator_doubling_time() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["steti-fit"]);
    let params: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("steti_fit/params.json")).unwrap()).unwrap();
    let d = params["closed_form"]["doubling_time"].as_f64().unwrap();
    assert!((d - 12.0).abs() / 12.0 < 0.15, "doubling time {d}");
    assert!(dir.path().join("steti_fit/curve.csv").exists());
}

#[test]
fn train_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["train", "--phase", "time_only", "--seed", "7"];
    ok(a.path(), &args);
    ok(b.path(), &args);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.keys().any(|k| k.ends_with("best_model.json")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(&tb[k] == v, "{} differs", k.display());
    }
}

#[test]
fn tune_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "tune",
        "--phase",
        "time_only",
        "--max-trials",
        "2",
        "--max-epochs",
        "20",
        "--patience",
        "5",
    ];
    ok(a.path(), &args);
    ok(b.path(), &args);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.keys().any(|k| k.ends_with("best_hyperparams.json")));
    assert_eq!(ta, tb);
}

#[test]
fn scenario_rows_follow_sweep_sizes() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["train", "--phase", "time_plus", "--max-epochs", "20", "--patience", "5"]);
    ok(dir.path(), &["scenario"]);
    let mass = std::fs::read_dir(dir.path().join("scenario"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().contains("launch_mass"))
        .expect("mass sweep written");
    assert_eq!(csv_rows(&mass), 51);
    let mut reader = csv::Reader::from_path(&mass).unwrap();
    let values: Vec<f64> = reader.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= 1.0 && hi >= 50_000.0, "sweep spans {lo}..{hi}");
}

#[test]
fn missing_input_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = steti(dir.path(), &["--missions", "/nonexistent/missions.csv", "ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(steti(dir.path(), &["train", "--phase", "sideways"]).status.code(), Some(1));
    assert_eq!(steti(dir.path(), &["frobnicate"]).status.code(), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_steti")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
