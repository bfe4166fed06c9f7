use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/configs").join(name)
}

fn qlpar(args: &[&str], out: &Path, cfg: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlpar"))
        .args(args)
        .arg("--config")
        .arg(config(cfg))
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn parse_csv(text: &str) -> (String, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn heat_solve_meets_exact_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlpar(&["solve"], dir.path(), "heat_solve.json");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = report(dir.path());
    assert_eq!(rep["passed"], true);
    assert!(rep["metrics"]["max_error"].as_f64().unwrap() <= 1e-7);
    assert!(rep["series"]["newton_history"].is_array());
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("t,node_0,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn jet_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlpar(&["jet"], dir.path(), "reaction_jet.json");
    assert!(out.status.success());
    let (header, rows) = parse_csv(&std::fs::read_to_string(dir.path().join("jet.csv")).unwrap());
    let golden =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/jet_reaction_m3.csv"))
            .unwrap();
    let (g_header, g_rows) = parse_csv(&golden);
    assert_eq!(header, g_header);
    assert_eq!(rows.len(), g_rows.len());
    for (r, g) in rows.iter().zip(&g_rows) {
        for (a, b) in r.iter().zip(g) {
            assert!((a - b).abs() <= 1e-10, "{r:?} vs {g:?}");
        }
    }
}

#[test]
fn garding_certificates_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = qlpar(&["verify", "garding"], dir.path(), "biharmonic_garding.json");
    assert!(ok.status.success());
    let bad = qlpar(&["verify", "garding"], dir.path(), "heat_garding_inflated.json");
    assert_eq!(bad.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.contains("[FAIL]") && stdout.contains("first violator constant mode"), "{stdout}");
}

#[test]
fn invalid_config_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlpar(&["solve"], dir.path(), "bad_order.json");
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("spec.p") && stderr.contains("p must be ≥ 1"), "{stderr}");
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn subcommand_must_match_config_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlpar(&["jet"], dir.path(), "heat_solve.json");
    assert!(!out.status.success());
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = qlpar(&["verify", "gn", "--threads", "1"], a.path(), "gn.json");
    let rb = qlpar(&["verify", "gn", "--threads", "3"], b.path(), "gn.json");
    assert!(ra.status.success() && rb.status.success());
    for f in ["report.json", "gn.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlpar(&["verify", "gn", "--seed", "99"], dir.path(), "gn.json");
    assert!(out.status.success());
    assert_eq!(report(dir.path())["config"]["seed"], 99);
}

#[test]
fn several_configs_run_into_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qlpar"))
        .args(["verify", "garding", "--config"])
        .arg(config("biharmonic_garding.json"))
        .arg("--config")
        .arg(config("heat_garding_inflated.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&dir.path().join("biharmonic_garding"))["passed"], true);
    assert_eq!(report(&dir.path().join("heat_garding_inflated"))["passed"], false);
}
