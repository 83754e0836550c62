//! Command-line behaviour: exit codes, output files and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn reltori(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reltori")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn check_exit_codes() {
    assert_eq!(reltori(&["check", "--config", &config("so3_pi3.toml")]).status.code(), Some(0));
    let bad = reltori(&["check", "--config", &config("noncommuting.toml")]);
    assert_eq!(bad.status.code(), Some(1));
    let listing = String::from_utf8_lossy(&bad.stdout);
    assert!(listing.contains("S1") && listing.contains("X"), "{listing}");

    let dir = TempDir::new().unwrap();
    let malformed = write(&dir, "bad.toml", "[system]\ngroup = \"so3\"\nk = \n");
    assert_eq!(reltori(&["check", "--config", &malformed]).status.code(), Some(2));
    let unknown = write(&dir, "unknown.toml", "[system]\ngroup = \"so3\"\nk = 1\nomega = [1]\ncolour = 3\n");
    assert_eq!(reltori(&["check", "--config", &unknown]).status.code(), Some(2));
    assert_eq!(reltori(&["check"]).status.code(), Some(2));
}

#[test]
fn reconstruct_torus_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let run = reltori(&["reconstruct", "--config", &config("torus3.toml"), "--out", &out]);
    assert_eq!(run.status.code(), Some(0));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["drift"]["d1"], 1);
    assert_eq!(report["drift"]["nu"][0]["display"], "1/2");
    assert_eq!(report["drift"]["nu"][0]["value"], 0.5);
    assert_eq!(report["resonances"]["r"], 2);
    assert_eq!(report["resonances"]["d0"], 0);
    assert_eq!(report["resonances"]["covering_degree"], 4);
    assert_eq!(report["choices"]["log_branch"], "principal");
    assert_eq!(report["heuristic"], false);
}

#[test]
fn reconstruct_special_cases() {
    let dir = TempDir::new().unwrap();
    let trivial = write(
        &dir,
        "trivial.toml",
        "[system]\ngroup = \"so3\"\nk = 2\nbasis = [{ name = \"sqrt2\", value = 1.4142135623730951 }]\nomega = [1, [0, 1]]\nlifts = [{ direction = 1 }]\n",
    );
    let out = dir.path().join("t").display().to_string();
    assert_eq!(reltori(&["reconstruct", "--config", &trivial, "--out", &out]).status.code(), Some(0));
    let report = read_json(&dir.path().join("t/report.json"));
    assert_eq!(report["drift"]["d1"], 0);
    assert_eq!(report["resonances"]["l"], 0);
    assert_eq!(report["resonances"]["r"], 1);

    let out = dir.path().join("p").display().to_string();
    assert_eq!(reltori(&["reconstruct", "--config", &config("so3_pi3.toml"), "--out", &out]).status.code(), Some(0));
    let report = read_json(&dir.path().join("p/report.json"));
    assert_eq!(report["resonances"]["r"], 3);
    assert_eq!(report["resonances"]["d0"], 0);

    let out = dir.path().join("n").display().to_string();
    let run = reltori(&["reconstruct", "--config", &config("noncommuting.toml"), "--out", &out]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("stage hypotheses"));
}

#[test]
fn reports_are_byte_identical_and_echo_the_config() {
    let dir = TempDir::new().unwrap();
    let runs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|sub| {
            let out = dir.path().join(sub).display().to_string();
            let run = reltori(&["reconstruct", "--config", &config("so3_fourier.toml"), "--out", &out]);
            assert_eq!(run.status.code(), Some(0));
            std::fs::read(dir.path().join(sub).join("report.json")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let report: Value = serde_json::from_slice(&runs[0]).unwrap();
    let echo = write(&dir, "echo.json", &report["config"].to_string());
    let out = dir.path().join("c").display().to_string();
    assert_eq!(reltori(&["reconstruct", "--config", &echo, "--out", &out]).status.code(), Some(0));
    let again = std::fs::read(dir.path().join("c/report.json")).unwrap();
    assert_eq!(runs[0], again);
}

#[test]
fn verify_torus_passes_and_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let run = reltori(&["verify", "--config", &config("torus3.toml"), "--out", &out]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stdout));
    let report = read_json(&dir.path().join("verification.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["tolerances"]["conjugacy"], 1e-7);
    let rows = report["rows"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["pass"] == true));

    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,phi_1,phi_2,g_1"));
    let times: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(times.len(), 2001);
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    for row in csv.lines().skip(1) {
        for field in row.split(',').skip(1) {
            let x: f64 = field.parse().unwrap();
            assert!((0.0..1.0).contains(&x), "{x}");
        }
    }
}

#[test]
fn broken_branch_fails_frequency_check() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(configs().join("torus3.toml")).unwrap() + "\n[pipeline]\nbranch_shift = [[0], [1]]\n";
    let cfg = write(&dir, "broken.toml", &text);
    let out = dir.path().display().to_string();
    let run = reltori(&["verify", "--config", &cfg, "--out", &out]);
    assert_eq!(run.status.code(), Some(1));
    let report = read_json(&dir.path().join("verification.json"));
    let group_row = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == "frequency/group_1")
        .unwrap();
    assert_eq!(group_row["pass"], false);
}

#[test]
fn zero_time_grid_is_vacuous() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(configs().join("torus3.toml")).unwrap() + "\n[verify]\nt_grid = [0.0]\n";
    let cfg = write(&dir, "t0.toml", &text);
    let out = dir.path().display().to_string();
    assert_eq!(reltori(&["verify", "--config", &cfg, "--out", &out]).status.code(), Some(0));
    let report = read_json(&dir.path().join("verification.json"));
    for row in report["rows"].as_array().unwrap() {
        if row["name"].as_str().unwrap().starts_with("conjugacy/") {
            assert_eq!(row["residual"], 0.0);
        }
    }
}

#[test]
fn snf_subcommand() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let run = reltori(&["snf", "--matrix", &config("smith.txt"), "--out", &out]);
    assert_eq!(run.status.code(), Some(0));
    let doc = read_json(&dir.path().join("snf.json"));
    assert_eq!(doc["invariant_factors"], serde_json::json!(["2", "6", "12"]));
    assert_eq!(doc["rank"], 3);

    let bad = write(&dir, "bad.txt", "1 2\n3\n");
    assert_eq!(reltori(&["snf", "--matrix", &bad]).status.code(), Some(2));
}

#[test]
fn overrides_reach_the_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let run = reltori(&[
        "reconstruct",
        "--config",
        &config("so3_pi3.toml"),
        "--out",
        &out,
        "--mode",
        "numeric",
        "--height-bound",
        "20",
        "--tol",
        "1e-9",
        "--step",
        "0.002",
    ]);
    assert_eq!(run.status.code(), Some(0));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["config"]["pipeline"]["mode"], "numeric");
    assert_eq!(report["config"]["pipeline"]["height_bound"], 20);
    assert_eq!(report["choices"]["step"], 0.002);
    assert_eq!(report["heuristic"], true);
    assert_eq!(report["resonances"]["r"], 3);
}
