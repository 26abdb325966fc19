use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coopsgd::harness::{run_experiment, ExperimentConfig, RunStatus};

fn coopsgd(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_coopsgd"));
    cmd.args(args).env_remove("COOPSGD_SEED");
    if let Some(s) = seed_env {
        cmd.env("COOPSGD_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const MINIMAL: &str = r#"
[objective]
kind = "quadratic"
dim = 1
clients = 2
kappa = 0.5
sigma = 0.1

[algorithm]
kind = "fully-sync"
eta = 0.1
iterations = 10

[run]
seeds = [3]
"#;

fn rows(csv_path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn minimal_run_writes_one_of_each() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "min.toml", MINIMAL);
    let out = dir.path().join("out");
    let o = coopsgd(&["run", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = rows(&out.join("comparison.csv"));
    assert_eq!(recs.len(), 1);
    let run_dir = out.join(&recs[0][0]).join("3");
    for f in ["trace.csv", "summary.json", "bounds.json"] {
        assert!(run_dir.join(f).is_file(), "missing {f}");
    }
    let trace = fs::read_to_string(run_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("bounds.json")).unwrap()).unwrap();
    assert!(report["epsilon_niid"].as_f64().unwrap() >= report["epsilon_iid"].as_f64().unwrap());
    assert_eq!(report["inputs"]["m"], 2);
}

#[test]
fn tau_sweep_gives_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("fully-sync", "psasgd")
        .replace("iterations = 10", "iterations = 408")
        .replace("eta = 0.1", "eta = 0.05")
        + "\n[sweep]\ntau = [24, 104, 154, 204]\n";
    let cfg = write(dir.path(), "tau.toml", &text);
    let out = dir.path().join("out");
    let o = coopsgd(&["run", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = rows(&out.join("comparison.csv"));
    let taus: Vec<&str> = recs.iter().map(|r| &r[3]).collect();
    assert_eq!(taus, ["24", "104", "154", "204"]);
}

#[test]
fn init_scale_sweep_times_seeds() {
    let text = MINIMAL.replace("seeds = [3]", "seeds = [1, 2]") + "\n[sweep]\ninit_scale = [0.7, 0.9, 1, 1.1, 1.3]\n";
    let cfg = ExperimentConfig::parse(&text, Path::new(".")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), Some(3)).unwrap();
    assert_eq!(out.records.len(), 10);
    assert_eq!(rows(&dir.path().join("comparison.csv")).len(), 10);
}

#[test]
fn seed_override_replaces_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &MINIMAL.replace("seeds = [3]", "seeds = [1, 2, 3]"));
    let out = dir.path().join("out");
    let o = coopsgd(&["run", &cfg, "--out", out.to_str().unwrap()], Some("42"));
    assert!(o.status.success());
    let recs = rows(&out.join("comparison.csv"));
    assert_eq!(recs.len(), 1);
    assert_eq!(&recs[0][2], "42");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("seeds = [3]", "seeds = [1, 2, 3, 4]") + "\n[sweep]\ntau = [1, 2]\n";
    let cfg = write(dir.path(), "r.toml", &text.replace("fully-sync", "psasgd"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(coopsgd(&["run", &cfg, "--out", a.to_str().unwrap(), "--jobs", "1"], None).status.success());
    assert!(coopsgd(&["run", &cfg, "--out", b.to_str().unwrap(), "--jobs", "4"], None).status.success());
    let files = |root: &Path| {
        let mut v = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    v.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
                }
            }
        }
        v.sort();
        v
    };
    let fa = files(&a);
    assert_eq!(fa.len(), 1 + 2 * 4 * 3);
    assert_eq!(fa, files(&b));
}

#[test]
fn config_errors_exit_with_two_and_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (MINIMAL.replace("sigma = 0.1", "sigma = 0.1\nsigmaa = 2"), "sigmaa"),
        (MINIMAL.replace("seeds = [3]", "seeds = []"), "run.seeds"),
        (MINIMAL.replace("fully-sync", "easgd"), "algorithm.easgd_alpha"),
        (MINIMAL.replace("iterations = 10", "iterations = 10\ntau = 20").replace("fully-sync", "psasgd"), "algorithm.iterations"),
        (MINIMAL.replace("iterations = 10", "iterations = 10\ntau = 2").replace("fully-sync", "psasgd") + "\n[selection]\nkind = \"static-random\"\nfraction = 0.1\n", "selection"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), text);
        let o = coopsgd(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()], None);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(2), "case {i}: {err}");
        assert!(err.contains(needle), "case {i}: {err}");
    }
    let o = coopsgd(&["bounds", "/nonexistent/config.toml"], None);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write(dir.path(), "ok.toml", MINIMAL);
    let o = coopsgd(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()], Some("seven"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn all_diverged_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("eta = 0.1", "eta = 40.0")
        .replace("iterations = 10", "iterations = 200")
        .replace("kind = \"quadratic\"", "kind = \"quadratic\"\nspectrum = [1.0]")
        .replace("seeds = [3]", "seeds = [1, 2]");
    let cfg = write(dir.path(), "div.toml", &text);
    let out = dir.path().join("out");
    let o = coopsgd(&["run", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = rows(&out.join("comparison.csv"));
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| &r[7] == "diverged" && r[16].is_empty()));
}

#[test]
fn divergence_is_recorded_and_sweep_continues() {
    let text = MINIMAL.replace("eta = 0.1", "eta = 0.1\n").replace("iterations = 10", "iterations = 200")
        + "\n[sweep]\neta = [0.1, 40.0]\n";
    let cfg = ExperimentConfig::parse(&text, Path::new(".")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), None).unwrap();
    let status: Vec<RunStatus> = out.records.iter().map(|r| r.status).collect();
    assert_eq!(status, [RunStatus::Ok, RunStatus::Diverged]);
    assert!(!out.all_diverged());
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join(&out.records[1].point_hash).join("3").join("summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["diverged_at"].as_u64().is_some());
}

#[test]
fn bounds_subcommand_prints_reports_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("fully-sync", "psasgd").replace("iterations = 10", "iterations = 100")
        + "\n[sweep]\ntau = [5, 10]\n";
    let cfg = write(dir.path(), "b.toml", &text);
    let o = coopsgd(&["bounds", &cfg], None);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    assert_eq!(arr[1]["report"]["inputs"]["tau"], 10);
    assert_eq!(arr[0]["report"]["s_series"], 19.0 * 12.0);
}

#[test]
fn compare_selection_warns_on_single_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("clients = 2", "clients = 6")
        .replace("fully-sync", "psasgd")
        .replace("iterations = 10", "iterations = 40\ntau = 4")
        + "\n[selection]\nkind = \"per-round-random\"\nfraction = 0.5\n";
    let cfg = write(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let o = coopsgd(&["compare-selection", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("selection_comparison.json")).unwrap()).unwrap();
    assert_eq!(v["per_round"]["final_losses"].as_array().unwrap().len(), 1);
    assert_eq!(v["static_random"]["kind"], "static-random");
    assert!(out.join("per-round-random").join("comparison.csv").is_file());
}
