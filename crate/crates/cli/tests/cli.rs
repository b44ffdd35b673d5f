use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shds_cli::RunManifest;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shds"))
        .args(args)
        .env_remove("SHDS_THREADS")
        .output()
        .expect("run shds")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn out_dir(tmp: &tempfile::TempDir, name: &str) -> String {
    tmp.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn certify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let pass = shds(&["certify", "--config", &cfg("actuator.cfg"), "--out", &out_dir(&tmp, "a")]);
    assert_eq!(code(&pass), 0, "{}", stderr(&pass));
    let stdout = String::from_utf8_lossy(&pass.stdout);
    assert!(stdout.contains("lambda = 0.225"));
    assert!(stdout.contains("verdict: pass"));

    let fail = shds(&["certify", "--config", &cfg("actuator_p03.cfg"), "--out", &out_dir(&tmp, "b")]);
    assert_eq!(code(&fail), 2);
    assert!(String::from_utf8_lossy(&fail.stdout).contains("verdict: fail"));

    let text = fs::read_to_string(cfg("tau_free.cfg")).unwrap();
    let start = text.find("[certify]").unwrap();
    let end = start + text[start..].find("\n\n").unwrap();
    let path = tmp.path().join("no_v.cfg");
    fs::write(&path, format!("{}{}", &text[..start], &text[end + 2..])).unwrap();
    let missing = shds(&["certify", "--config", path.to_str().unwrap(), "--out", &out_dir(&tmp, "c")]);
    assert_eq!(code(&missing), 1);
    assert!(stderr(&missing).contains("[certify]"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&shds(&["frobnicate"])), 1);
    assert_eq!(code(&shds(&["simulate", "--seed", "abc"])), 1);
    assert_eq!(code(&shds(&["simulate", "--out", "/tmp/x"])), 1);
    assert_eq!(code(&shds(&["--help"])), 0);
}

#[test]
fn simulate_csv_structure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "sim");
    let o = shds(&["simulate", "--config", &cfg("actuator.cfg"), "--seed", "3", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(Path::new(&out).join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "path_id,t,j,x_1,r_1,tau,event");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let mut ids: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    ids.dedup();
    assert_eq!(ids.len(), 10);
    for id in ids {
        let js: Vec<u64> = rows
            .iter()
            .filter(|r| r[0] == id && r[6] == "jump")
            .map(|r| r[2].parse().unwrap())
            .collect();
        assert_eq!(js, (1..=5).collect::<Vec<_>>());
        assert_eq!(rows.iter().filter(|r| r[0] == id && r[6] == "terminal").count(), 1);
    }

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "simulate");
    assert_eq!(manifest.seed_base, 3);
    assert_eq!(manifest.outputs, vec!["paths.csv"]);
    assert_eq!(manifest.config_digest.len(), 64);
}

#[test]
fn config_errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let zero = shds(&["simulate", "--config", &cfg("actuator.cfg"), "--n-paths", "0", "--out", &out_dir(&tmp, "z")]);
    assert_eq!(code(&zero), 1);
    assert!(stderr(&zero).contains("n_paths must be ≥ 1"));

    let text = fs::read_to_string(cfg("actuator.cfg")).unwrap();
    let bad_symbol = tmp.path().join("y.cfg");
    fs::write(&bad_symbol, text.replace("-x_1 * (1 + sin(tau))", "-y * x_1")).unwrap();
    let o = shds(&["simulate", "--config", bad_symbol.to_str().unwrap(), "--out", &out_dir(&tmp, "y")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("\"y\"") || stderr(&o).contains("`y`") || stderr(&o).contains(" y"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));

    let bad_probs = tmp.path().join("p.cfg");
    fs::write(&bad_probs, text.replace("prob = 0.1 }", "prob = 0.6 }").replace("prob = 0.9 }", "prob = 0.5 }")).unwrap();
    let o = shds(&["simulate", "--config", bad_probs.to_str().unwrap(), "--out", &out_dir(&tmp, "p")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("probabilities sum to 1.1"), "{}", stderr(&o));
}

#[test]
fn thread_variable_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["certify", "--config", &cfg("actuator.cfg"), "--out", &out_dir(&tmp, "t")];
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_shds"))
            .args(args)
            .env("SHDS_THREADS", v)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("abc")), 1);
    assert_eq!(code(&run("0")), 0);
    assert_eq!(code(&run("2")), 0);
}

#[test]
fn recurrence_with_large_radius() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "r");
    let o = shds(&[
        "recur", "--config", &cfg("es.cfg"), "--radius", "5", "--n-paths", "40", "--t-max", "1", "--out", &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("recur_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["tau_hat"], 0.0);
    assert_eq!(summary["hit_fraction"], 1.0);
}

#[test]
fn tau_free_gamma_vanishes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "avg");
    let o = shds(&["average", "--config", &cfg("tau_free.cfg"), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(Path::new(&out).join("gamma.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let gamma: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(gamma <= 1e-12, "{line}");
    }
}

#[test]
fn digest_tracks_config_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(cfg("actuator.cfg")).unwrap();
    let a = tmp.path().join("a.cfg");
    let b = tmp.path().join("b.cfg");
    fs::write(&a, &text).unwrap();
    fs::write(&b, format!("{text}\n# comment\n")).unwrap();
    let digest = |path: &Path, name: &str| {
        let out = out_dir(&tmp, name);
        assert_eq!(code(&shds(&["certify", "--config", path.to_str().unwrap(), "--out", &out])), 0);
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap()).unwrap();
        m.config_digest
    };
    let (da, da2, db) = (digest(&a, "a1"), digest(&a, "a2"), digest(&b, "b1"));
    assert_eq!(da, da2);
    assert_ne!(da, db);
}

#[test]
fn fig1_default_run() {
    let tmp = tempfile::tempdir().unwrap();
    let common = shds_cli::Common {
        config: None,
        seed: 0,
        out: tmp.path().join("fig1"),
    };
    let r = shds_cli::cmd_fig1(&common, &shds_cli::Fig1Flags::default()).unwrap();
    assert_eq!(r.jammed.len(), 100);
    let csv = fs::read_to_string(tmp.path().join("fig1/fig1_paths.csv")).unwrap();
    let mut ids: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    ids.dedup();
    assert_eq!(ids.len(), 101);
    assert!(csv.lines().any(|l| l.starts_with("100,nominal,")));

    let peaks: Vec<f64> = r
        .nominal
        .segments
        .iter()
        .filter(|s| s.len() > 1)
        .map(|s| (0..s.len()).map(|i| s.x(i)[0].abs()).fold(0.0, f64::max))
        .collect();
    assert_eq!(peaks.len(), 10);
    assert!(peaks.windows(2).all(|w| w[1] <= w[0]), "{peaks:?}");
    assert!(r.nominal.final_state().x[0].abs() < 0.1);
    let svg = fs::read_to_string(tmp.path().join("fig1/fig1.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
}
