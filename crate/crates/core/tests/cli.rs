//! End-to-end checks of the study runner binary: artifact layout, exit
//! codes, and byte-level reproducibility.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_da-guidance");

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("da-guidance-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn nominal_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/nominal.toml")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn compare_study_writes_table_and_manifest() {
    let dir = workdir("compare");
    let out = dir.join("out");
    let cfg = nominal_config();
    let status = run(&[
        "--study",
        "mge-compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "scenario.gamma=7.5",
        "--set",
        "run.runs=20",
        "--workers",
        "2",
    ]);
    assert!(
        status.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&status.stderr)
    );

    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    for law in ["u1_da", "u2_perfect", "u3_separation", "u4_pn"] {
        assert!(summary.contains(law), "summary missing {law}:\n{summary}");
    }
    let csv = fs::read_to_string(out.join("mge_compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "expected header + four law rows");
    assert!(csv.starts_with("law,cep_cm,mean_effort,runs,failures"));

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["study"], "mge-compare");
    assert_eq!(meta["rng"], "ChaCha8");
    assert_eq!(meta["seed"], 1);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn gamma_search_reports_critical_level() {
    let dir = workdir("gamma");
    let out = dir.join("out");
    let cfg = nominal_config();
    let status = run(&[
        "--study",
        "gamma-search",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "noise.eta=0.9e-3",
    ]);
    assert!(
        status.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("gamma_c"), "stdout: {stdout}");

    let csv = fs::read_to_string(out.join("gamma_search.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let gamma_c: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(gamma_c > 1.0 && gamma_c.is_finite());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn malformed_config_exits_one_without_artifacts() {
    let dir = workdir("badcfg");
    let cfg = dir.join("broken.toml");
    fs::write(
        &cfg,
        "[scenario]\ngamma = \"not a number\"\n[noise]\n[run]\n",
    )
    .unwrap();
    let out = dir.join("out");
    let status = run(&[
        "--study",
        "mge-compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(1));
    assert!(!out.exists(), "artifacts written despite config error");

    // unknown study name is also a usage error
    let status = run(&["--study", "nonsense", "--config", cfg.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(1));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn infeasible_gamma_exits_two() {
    let dir = workdir("infeasible");
    let out = dir.join("out");
    let cfg = nominal_config();
    // nominal gamma = 2.5 sits far below the critical level for the
    // bridged noise intensity, so the DA batch must refuse to run
    let status = run(&[
        "--study",
        "mge-compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "run.runs=5",
    ]);
    assert_eq!(
        status.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn reruns_reproduce_csv_bytes() {
    let dir = workdir("repro");
    let cfg = nominal_config();
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out = dir.join(tag);
        let status = run(&[
            "--study",
            "mge-compare",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
            "--set",
            "scenario.gamma=7.5",
            "--set",
            "run.runs=20",
        ]);
        assert!(status.status.success());
        outputs.push(fs::read(out.join("mge_compare.csv")).unwrap());
    }
    assert_eq!(
        outputs[0], outputs[1],
        "CSV bytes differ between identical runs"
    );
    fs::remove_dir_all(&dir).unwrap();
}
