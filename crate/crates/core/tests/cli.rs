use std::path::Path;
use std::process::{Command, Output};

use semeq::harness::ExperimentConfig;

fn semeq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semeq"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn semeq")
}

fn write_small_config(dir: &Path) {
    let mut cfg = ExperimentConfig::digit_parity();
    cfg.messages = 200;
    cfg.source_samples = 30;
    cfg.target_samples = 60;
    cfg.rho_samples = 300;
    cfg.train.epochs = 2;
    std::fs::write(dir.join("c.json"), cfg.to_json().unwrap()).unwrap();
}

#[test]
fn build_codebook_writes_json_and_rho_and_inspect_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = semeq(
        dir.path(),
        &["build-codebook", "--config", "c.json", "--out", "cb.json"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("cb.json").exists());
    let rho = std::fs::read_to_string(dir.path().join("rho.csv")).unwrap();
    assert_eq!(rho.lines().count(), 11);
    assert!(String::from_utf8_lossy(&out.stdout).contains("entropy:"));

    let out = semeq(dir.path(), &["inspect", "cb.json"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("entropy:"));
    assert!(text.contains("N_P = 10"));
}

#[test]
fn sweep_emits_one_row_per_method_and_snr() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = semeq(
        dir.path(),
        &[
            "sweep",
            "--config",
            "c.json",
            "--snr-db",
            "-5,0,5,10,20",
            "--methods",
            "all",
            "--out",
            "r.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 7 * 5);
    assert!(
        rows.iter().all(|r| r.ends_with(',')),
        "no row should carry an error"
    );
}

#[test]
fn eval_gen_lang_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = semeq(
        dir.path(),
        &[
            "eval",
            "--config",
            "c.json",
            "--snr-db",
            "3",
            "--methods",
            "semcom_noeq",
        ],
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("semcom_noeq,3,"));

    let out = semeq(
        dir.path(),
        &["gen-lang", "--config", "c.json", "--out", "langs"],
    );
    assert!(out.status.success());
    assert!(dir.path().join("langs/source_samples.csv").exists());
    assert!(dir.path().join("langs/target_language.json").exists());

    let out = semeq(dir.path(), &["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = semeq(dir.path(), &["sweep", "--bogus-flag"]);
    assert!(!out.status.success());
    let out = semeq(dir.path(), &["sweep", "--methods", "nope"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = semeq(dir.path(), &["inspect", "missing.json"]);
    assert!(!out.status.success());
}
