use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use ramsey_prep::analysis::read_csv;
use ramsey_prep::experiment::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ramsey-prep"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn prepare_outputs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = run(&[
            "prepare",
            "--preset",
            "fig9-13",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(
        fa.keys().collect::<Vec<_>>(),
        [
            "fig9-13_distribution.csv",
            "fig9-13_state.csv",
            "fig9-13_summary.json"
        ]
    );
    assert_eq!(fa, fb);
}

#[test]
fn sweep_is_thread_count_independent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = run(&[
            "--threads",
            threads,
            "sweep",
            "--preset",
            "fig2",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(files(a.path()), files(b.path()));
    let (header, rows) = read_csv(&a.path().join("fig2_fidelity.csv")).unwrap();
    assert_eq!(header, ["alpha_squared", "fidelity"]);
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[0][0], 3.0);
    assert_eq!(rows[20][0], 5.0);
}

#[test]
fn json_format_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "prepare",
        "--preset",
        "fig3",
        "--format",
        "json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("fig3_distribution.json")).unwrap();
    let rows: Vec<serde_json::Value> = serde_json::from_str(&text).unwrap();
    assert_eq!(rows[2]["n"], 2);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("fig3_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["n_atoms"], 37);
    assert_eq!(rows[2]["probability"], summary["photon_distribution"][2]);
}

#[test]
fn show_preset_parses_back() {
    let out = run(&["prepare", "--preset", "fig9-13", "--show-preset"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let config = ExperimentConfig::from_json_str(&text).unwrap();
    assert_eq!(config.groups.len(), 3);
    assert!(config.note.unwrap().contains("phi_3"));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"scheme": "three", "alpha_squared": 4, "n_atoms": 11, "outputs": {"stem": "mine"}}"#,
    )
    .unwrap();
    let out = run(&[
        "prepare",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("mine_summary.json").exists());
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, "{\"scheme\": \"single\",\n \"alpha_sqared\": 4}").unwrap();
    let out = run(&["prepare", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("alpha_sqared") && err.contains("line 2"),
        "{err}"
    );
}

#[test]
fn out_of_domain_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"scheme": "single", "alpha_squared": 4, "noise": {"kappa": 0.01, "n_th": 0.05, "t_a": 0.08, "eta_d": 1.5, "eta_f": 0.0}}"#).unwrap();
    let out = run(&["prepare", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta_d"));
}

#[test]
fn impossible_outcome_has_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"scheme": "custom", "alpha_squared": 2, "groups": [{"n_total": 2, "n_excited": 2, "phi": 0}]}"#,
    )
    .unwrap();
    let out = run(&[
        "prepare",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn missing_source_is_a_config_error() {
    assert_eq!(code(&run(&["prepare"])), 2);
    assert_eq!(code(&run(&["prepare", "--preset", "nope"])), 2);
}

#[test]
fn validate_passes_and_is_seed_stable() {
    let first = bin().arg("validate").env("RS_SEED", "11").output().unwrap();
    let second = bin().arg("validate").env("RS_SEED", "11").output().unwrap();
    assert_eq!(
        code(&first),
        0,
        "{}",
        String::from_utf8_lossy(&first.stdout)
    );
    assert_eq!(first.stdout, second.stdout);
    assert!(String::from_utf8_lossy(&first.stdout).starts_with("seed 11\n"));
}

#[test]
fn wigner_of_vacuum_peaks_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "wigner",
        "--preset",
        "vacuum",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(&dir.path().join("vacuum_wigner.csv")).unwrap();
    assert_eq!(header, ["x", "p", "w"]);
    assert_eq!(rows.len(), 201 * 201);
    let origin = rows.iter().find(|r| r[0] == 0.0 && r[1] == 0.0).unwrap();
    assert!((origin[2] - std::f64::consts::FRAC_1_PI).abs() < 1e-10);
}
