//! End-to-end tests of the `biphoton-corr` binary: pipeline wiring, file
//! formats, determinism and the exit-code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biphoton_corr::correlation::{Axis, Plane};
use biphoton_corr::fitter::{FitForm, FitResult};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_biphoton-corr"))
}

fn config_path() -> PathBuf {
    biphoton_corr::config::reference_config_path()
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("spawn biphoton-corr");
    assert!(
        output.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn help_exits_clean() {
    let output = bin().arg("--help").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    for subcommand in ["simulate", "fit", "analyze", "limits", "report"] {
        assert!(text.contains(subcommand), "help is missing {subcommand}");
    }
}

#[test]
fn missing_config_is_a_config_error() {
    let output = bin()
        .args(["limits", "--config", "/nonexistent/nowhere.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path()).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["optics"]["sigma_typo_m"] = serde_json::json!(1.0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&value).unwrap()).unwrap();
    let output = bin()
        .args(["limits", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("sigma_typo_m"));
}

#[test]
fn config_dir_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let output = bin()
        .args(["limits", "--out", out.to_str().unwrap()])
        .env(
            "BIPHOTON_CONFIG_DIR",
            config_path().parent().unwrap(),
        )
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(out.join("limits.json").is_file());
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    let config = config_path();
    for out in [&out_a, &out_b] {
        run_ok(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--plane",
            "near",
            "--axis",
            "x",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    for name in ["record_near_x.csv", "record_near_x.json"] {
        assert_eq!(
            read_bytes(&out_a.join(name)),
            read_bytes(&out_b.join(name)),
            "{name} differs between identical runs"
        );
    }
    // a different seed must change the record
    let out_c = dir.path().join("c");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--plane",
        "near",
        "--axis",
        "x",
        "--seed",
        "8",
        "--out",
        out_c.to_str().unwrap(),
    ]);
    assert_ne!(
        read_bytes(&out_a.join("record_near_x.csv")),
        read_bytes(&out_c.join("record_near_x.csv"))
    );
}

/// simulate → fit → analyze → report, twice, checking artifacts and
/// byte-identical JSON outputs.
#[test]
fn full_pipeline_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_path();
    let config_str = config.to_str().unwrap();

    let run_pipeline = |out: &Path| {
        let out_str = out.to_str().unwrap();
        for plane in ["near", "far"] {
            run_ok(&[
                "simulate", "--config", config_str, "--plane", plane, "--axis", "x", "--out",
                out_str,
            ]);
            let record = out.join(format!("record_{plane}_x.csv"));
            run_ok(&[
                "fit",
                "--config",
                config_str,
                "--record",
                record.to_str().unwrap(),
                "--out",
                out_str,
            ]);
        }
        run_ok(&[
            "analyze",
            "--config",
            config_str,
            "--near",
            out.join("fit_near_x.json").to_str().unwrap(),
            "--far",
            out.join("fit_far_x.json").to_str().unwrap(),
            "--deconvolve",
            "--out",
            out_str,
        ]);
        run_ok(&[
            "report",
            "--config",
            config_str,
            "--artifacts",
            out_str,
            "--out",
            out_str,
        ]);
    };

    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&out_a);
    run_pipeline(&out_b);

    for name in [
        "record_near_x.csv",
        "record_far_x.json",
        "fit_near_x.json",
        "fit_far_x.json",
        "contours_near_x.csv",
        "report_x.json",
        "report.txt",
        "diagram_uncorrelated.csv",
        "diagram_near_x.csv",
        "surface_near_x.csv",
    ] {
        let a = out_a.join(name);
        assert!(a.is_file(), "missing artifact {name}");
        assert_eq!(
            read_bytes(&a),
            read_bytes(&out_b.join(name)),
            "{name} differs between identical pipeline runs"
        );
    }

    // the analyzed report carries an entangled verdict for the reference setup
    let report: serde_json::Value =
        serde_json::from_slice(&read_bytes(&out_a.join("report_x.json"))).unwrap();
    assert_eq!(report["verdict"], "Entangled");
    let text = std::fs::read_to_string(out_a.join("report.txt")).unwrap();
    assert!(text.contains("verdict: entangled"));
    assert!(text.contains("physical floors"));
}

#[test]
fn fit_ingests_csv_and_json_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = config_path();
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--plane",
        "near",
        "--axis",
        "x",
        "--out",
        out.to_str().unwrap(),
    ]);
    let mut fits = Vec::new();
    for ext in ["csv", "json"] {
        let fit_out = dir.path().join(format!("fit_{ext}"));
        run_ok(&[
            "fit",
            "--config",
            config.to_str().unwrap(),
            "--record",
            out.join(format!("record_near_x.{ext}")).to_str().unwrap(),
            "--out",
            fit_out.to_str().unwrap(),
        ]);
        fits.push(read_bytes(&fit_out.join("fit_near_x.json")));
    }
    assert_eq!(fits[0], fits[1], "CSV and JSON ingestion disagree");
}

#[test]
fn fit_nonconvergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = config_path();
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--plane",
        "near",
        "--axis",
        "x",
        "--out",
        out.to_str().unwrap(),
    ]);
    let output = bin()
        .args([
            "fit",
            "--config",
            config.to_str().unwrap(),
            "--record",
            out.join("record_near_x.csv").to_str().unwrap(),
            "--max-iterations",
            "1",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    // best-so-far parameters are still written
    assert!(out.join("fit_near_x.json").is_file());
}

#[test]
fn below_floor_analysis_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    let config = config_path();
    // hand-made fits far narrower than the physical floors allow
    let near = FitResult::from_covariance_params(
        Plane::NearField,
        Axis::X,
        FitForm::Covariance,
        0.0,
        0.0,
        100.0,
        0.3e-6,
        0.3e-6,
        0.0,
        0.0,
        true,
        1,
        None,
    )
    .unwrap();
    let far = FitResult::from_covariance_params(
        Plane::FarField,
        Axis::X,
        FitForm::Covariance,
        0.0,
        0.0,
        10.0,
        2.0e-6,
        2.0e-6,
        0.0,
        0.0,
        true,
        1,
        None,
    )
    .unwrap();
    let near_path = out.join("fit_near_x.json");
    let far_path = out.join("fit_far_x.json");
    std::fs::write(&near_path, serde_json::to_string_pretty(&near).unwrap()).unwrap();
    std::fs::write(&far_path, serde_json::to_string_pretty(&far).unwrap()).unwrap();
    let output = bin()
        .args([
            "analyze",
            "--config",
            config.to_str().unwrap(),
            "--near",
            near_path.to_str().unwrap(),
            "--far",
            far_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let report: serde_json::Value =
        serde_json::from_slice(&read_bytes(&out.join("report_x.json"))).unwrap();
    assert_eq!(report["floor_check"]["suspicious"], true);
}

#[test]
fn report_without_artifacts_writes_diagrams() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "report",
        "--config",
        config_path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    for name in [
        "report.txt",
        "diagram_uncorrelated.csv",
        "diagram_near_x.csv",
        "diagram_far_x.csv",
        "diagram_near_y.csv",
        "diagram_far_y.csv",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn report_with_missing_artifacts_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    // nonexistent directory
    let output = bin()
        .args([
            "report",
            "--config",
            config_path().to_str().unwrap(),
            "--artifacts",
            dir.path().join("nowhere").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    // empty directory: nothing to report on
    let output = bin()
        .args([
            "report",
            "--config",
            config_path().to_str().unwrap(),
            "--artifacts",
            empty.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("missing artifact"));
}

#[test]
fn grid_simulation_writes_combined_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "simulate",
        "--config",
        config_path().to_str().unwrap(),
        "--plane",
        "near",
        "--axis",
        "x",
        "--protocol",
        "grid",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = out.join("record_near_x_grid.csv");
    assert!(csv.is_file());
    let text = std::fs::read_to_string(&csv).unwrap();
    // 13 passive positions × 35×35 active grid + header
    assert_eq!(text.lines().count(), 1 + 13 * 35 * 35);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("record_near_x_grid.json")).unwrap())
            .unwrap();
    assert_eq!(json.as_array().unwrap().len(), 13);
}
