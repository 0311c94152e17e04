//! End-to-end contracts of the forge pipeline and binary: exit codes, the
//! report bundle, CSV formats, determinism, and the V₂ round-trip.

use std::path::{Path, PathBuf};
use std::process::Command;

use darboux_cli::config::RunConfig;
use darboux_cli::pipeline::{run_pipeline, PipelineFailure};
use darboux_core::potential::Potential;
use darboux_core::spectrum::{compute_spectrum, SolverOptions};
use darboux_core::susy::CaseLabel;
use darboux_core::Grid;

fn config_text(outdir: &Path, body: &str) -> String {
    format!(
        "potential.name = harmonic\n\
         potential.params = 1.0\n\
         grid.x_min = -10\n\
         grid.x_max = 10\n\
         grid.n = 4001\n\
         spectrum.k_max = 6\n\
         output.dir = {}\n\
         {body}",
        outdir.display()
    )
}

fn krein_body() -> &'static str {
    "transform.k = 0\n\
     transform.alpha1 = 1.0\n\
     transform.alpha2 = 3.0\n\
     transform.u1 = eigenstate\n\
     transform.u2 = eigenstate\n\
     tolerance.energy = 1e-12\n\
     tolerance.adjoint_kernel = 1e-3\n\
     tolerance.reversion = 5e-2\n\
     completeness.enabled = off\n"
}

fn case_a_body() -> &'static str {
    "transform.k = 0\n\
     transform.alpha1 = 1.5\n\
     transform.alpha2 = 2.5\n\
     transform.u1 = target_nodes:2\n\
     transform.u2 = target_nodes:1\n\
     tolerance.energy = 1e-12\n\
     tolerance.adjoint_kernel = 1e-3\n\
     tolerance.reversion = 5e-2\n\
     completeness.enabled = off\n"
}

#[test]
fn krein_run_passes_and_reports_double_deletion() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("krein");
    let cfg = RunConfig::from_str_checked(&config_text(&out, krein_body())).unwrap();
    let result = run_pipeline(&cfg).unwrap();
    assert!(result.all_passed, "checks: {:#?}", result.report.checks);
    assert_eq!(
        result.report.predicted.case_label,
        CaseLabel::FKreinDoubleDelete
    );
    let deleted = &result.report.predicted.deleted;
    assert_eq!(deleted.len(), 2);
    assert!((deleted[0] - 1.0).abs() < 1e-6 && (deleted[1] - 3.0).abs() < 1e-6);
    // Partner spectrum is the oscillator shifted by +4.
    let cmp = result.report.verification.as_ref().unwrap();
    for (i, e) in cmp.computed.iter().enumerate() {
        let exact = (2 * (i + 2) + 1) as f64;
        assert!((e - exact).abs() < 1e-5, "level {i}: {e} vs {exact}");
    }
    for name in [
        "report.json",
        "V0.csv",
        "V1.csv",
        "V2.csv",
        "u1.csv",
        "u2.csv",
        "W.csv",
        "v1.csv",
        "v2.csv",
        "spectrum_h0.csv",
        "spectrum_h2.csv",
        "phi_2.csv",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn case_a_run_creates_two_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("case_a");
    let cfg = RunConfig::from_str_checked(&config_text(&out, case_a_body())).unwrap();
    let result = run_pipeline(&cfg).unwrap();
    assert!(result.all_passed, "checks: {:#?}", result.report.checks);
    assert_eq!(result.report.predicted.case_label, CaseLabel::ATwoCreated);
    let cmp = result.report.verification.as_ref().unwrap();
    // h2 levels: 1, 1.5, 2.5, 3, 5, ...
    let expected = [1.0, 1.5, 2.5, 3.0, 5.0, 7.0];
    for (e, c) in expected.iter().zip(&cmp.computed) {
        assert!((e - c).abs() < 1e-5, "{e} vs {c}");
    }
}

#[test]
fn v2_round_trip_reproduces_partner_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rt");
    let cfg = RunConfig::from_str_checked(&config_text(&out, krein_body())).unwrap();
    let result = run_pipeline(&cfg).unwrap();

    let v2 = Potential::from_csv(&out.join("V2.csv")).unwrap();
    let grid = Grid::new(cfg.x_min, cfg.x_max, cfg.n).unwrap();
    let spec = compute_spectrum(&v2, 4, &grid, SolverOptions::default()).unwrap();
    let reported = &result.report.verification.as_ref().unwrap().computed;
    for (a, b) in spec.levels.iter().zip(reported) {
        assert!((a - b).abs() < 1e-5, "round trip: {a} vs {b}");
    }
}

#[test]
fn report_is_deterministic_except_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        let cfg = RunConfig::from_str_checked(&config_text(dir, krein_body())).unwrap();
        run_pipeline(&cfg).unwrap();
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap())
                .unwrap();
        v["timestamp"] = serde_json::json!(0);
        // The output dir differs by construction; blank it too.
        v["config"]["output_dir"] = serde_json::json!("");
        serde_json::to_string(&v).unwrap()
    };
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("b"));
    assert_eq!(a, b);
}

#[test]
fn non_regular_pair_fails_verification_but_writes_pole_marked_v2() {
    // Swapped node counts make W cross zero.
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("swapped");
    let body = "transform.k = 0\n\
                transform.alpha1 = 1.5\n\
                transform.alpha2 = 2.5\n\
                transform.u1 = target_nodes:1\n\
                transform.u2 = target_nodes:2\n\
                completeness.enabled = off\n";
    let cfg = RunConfig::from_str_checked(&config_text(&out, body)).unwrap();
    let result = run_pipeline(&cfg).unwrap();
    assert!(!result.all_passed);
    assert!(!result.report.regularity.zero_free);

    let v2 = std::fs::read_to_string(out.join("V2.csv")).unwrap();
    let mut lines = v2.lines();
    assert_eq!(lines.next(), Some("x,value,is_pole"));
    assert!(v2.lines().skip(1).all(|l| !l.contains("NaN")));
    assert!(v2.lines().any(|l| l.ends_with(",1")), "no pole-marked rows");
}

#[test]
fn csv_shapes_and_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("csv");
    let cfg = RunConfig::from_str_checked(&config_text(&out, krein_body())).unwrap();
    run_pipeline(&cfg).unwrap();

    let w = std::fs::read_to_string(out.join("W.csv")).unwrap();
    assert_eq!(w.lines().count(), cfg.n + 1);
    assert_eq!(w.lines().next(), Some("x,value"));

    let v1 = std::fs::read_to_string(out.join("V1.csv")).unwrap();
    assert_eq!(v1.lines().next(), Some("x,value,is_pole"));

    let s0 = std::fs::read_to_string(out.join("spectrum_h0.csv")).unwrap();
    assert_eq!(s0.lines().next(), Some("k,E"));
    assert_eq!(s0.lines().count(), cfg.k_max + 2);
}

#[test]
fn construction_failure_reports_as_such() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    // A 5-node target is outside the Sturm range for gap 0.
    let body = "transform.k = 0\n\
                transform.alpha1 = 1.5\n\
                transform.alpha2 = 2.5\n\
                transform.u1 = target_nodes:5\n\
                transform.u2 = target_nodes:1\n";
    let cfg = RunConfig::from_str_checked(&config_text(&out, body)).unwrap();
    match run_pipeline(&cfg) {
        Err(PipelineFailure::Construction(_)) => {}
        Err(other) => panic!("expected construction failure, got {other}"),
        Ok(_) => panic!("expected construction failure, got success"),
    }
}

// --- binary-level exit codes ---------------------------------------------

fn forge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forge"))
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    // Valid Krein config: exit 0.
    let out = tmp.path().join("ok");
    let good = tmp.path().join("good.cfg");
    std::fs::write(&good, config_text(&out, krein_body())).unwrap();
    let status = forge().arg("run").arg(&good).status().unwrap();
    assert_eq!(status.code(), Some(0));

    // alpha1 > alpha2: exit 2, and no outputs are produced.
    let out2 = tmp.path().join("never");
    let bad = tmp.path().join("bad.cfg");
    std::fs::write(
        &bad,
        config_text(
            &out2,
            "transform.k = 0\n\
             transform.alpha1 = 2.7\n\
             transform.alpha2 = 1.5\n\
             transform.u1 = target_nodes:2\n\
             transform.u2 = target_nodes:1\n",
        ),
    )
    .unwrap();
    let status = forge().arg("run").arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out2.exists(), "outputs written despite config error");

    // Missing config file: exit 2.
    let status = forge()
        .arg("run")
        .arg(tmp.path().join("nope.cfg"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Unreachable node target: exit 3.
    let out3 = tmp.path().join("unreachable");
    let cfg3 = tmp.path().join("unreachable.cfg");
    std::fs::write(
        &cfg3,
        config_text(
            &out3,
            "transform.k = 0\n\
             transform.alpha1 = 1.5\n\
             transform.alpha2 = 2.5\n\
             transform.u1 = target_nodes:5\n\
             transform.u2 = target_nodes:1\n",
        ),
    )
    .unwrap();
    let status = forge().arg("run").arg(&cfg3).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn binary_verification_failure_exits_one_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("swapped");
    let cfgp = tmp.path().join("swapped.cfg");
    std::fs::write(
        &cfgp,
        config_text(
            &out,
            "transform.k = 0\n\
             transform.alpha1 = 1.5\n\
             transform.alpha2 = 2.5\n\
             transform.u1 = target_nodes:1\n\
             transform.u2 = target_nodes:2\n\
             completeness.enabled = off\n",
        ),
    )
    .unwrap();
    let status = forge().arg("run").arg(&cfgp).status().unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(
        out.join("report.json").exists(),
        "report must still be written"
    );
}

#[test]
fn binary_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ovr");
    let cfgp = tmp.path().join("ovr.cfg");
    std::fs::write(&cfgp, config_text(&out, krein_body())).unwrap();
    let output = forge()
        .args(["spectrum"])
        .arg(&cfgp)
        .args(["--k-max", "2", "--grid-n", "2001", "--x-max", "9"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    // Header plus exactly k_max + 1 = 3 levels.
    assert_eq!(stdout.lines().count(), 4, "stdout:\n{stdout}");
}

#[test]
fn binary_spectrum_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("spec");
    let cfgp = tmp.path().join("spec.cfg");
    std::fs::write(&cfgp, config_text(&out, krein_body())).unwrap();
    let output = forge().arg("spectrum").arg(&cfgp).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("k,E"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    let e0: f64 = first[1].parse().unwrap();
    assert!((e0 - 1.0).abs() < 1e-6);
    assert!(out.join("spectrum_h0.csv").exists());
}

#[test]
fn binary_suite_runs_all_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite");
    std::fs::create_dir_all(&suite).unwrap();
    // Output dirs are forced to <stem>.out by the suite runner.
    std::fs::write(
        suite.join("krein.cfg"),
        config_text(&PathBuf::from("ignored"), krein_body()),
    )
    .unwrap();
    std::fs::write(
        suite.join("case_a.cfg"),
        config_text(&PathBuf::from("ignored"), case_a_body()),
    )
    .unwrap();
    let output = forge().arg("suite").arg(&suite).output().unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(output.status.code(), Some(0), "stdout:\n{stdout}");
    assert!(suite.join("krein.out/report.json").exists());
    assert!(suite.join("case_a.out/report.json").exists());
    let summary_lines = stdout.lines().filter(|l| l.ends_with(".cfg: pass")).count();
    assert_eq!(summary_lines, 2, "stdout:\n{stdout}");
}
