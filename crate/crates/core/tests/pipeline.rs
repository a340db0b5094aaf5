use std::path::Path;
use std::process::{Command, Output};

use resilient_adp::scenario::{self, run_pipeline, Stage};

fn resadp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resadp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_bundled_config() {
    let o = resadp(&["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("n = 3, m = 1, q = 3"));
}

#[test]
fn validate_reports_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &scenario::ACC_CONFIG.replace("kappa = 0.5", "kappa = -0.5\nbogus = 1"));
    let o = resadp(&["--config", &cfg, "validate"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn missing_config_file_is_reported() {
    let o = resadp(&["--config", "/nonexistent/scenario.toml", "validate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/scenario.toml"));
}

#[test]
fn certify_before_learn_names_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let o = resadp(&["--out", &out, "certify"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains(scenario::POLICY_JSON) && err.contains("learn"), "{err}");
}

#[test]
fn gen_dos_is_seeded() {
    let a = stdout(&resadp(&["--seed", "3", "gen-dos"]));
    let b = stdout(&resadp(&["--seed", "3", "gen-dos"]));
    let c = stdout(&resadp(&["--seed", "4", "gen-dos"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let parsed: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(parsed.is_object());
}

#[test]
fn stages_run_in_order_and_match_full_run() {
    let staged = tempfile::tempdir().unwrap();
    let out = staged.path().to_string_lossy().into_owned();
    for stage in ["collect", "learn", "certify", "simulate", "compare"] {
        let o = resadp(&["--out", &out, "--no-plots", stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for file in [
        scenario::COLLECT_CSV,
        scenario::POLICY_JSON,
        scenario::CERTIFICATE_JSON,
        scenario::SCHEDULE_JSON,
        scenario::CLOSED_LOOP_CSV,
        scenario::METRICS_CSV,
    ] {
        assert!(staged.path().join(file).exists(), "{file}");
    }
    assert!(!staged.path().join("comparison.svg").exists());

    let full = tempfile::tempdir().unwrap();
    let o = resadp(&["--out", &full.path().to_string_lossy(), "--no-plots", "run", "--stage", "all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for file in [scenario::POLICY_JSON, scenario::CERTIFICATE_JSON, scenario::METRICS_CSV] {
        assert_eq!(
            std::fs::read(staged.path().join(file)).unwrap(),
            std::fs::read(full.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn summary_is_deterministic() {
    let cfg = scenario::load_and_validate(scenario::ACC_CONFIG).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, Stage::All, a.path(), true).unwrap();
    run_pipeline(&cfg, Stage::All, b.path(), false).unwrap();
    let read = |d: &Path| std::fs::read_to_string(d.join(scenario::SUMMARY_JSON)).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert!(a.path().join("comparison.svg").exists());
    assert!(!b.path().join("comparison.svg").exists());

    let summary: serde_json::Value = serde_json::from_str(&read(a.path())).unwrap();
    for key in ["seed", "learning", "oracle", "certificate", "closed_loop", "metrics"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    let gap = summary["oracle"]["k_rel_error"].as_f64().unwrap();
    assert!(gap < 1e-3, "learned gain is {gap} away from the model-based optimum");
}
