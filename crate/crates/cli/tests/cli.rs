use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lf2i(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lf2i"))
        .args(args)
        .env("LF2I_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, extra: &str) -> String {
    let text = format!(
        r#"schema_version = 1
name = "{name}"
seed = 3
n = 10
alpha = 0.1

[simulator]
kind = "mvg"
dim = 1

[statistic]
kind = "exact-lrt"

[calibration]
b_prime = 400

[inference]
grid_points = 41
true_theta = [0.5]

[diagnostics]
b_double_prime = 300
report_points = 11
{extra}"#
    );
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_shipped_presets() {
    let root = tempfile::tempdir().unwrap();
    let presets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(presets).unwrap() {
        let path = entry.unwrap().path();
        let out = lf2i(&["validate", path.to_str().unwrap()], root.path());
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_errors_exit_2_with_key_path() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "bad", "\n[pvalues]\nb_prime = 10\n");
    let out = lf2i(&["validate", &cfg], root.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pvalues.b_prime"));
    let out = lf2i(&["validate", "/nonexistent/config.toml"], root.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_of_order_stage_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "order", "");
    let out = lf2i(&["calibrate", &cfg], root.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("calibrate") && err.contains("simulate"), "{err}");
}

#[test]
fn stages_run_one_by_one_under_output_root() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "staged", "");
    for stage in ["simulate", "train-odds", "calibrate", "invert", "diagnose"] {
        let out = lf2i(&["--workers", "1", stage, &cfg], root.path());
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let run = root.path().join("staged");
    for f in ["manifest.json", "observed.csv", "cutoffs.csv", "confidence_set.csv", "interval.json", "coverage.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
}

#[test]
fn pipeline_is_reproducible_and_checks_pass() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "repro", "");
    let a = root.path().join("a");
    let b = root.path().join("b");
    for dir in [&a, &b] {
        let out = lf2i(&["pipeline", &cfg, "--check", "--out", dir.to_str().unwrap()], root.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    }
    for f in ["cutoffs.csv", "confidence_set.csv", "coverage.csv", "coverage_summary.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failed_check_exits_4() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "strict", "\n[check]\nmax_length_pct = 0.5\n");
    let out = lf2i(&["pipeline", &cfg, "--check"], root.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL interval length"), "{stdout}");
}

#[test]
fn bad_observed_data_is_a_numeric_failure() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("obs.csv");
    fs::write(&data, "x_0\n1.0\nNaN\n").unwrap();
    let cfg = write_config(root.path(), "nan", "");
    let text = fs::read_to_string(&cfg).unwrap().replace(
        "true_theta = [0.5]",
        &format!("observed = \"{}\"", data.display()),
    );
    fs::write(&cfg, text).unwrap();
    let out = lf2i(&["simulate", &cfg], root.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dry_run_and_model_selection() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(
        root.path(),
        "select",
        "\n[selection]\ncandidates = [{ kind = \"qda\" }, { kind = \"logistic\", degree = 1 }]\nbudgets = [200, 800]\nheldout = 500\n",
    );
    let out = lf2i(&["pipeline", &cfg, "--dry-run"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = lf2i(&["select-model", &cfg], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("chosen:"));
    let csv = fs::read_to_string(root.path().join("select/selection.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let out = lf2i(&["compare-baselines", &cfg], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(root.path().join("select/baselines.csv")).unwrap();
    assert!(csv.contains("chi2") && csv.contains("monte-carlo") && csv.contains("quantile-regression"));
}
