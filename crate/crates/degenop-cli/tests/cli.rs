use std::path::Path;
use std::process::{Command, Output};

fn degenop(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degenop"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn elliptic_solve_reports_residuals_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = degenop(&["solve_elliptic", "--refine", "32,64"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("J=32 residual="), "{text}");
    assert!(text.contains("J=64 residual="), "{text}");
    for f in ["solution.csv", "convergence.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve_elliptic");
    assert_eq!(manifest["config"]["grid"]["levels"], serde_json::json!([32, 64]));
    assert!(manifest["reduction"]["chain"].is_object());
    assert!(manifest["version"].is_string());
}

#[test]
fn parabolic_solve_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "[parabolic]\nscheme = \"backward_euler\"\nsteps = 8\nsnapshots = 2\n");
    let out = dir.path().join("out");
    let o = degenop(&["solve_parabolic", "--config", &cfg, "--refine", "32,64"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("state_step00000.csv").exists());
    assert!(out.join("state_step00016.csv").exists());
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"scheme\": \"backward_euler\""));
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[operator]\nalpah1 = 0.5\n");
    let o = degenop(&["solve_elliptic", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpah1"), "{}", stderr(&o));
}

#[test]
fn inconsistent_operator_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[operator]\ndimension = 2\n");
    let o = degenop(&["verify", "parameter_maps", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("q_matrix"), "{}", stderr(&o));
}

#[test]
fn bad_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(degenop(&["verify", "no_such_check"], dir.path()).status.code(), Some(2));
    assert_eq!(degenop(&["verify", "parameter_maps", "--threads", "0"], dir.path()).status.code(), Some(2));
    assert_eq!(degenop(&["sweep", "kappa", "0", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(degenop(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn kernel_bounds_baseline_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = degenop(&["verify", "kernel_bounds", "--threads", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS kernel_bounds"));
    assert!(dir.path().join("kernel_bounds.csv").exists());
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn failing_check_exits_with_one() {
    // (m+1)/p = 1.2 lies above the window (0, 1).
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "out.toml", "[operator]\nm = 1.4\n");
    let o = degenop(&["verify", "interpolation,parameter_maps", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("FAIL interpolation"), "{text}");
    assert!(text.contains("PASS parameter_maps"), "{text}");
}

#[test]
fn reruns_reproduce_csvs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = degenop(&["verify", "square_function,parameter_maps", "--seed", "11"], &out);
            assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
            let o = degenop(&["solve_elliptic", "--refine", "32,64"], &out.join("solve"));
            assert_eq!(o.status.code(), Some(0));
            out
        })
        .collect();
    for f in ["square_function.csv", "parameter_maps.csv", "summary.csv", "solve/solution.csv", "manifest.json"] {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        let b = std::fs::read(runs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn coarse_levels_are_rejected_for_window_dependent_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = degenop(&["verify", "mikhlin", "--refine", "64,128"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("levels"), "{}", stderr(&o));
    let o = degenop(&["verify", "resolvent_identity", "--refine", "64,128"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn sweep_records_the_window_edge() {
    let dir = tempfile::tempdir().unwrap();
    let o = degenop(&["sweep", "m", "0.2", "1.4", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
    assert!(rows[..6].iter().all(|r| r.contains(",true,")));
}
