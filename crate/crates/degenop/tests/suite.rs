use degenop::harness::{registry, run_suite, SuiteConfig};
use degenop::ModelParams;

fn window_dependent() -> Vec<String> {
    registry().iter().filter(|c| c.window_dependent()).map(|c| c.id.to_string()).collect()
}

#[test]
fn out_of_window_space_fails_only_the_window_dependent_checks() {
    // (m+1)/p = 1.2 against the window (0, 1).
    let mut checks = window_dependent();
    checks.push("parameter_maps".into());
    let cfg = SuiteConfig {
        model: ModelParams::new(vec![0.0], 0.0, 0.0, 1.4, 2.0).unwrap(),
        checks,
        ..Default::default()
    };
    let results = run_suite(&cfg, None).unwrap();
    assert_eq!(results.len(), 7);
    for r in &results {
        if r.estimate_id == "parameter_maps" {
            assert!(r.pass, "{}", r.detail);
        } else {
            assert!(!r.pass, "{} passed outside the window: {}", r.estimate_id, r.detail);
        }
    }
}

#[test]
fn suite_writes_one_csv_per_check_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SuiteConfig {
        checks: vec!["resolvent_identity".into(), "parameter_maps".into(), "parameter_maps".into()],
        ..Default::default()
    };
    let results = run_suite(&cfg, Some(dir.path())).unwrap();
    let ids: Vec<&str> = results.iter().map(|r| r.estimate_id.as_str()).collect();
    assert_eq!(ids, ["parameter_maps", "resolvent_identity"]);
    for r in &results {
        assert!(r.pass, "{}: {}", r.estimate_id, r.detail);
        assert!(r.csv.as_ref().unwrap().exists());
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("estimate_id,pass,constant,drift"));
    assert!(lines.next().unwrap().starts_with("parameter_maps,true,"));
    assert!(lines.next().unwrap().starts_with("resolvent_identity,true,"));
    assert_eq!(lines.next(), None);
}

#[test]
fn seeded_checks_reproduce_their_csvs() {
    let cfg = SuiteConfig {
        checks: vec!["square_function".into(), "parameter_maps".into(), "contraction".into()],
        ..Default::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_suite(&cfg, Some(a.path())).unwrap();
    run_suite(&cfg, Some(b.path())).unwrap();
    for name in ["square_function.csv", "parameter_maps.csv", "contraction.csv", "summary.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn a_different_seed_changes_the_random_probes() {
    let run = |seed| {
        let cfg = SuiteConfig { checks: vec!["square_function".into()], seed, ..Default::default() };
        run_suite(&cfg, None).unwrap().remove(0).values
    };
    assert_ne!(run(1), run(2));
}
