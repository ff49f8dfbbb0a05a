use cogmask::config::{preset, validate_text, ScenarioConfig};
use cogmask::runner::{execute, prepare_network, run_replicates, run_scenario, simulate_replicate, RunError};

fn small(horizon: u32, replicates: usize) -> ScenarioConfig {
    let mut cfg = preset("fig3_base").unwrap();
    cfg.network.n = Some(300);
    cfg.network.edges = Some(3300);
    cfg.schedule.horizon_days = horizon;
    cfg.schedule.replicates = replicates;
    cfg
}

#[test]
fn same_seed_gives_identical_daily_csv() {
    let cfg = small(120, 3);
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    assert_eq!(a.daily_csv, b.daily_csv);
    assert_eq!(a.agents_csv, b.agents_csv);

    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(execute(&other).unwrap().daily_csv, a.daily_csv);
}

#[test]
fn zero_horizon_records_day_zero_only() {
    let cfg = small(0, 2);
    let art = execute(&cfg).unwrap();
    let rows: Vec<&str> = art.daily_csv.lines().collect();
    assert_eq!(rows.len(), 1 + 2);
    assert!(rows[1].starts_with("0,0,"));
    assert!(rows[2].starts_with("1,0,"));
}

#[test]
fn masks_hold_for_a_whole_epoch() {
    // days 0..=69 are exactly ten weekly epochs
    let cfg = small(69, 1);
    let net = prepare_network(&cfg).unwrap();
    let run = simulate_replicate(&cfg, &net.graph, 0).unwrap();
    assert_eq!(run.epoch_mask_fractions.len(), 10);
    for (days, epochs) in run.masked_days.iter().zip(&run.masked_epochs) {
        assert_eq!(*days, 7 * epochs);
    }
    for week in run.records.chunks(7) {
        assert!(week.iter().all(|r| r.masked == week[0].masked));
    }
}

#[test]
fn replicates_do_not_depend_on_each_other() {
    let cfg = small(80, 3);
    let net = prepare_network(&cfg).unwrap();
    let all = run_replicates(&cfg, &net.graph, 3).unwrap();
    let alone = simulate_replicate(&cfg, &net.graph, 2).unwrap();
    assert_eq!(all[2].records, alone.records);
    assert_eq!(all[2].masked_days, alone.masked_days);
    assert_ne!(all[0].records, all[1].records);
}

#[test]
fn every_day_is_conserved() {
    let cfg = small(150, 2);
    let net = prepare_network(&cfg).unwrap();
    for run in run_replicates(&cfg, &net.graph, 2).unwrap() {
        assert!(run.records.iter().all(|r| r.total() == 300));
        assert_eq!(run.records.len(), 151);
    }
}

#[test]
fn run_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(40, 2);
    cfg.output.dir = dir.path().join("out");
    let summary = run_scenario(&cfg).unwrap();
    assert_eq!(summary.replicates.len(), 2);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cfg.output.dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(json["scenario"], "fig3_base");
    assert_eq!(json["parameters"]["cognition.mu"], serde_json::json!(cfg.cognition.mu));
    let agents = std::fs::read_to_string(cfg.output.dir.join("agents.csv")).unwrap();
    assert_eq!(agents.lines().count(), 1 + 2 * 300);
    let daily = std::fs::read_to_string(cfg.output.dir.join("daily.csv")).unwrap();
    assert_eq!(daily.lines().count(), 1 + 2 * 41);
}

#[test]
fn unwritable_output_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("taken");
    std::fs::write(&blocker, "not a directory").unwrap();
    let mut cfg = small(10, 1);
    cfg.output.dir = blocker.join("out");
    let err = run_scenario(&cfg).unwrap_err();
    assert!(matches!(err, RunError::Output { .. }));
    assert_eq!(err.exit_code(), 3);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let mut cfg = small(10, 1);
    cfg.reward.mf = Some(1.5);
    let err = execute(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("reward.mf"), "{err}");
}

#[test]
fn missing_edge_list_is_a_runtime_error() {
    let mut cfg = small(10, 1);
    cfg.network.generator = cogmask::config::Generator::EdgeList;
    cfg.network.n = None;
    cfg.network.edges = None;
    cfg.network.path = Some("/nonexistent/contacts.txt".into());
    let err = execute(&cfg).unwrap_err();
    assert!(matches!(err, RunError::Graph { .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn discounting_without_deferral_is_rejected() {
    let errs = validate_text("[cognition]\ngamma = 0.95\ndeferred_learning = false\n").unwrap_err();
    assert_eq!(errs.len(), 1);
    assert!(errs[0].contains("deferred_learning"), "{errs:?}");
}
