use adequa::harness::{execute, load_config, ExperimentConfig, PolicySpec, Preset};

#[test]
fn centralized_mapping_keeps_the_hard_instance_stable() {
    let cfg = ExperimentConfig::from_preset(Preset::HardFig2, PolicySpec::Centralized, 50_000, vec![1, 2]);
    let summary = execute(&cfg).unwrap().summary();
    let final_decile = summary.mean_queue.final_decile.unwrap();
    assert!(final_decile < 20.0, "{final_decile}");
    assert!(summary.mean_queue.final_half_slope.unwrap().abs() < 1e-3);
}

#[test]
fn prop1_preset_with_counterexample_sized_instance() {
    let cfg = ExperimentConfig::from_preset(Preset::parse("prop1(3)").unwrap(), PolicySpec::Exp3, 3_000, vec![5]);
    let out = execute(&cfg).unwrap();
    assert_eq!(out.params.n_queues(), 6);
    let last = out.runs[0].trajectory.rounds.last().unwrap();
    let arrived: u64 = last.arrived_cum.iter().sum();
    let expected = 3_000.0 * 6.0 / 6.0;
    assert!((arrived as f64 - expected).abs() < 5.0 * expected.sqrt(), "{arrived}");
}

#[test]
fn config_file_drives_a_mixed_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.json");
    std::fs::write(
        &path,
        r#"{
            "instance": {"lambda": [0.2, 0.1, 0.3], "mu": [0.6, 0.5, 0.4]},
            "policies": ["adequa", "exp3", "fixed(0.2,0.3,0.5)"],
            "horizon": 4000,
            "seeds": [1, 2],
            "schedule": {"x": 6, "alpha": 0.25},
            "record_stride": 400
        }"#,
    )
    .unwrap();
    let cfg = load_config(&path).unwrap();
    let out = execute(&cfg).unwrap();
    assert_eq!(out.labels, vec!["adequa", "exp3", "fixed"]);
    let summary = out.summary();
    assert_eq!(summary.time_avg_queue.len(), 3);
    assert_eq!(summary.estimator_errors.as_ref().unwrap().mu_max.len(), 2);
    for run in &out.runs {
        assert!(run.estimates[0].is_some());
        assert!(run.estimates[1].is_none() && run.estimates[2].is_none());
        assert_eq!(run.trajectory.rounds.len(), 10);
    }
}
