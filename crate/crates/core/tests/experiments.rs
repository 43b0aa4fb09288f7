use invgeo::data::DatasetConfig;
use invgeo::experiments::{
    cmd_alignmi_eval, cmd_gen_data, cmd_hypothesis, cmd_measure_alignment, cmd_report, cmd_train_target, exit_code,
    ExperimentConfig, Policy,
};
use invgeo::inversion::{InversionConfig, Smoothing};
use invgeo::Error;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        runs_per_class: 2,
        betas: vec![0.0, 1.0],
        beta: 1.0,
        dataset: DatasetConfig {
            samples_per_class: 60,
            private_classes: 4,
            auxiliary_classes: 4,
            ..DatasetConfig::default()
        },
        inversion: InversionConfig {
            steps: 30,
            k: 6,
            ..InversionConfig::default()
        },
        timing_repeats: 1,
        ..ExperimentConfig::default()
    }
}

#[test]
fn measure_alignment_reports_baseline_and_tracked_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let r = cmd_measure_alignment(&cfg, dir.path(), Policy::TrainMissing).unwrap();
    let rep = &r.replicates[0];
    assert_eq!(rep.analytic_baseline, 0.25);
    assert!((rep.empirical_baseline - 0.25).abs() < 0.025);
    assert_eq!(rep.tracked_steps_per_run, cfg.inversion.steps / cfg.inversion.track_every);
    assert_eq!(rep.dynamics.len(), 3);
    let runs = std::fs::read_dir(dir.path().join("measure-alignment/seed-0/runs")).unwrap().count();
    assert_eq!(runs, 4 * cfg.runs_per_class);
}

#[test]
fn hypothesis_table_is_sorted_and_beta_zero_matches_vanilla() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_hypothesis(&small(), dir.path(), Policy::TrainMissing).unwrap();
    let rows = &r.replicates[0].rows;
    assert!(rows.windows(2).all(|w| w[0].as_tr <= w[1].as_tr));
    let v = rows.iter().find(|x| x.model == "vanilla").unwrap();
    let z = rows.iter().find(|x| x.model == "aligned-beta-0").unwrap();
    assert!((v.as_tr - z.as_tr).abs() < 1e-10);
    assert!((v.test_acc - z.test_acc).abs() < 1e-10);
    let table = std::fs::read_to_string(dir.path().join("hypothesis/seed-0/table.csv")).unwrap();
    assert!(table.starts_with("# invgeo "));
}

#[test]
fn alignmi_methods_share_seeds_and_smoothing_costs_more() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let r = cmd_alignmi_eval(&cfg, dir.path(), Policy::TrainMissing).unwrap();
    let rep = &r.replicates[0];
    let methods: Vec<Smoothing> = rep.rows.iter().map(|m| m.method).collect();
    assert_eq!(methods, vec![Smoothing::None, Smoothing::Paa, Smoothing::Taa]);
    assert_eq!(rep.rows[0].cost_ratio, 1.0);
    assert!(rep.rows[1].cost_ratio > 1.0 && rep.rows[2].cost_ratio > 1.0);
    assert!(rep.timing.iter().skip(1).all(|t| t.runtime_ratio > 1.0));
    assert_eq!(rep.final_confidences.len(), 4 * cfg.runs_per_class);

    // the unsmoothed attack equals the measure-alignment runs on the same ids
    let m = cmd_measure_alignment(&cfg, dir.path(), Policy::Require).unwrap();
    assert_eq!(m.replicates[0].as_inv.median, rep.rows[0].as_inv_median);
}

#[test]
fn missing_artifacts_and_bad_configs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let e = cmd_train_target(&cfg, dir.path(), Policy::Require).unwrap_err();
    assert!(matches!(e.root(), Error::MissingArtifact(_)), "{e}");
    assert_eq!(exit_code(&e), 4);
    assert_eq!(exit_code(&cmd_report(dir.path()).unwrap_err()), 4);

    cmd_gen_data(&cfg, dir.path()).unwrap();
    let e = cmd_measure_alignment(&cfg, dir.path(), Policy::Require).unwrap_err();
    assert_eq!(exit_code(&e), 4);
    cmd_train_target(&cfg, dir.path(), Policy::Require).unwrap();
    cmd_measure_alignment(&cfg, dir.path(), Policy::Require).unwrap();

    let bad = ExperimentConfig {
        test_fraction: 1.5,
        ..small()
    };
    assert_eq!(exit_code(&cmd_gen_data(&bad, dir.path()).unwrap_err()), 2);
}

#[test]
fn changed_config_invalidates_cached_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    cmd_train_target(&cfg, dir.path(), Policy::TrainMissing).unwrap();
    cmd_measure_alignment(&cfg, dir.path(), Policy::Require).unwrap();
    let mut other = small();
    other.training.epochs += 1;
    let e = cmd_measure_alignment(&other, dir.path(), Policy::Require).unwrap_err();
    assert_eq!(exit_code(&e), 4);
}

#[test]
fn report_summarises_existing_runs() {
    let dir = tempfile::tempdir().unwrap();
    cmd_measure_alignment(&small(), dir.path(), Policy::TrainMissing).unwrap();
    let md = cmd_report(dir.path()).unwrap();
    assert!(md.contains("measure-alignment") || md.contains("Measure"), "{md}");
}
