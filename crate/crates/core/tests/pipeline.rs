//! End-to-end runs of the library pipeline at toy budgets.

use tscshift::dqn::{train_dqn, DqnHyper};
use tscshift::eval::{
    read_long_csv, run_experiment, Algorithm, ExperimentManifest, CURVE, INCOMPLETE_MARKER,
    REPORT_LONG, REPORT_PIVOT, TIMING,
};
use tscshift::meta::{adapt_to_scenario, train_metalight, MetaCheckpoint, MetaHyper};
use tscshift::nn::QNetworkParams;
use tscshift::scenario::{make_test_scenarios, make_training_set, table_i_bases, ScenarioSet};
use tscshift::sim::IntersectionConfig;
use tscshift::Error;

fn short_config() -> IntersectionConfig {
    IntersectionConfig {
        horizon: 600.0,
        drain: 200.0,
        ..IntersectionConfig::default()
    }
}

#[test]
fn files_written_by_one_stage_feed_the_next() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config();
    let train = make_training_set(&table_i_bases()[..2], config.horizon, 1).unwrap();
    train.write_dir(&dir.path().join("train")).unwrap();
    let train = ScenarioSet::read_dir(&dir.path().join("train")).unwrap();

    let dqn = train_dqn(
        &config,
        &train,
        &DqnHyper {
            episodes: 3,
            batch_size: 8,
            ..DqnHyper::default()
        },
    )
    .unwrap();
    let params_path = dir.path().join("dqn.params");
    dqn.params.save(&params_path).unwrap();
    assert_eq!(QNetworkParams::load(&params_path).unwrap(), dqn.params);

    let hyper = MetaHyper {
        meta_iterations: 2,
        batch_size: 8,
        ..MetaHyper::default()
    };
    let meta = train_metalight(&config, &train, &hyper).unwrap();
    let ckpt_path = dir.path().join("meta.toml");
    meta.checkpoint.save(&ckpt_path).unwrap();
    let ckpt = MetaCheckpoint::load(&ckpt_path).unwrap();
    ckpt.verify_digest(&train).unwrap();

    let test = make_test_scenarios(&table_i_bases(), config.horizon, 1).unwrap();
    assert!(ckpt.verify_digest(&test).is_err());
    let a = adapt_to_scenario(&ckpt, &test.scenarios[0], None, &config, 3).unwrap();
    let b = adapt_to_scenario(&meta.checkpoint, &test.scenarios[0], None, &config, 3).unwrap();
    assert_eq!(a.params, b.params);
}

const SETTINGS: &str = "[intersection]\nhorizon = 600.0\ndrain = 200.0\n\
[dqn]\nepisodes = 2\nbatch_size = 8\n[meta]\nmeta_iterations = 2\nbatch_size = 8\n";

fn manifest(dir: &std::path::Path, algorithms: &str, seeds: &str) -> ExperimentManifest {
    std::fs::write(dir.join("settings.toml"), SETTINGS).unwrap();
    let text = format!(
        "schema = 1\nconfig = \"settings.toml\"\nalgorithms = {algorithms}\nseeds = {seeds}\n\
         out_dir = \"out\"\n[training]\nbuiltin = \"table-i\"\nlabels = [\"scenario-2\"]\n\
         [test]\nbuiltin = \"table-i\"\n"
    );
    ExperimentManifest::from_toml(&text, "manifest", dir).unwrap()
}

#[test]
fn single_cell_experiment_gives_single_row_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(dir.path(), "[\"max_pressure\"]", "[4]");
    m.test.labels = Some(vec!["scenario-3".into()]);
    m.test.mode = tscshift::eval::TestMode::PerBase;
    let report = run_experiment(&m).unwrap();
    assert_eq!(report.records.len(), 1);
    let out = &m.out_dir;
    let long = read_long_csv(&out.join(REPORT_LONG)).unwrap();
    assert_eq!(long.len(), 1);
    assert_eq!(long[0].algorithm, Algorithm::MaxPressure);
    let pivot = std::fs::read_to_string(out.join(REPORT_PIVOT)).unwrap();
    assert_eq!(pivot.lines().count(), 2);
    assert!(pivot.lines().nth(1).unwrap().ends_with("(best)"));
    assert_eq!(std::fs::read_to_string(out.join(CURVE)).unwrap().lines().count(), 2);
    assert!(std::fs::read_to_string(out.join(TIMING)).unwrap().contains("train_from_scratch,,0"));
    assert!(!out.join(INCOMPLETE_MARKER).exists());
}

#[test]
fn experiment_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), "[\"metalight\", \"rl_no_adapt\", \"fixed_time\"]", "[0, 1]");
    run_experiment(&m).unwrap();
    let first: Vec<String> = [REPORT_LONG, REPORT_PIVOT, CURVE]
        .iter()
        .map(|f| std::fs::read_to_string(m.out_dir.join(f)).unwrap())
        .collect();
    run_experiment(&m).unwrap();
    for (f, before) in [REPORT_LONG, REPORT_PIVOT, CURVE].iter().zip(&first) {
        assert_eq!(&std::fs::read_to_string(m.out_dir.join(f)).unwrap(), before, "{f}");
    }
    assert_eq!(first[1].lines().count(), 4);
    assert_eq!(first[1].lines().next().unwrap().split(',').count(), 6);
}

#[test]
fn failing_stage_is_tagged_and_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(dir.path(), "[\"metalight\"]", "[0]");
    // A single training scenario cannot fill the default task batch of 3.
    m.training = tscshift::eval::SetSpec {
        dir: Some(dir.path().join("one")),
        ..Default::default()
    };
    let train = make_training_set(&table_i_bases()[..1], 600.0, 0).unwrap();
    let one = ScenarioSet {
        scenarios: train.scenarios[..1].to_vec(),
        kind: train.kind,
    };
    one.write_dir(&dir.path().join("one")).unwrap();
    let err = run_experiment(&m).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "train-meta"), "{err}");
    let marker = std::fs::read_to_string(m.out_dir.join(INCOMPLETE_MARKER)).unwrap();
    assert!(marker.contains("train-meta"));
}
