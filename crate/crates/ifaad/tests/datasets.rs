mod common;

use ifaad::data::{self, presets};
use ifaad::harness::{self, Arm, ExperimentConfig};

#[test]
fn every_preset_with_a_fixture_reproduces_its_published_size() {
    let mut checked = 0;
    for preset in presets() {
        let Some(raw) = common::raw_fixture(preset.name, 1) else { continue };
        let ds = data::prepare(&preset, &raw, 0).unwrap();
        assert_eq!((ds.len(), ds.dims(), ds.num_anomalies()), preset.expected, "{}", preset.name);
        checked += 1;
    }
    assert_eq!(checked, presets().len() - 1, "only covtype lacks a fixture");
}

#[test]
fn abalone_encoding_keeps_two_sex_indicators() {
    let preset = data::preset("abalone").unwrap();
    let ds = data::prepare(&preset, &common::raw_fixture("abalone", 2).unwrap(), 0).unwrap();
    assert_eq!(&ds.feature_names[..3], ["sex=I", "sex=M", "length"]);
    assert_eq!(ds.dropped_rows, 115 + 391);
}

#[test]
fn wrong_histogram_is_reported() {
    let preset = data::preset("yeast").unwrap();
    let mut raw = common::raw_fixture("yeast", 3).unwrap();
    raw.push_str("EXTRA_YEAST 0.1 0.1 0.1 0.1 0.1 0.1 0.1 0.1 ERL\n");
    let err = data::prepare(&preset, &raw, 0).unwrap_err();
    assert_eq!(err.code(), "schema_error");
}

#[test]
fn prepared_files_carry_a_matching_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let preset = data::preset("abalone").unwrap();
    let ds = data::prepare(&preset, &common::raw_fixture("abalone", 4).unwrap(), 0).unwrap();
    let manifest = data::write_prepared(&ds, &preset.schema.mapping, dir.path()).unwrap();
    let csv = std::fs::read(dir.path().join("abalone.csv")).unwrap();
    assert_eq!(manifest.sha256, data::sha256_hex(&csv));
    assert_eq!((manifest.total, manifest.dims, manifest.anomalies), (1920, 9, 29));

    let reloaded = data::load_csv(&dir.path().join("abalone.csv"), &data::CsvSchema::canonical()).unwrap();
    assert_eq!(reloaded.instances, ds.instances);
    assert_eq!(reloaded.truth, ds.truth);
}

#[test]
fn exported_results_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = data::make_synthetic_2d(120, 6, 5);
    let cfg = ExperimentConfig {
        arm: Arm::IfAad,
        budget: 12,
        num_runs: 3,
        num_trees: 20,
        subsample_size: 64,
        ..ExperimentConfig::default()
    };
    let curve = harness::run_experiment(&ds, &cfg).unwrap();
    let path = dir.path().join("curve.csv");
    harness::export_results(&curve, &ds, &path).unwrap();
    let loaded = harness::load_results(&path).unwrap();
    assert_eq!(loaded.iteration, (1..=12).collect::<Vec<_>>());
    assert_eq!(loaded.mean, curve.mean);
    assert_eq!(loaded.ci_low, curve.ci_low);
    assert_eq!(loaded.ci_high, curve.ci_high);
    assert_eq!(loaded.runs, curve.runs);

    let queries = std::fs::read_to_string(harness::queries_path(&path)).unwrap();
    assert_eq!(queries.lines().count(), 1 + 3 * 12);
}

#[test]
fn baseline_curve_is_a_prefix_scan_of_the_ranking() {
    let ds = data::make_synthetic_2d(150, 8, 6);
    let cfg = ExperimentConfig {
        arm: Arm::IfBaseline,
        budget: 20,
        num_runs: 2,
        num_trees: 25,
        subsample_size: 64,
        ..ExperimentConfig::default()
    };
    let curve = harness::run_experiment(&ds, &cfg).unwrap();
    for (run, record) in curve.records.iter().enumerate() {
        let forest = harness::build_forest_parallel(&ds, &cfg.forest_params(run)).unwrap();
        let order = ifaad_core::baseline_rank(&forest, &ds.instances).unwrap();
        let mut found = 0;
        for (i, &id) in order[..20].iter().enumerate() {
            found += usize::from(ds.truth[id].is_anomaly());
            assert_eq!(curve.runs[run][i], found);
        }
        assert_eq!(record.queried, order[..20]);
    }
}
