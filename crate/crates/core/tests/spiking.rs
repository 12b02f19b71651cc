mod common;

use kinespike::nets::{evaluate, ModelFile, ModelKind};
use kinespike::spiking::{convert, evaluate_snn, load_snn, save_snn, SimConfig};

#[test]
fn snn_file_round_trip_simulates_identically() {
    let prepared = common::small_prepared();
    let (spec, params) = common::trained(ModelKind::Cnn, &prepared);
    let config = SimConfig {
        steps: 60,
        ..SimConfig::default()
    };
    let snn = convert(&spec, &params, config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.snn.json");
    let mut file = ModelFile::new(&spec, &params);
    file.extra = Some(serde_json::json!({ "encoding": "kept" }));
    save_snn(&snn, file, &path).unwrap();
    let (file, loaded) = load_snn(&path).unwrap();
    assert_eq!(file.extra.as_ref().unwrap()["encoding"], "kept");
    assert_eq!(loaded.config, config);
    for w in prepared.split.test.iter().take(5) {
        assert_eq!(snn.simulate(w).unwrap(), loaded.simulate(w).unwrap());
    }
}

#[test]
fn plain_model_file_is_not_an_snn() {
    let prepared = common::small_prepared();
    let (spec, params) = common::trained(ModelKind::Fcn, &prepared);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.model.json");
    ModelFile::new(&spec, &params).save(&path).unwrap();
    assert!(matches!(load_snn(&path), Err(kinespike::Error::Format(_))));
}

#[test]
fn fcn_snn_tracks_rate_network() {
    let prepared = common::small_prepared();
    let (spec, params) = common::trained_for(ModelKind::Fcn, &prepared, 10, 40);
    let test = &prepared.split.test;
    let ann = evaluate(&spec, &params, test).unwrap();
    let snn = convert(&spec, &params, SimConfig::default()).unwrap();
    let a = evaluate_snn(&snn, test).unwrap();
    let b = evaluate_snn(&snn, test).unwrap();
    assert_eq!(a, b);
    let agree = ann
        .predictions
        .iter()
        .zip(&a.evaluation.predictions)
        .filter(|(x, y)| x == y)
        .count() as f64
        / test.len() as f64;
    assert!(agree >= 0.95, "agreement {agree}");
    assert!((a.evaluation.accuracy - ann.accuracy).abs() <= 0.03);
    assert!(a.mean_spikes > 0.0 && a.mean_synaptic_events > a.mean_spikes);
}
