mod common;

use kinespike::nets::{load, save, Mode, ModelFile, ModelKind, ModelSpec, Network};
use kinespike::{Error, Target};

#[test]
fn lstm_round_trip_gives_identical_outputs() {
    let prepared = common::small_prepared();
    let (spec, params) = common::trained(ModelKind::Lstm, &prepared);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.model.json");
    save(&spec, &params, &path).unwrap();
    let (spec2, params2) = load(&path).unwrap();
    assert_eq!(spec, spec2);
    assert_eq!(params, params2);
    let net = Network::new(&spec).unwrap();
    let w: Vec<_> = prepared.split.test.iter().take(8).collect();
    let a = net.forward(&params, &w, Mode::Eval).unwrap();
    let b = net.forward(&params2, &w, Mode::Eval).unwrap();
    assert_eq!(a.probs, b.probs);
    assert_eq!(a.embedding, b.embedding);
}

#[test]
fn truncated_file_is_format_error() {
    let spec = ModelSpec::new(ModelKind::Fcn, Target::Operator);
    let params = Network::new(&spec).unwrap().init(1);
    let text = ModelFile::new(&spec, &params).to_json();
    for cut in [0, 10, text.len() / 2, text.len() - 2] {
        assert!(
            matches!(ModelFile::from_json(&text[..cut]), Err(Error::Format(_))),
            "cut at {cut}"
        );
    }
}

#[test]
fn shapes_must_match_spec() {
    let spec = ModelSpec::new(ModelKind::Cnn, Target::Task);
    let params = Network::new(&spec).unwrap().init(1);
    let mut file = ModelFile::new(&spec, &params);
    let conv = file
        .tensors
        .iter_mut()
        .find(|t| t.name == "conv.w")
        .unwrap();
    conv.shape.reverse();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.model.json");
    std::fs::write(&path, file.to_json()).unwrap();
    let err = load(&path).unwrap_err();
    assert!(matches!(err, Error::Format(_)), "{err}");
    assert!(err.to_string().contains("conv.w"), "{err}");
}
