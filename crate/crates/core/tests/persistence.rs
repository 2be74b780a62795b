use gradrec::datagen::{generate, GeneratorConfig};
use gradrec::hybrid::{HybridConfig, HybridMode};
use gradrec::pipeline::{
    discipline_map, evaluate, prepare, recalibrate, train_bundle, CalibrationMethod, ModelBundle,
    PipelineConfig, PreparedData,
};

fn small() -> PreparedData {
    let corpus = generate(&GeneratorConfig {
        n: 1500,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let dm = discipline_map(&corpus.disciplines).unwrap();
    prepare(
        &corpus.records,
        &corpus.universities,
        &dm,
        &PipelineConfig::default(),
    )
    .unwrap()
}

fn quick() -> HybridConfig {
    let mut c = HybridConfig::default();
    c.gbdt.n_estimators = 20;
    c.oof_folds = 3;
    c
}

#[test]
fn prepared_data_round_trips_through_a_directory() {
    let data = small();
    let dir = tempfile::tempdir().unwrap();
    data.save_dir(dir.path()).unwrap();
    let back = PreparedData::load_dir(dir.path()).unwrap();
    assert_eq!(back.records, data.records);
    assert_eq!(back.split, data.split);
    assert_eq!(back.schema.fingerprint(), data.schema.fingerprint());
    assert_eq!(back.train, data.train);
    assert_eq!(back.test, data.test);
    assert_eq!(back.report, data.report);
    let csv = std::fs::read(dir.path().join("test.csv")).unwrap();
    assert_eq!(
        gradrec::features::FeatureMatrix::read_csv(csv.as_slice()).unwrap(),
        data.test
    );
}

#[test]
fn bundle_reload_predicts_identically() {
    let data = small();
    let bundle = train_bundle(&data, quick()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    bundle.save(&path).unwrap();
    let back = ModelBundle::load(&path).unwrap();
    assert_eq!(back, bundle);
    let a = bundle
        .hybrid
        .predict_batch(&data.test, HybridMode::Deployment, None)
        .unwrap();
    let b = back
        .hybrid
        .predict_batch(&data.test, HybridMode::Deployment, None)
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn tampered_bundle_is_rejected() {
    let data = small();
    let mut bundle = train_bundle(&data, quick()).unwrap();
    bundle.schema_fingerprint = "0000".into();
    assert!(bundle.check().is_err());
    bundle.schema_fingerprint = data.schema.fingerprint();
    bundle.version = 99;
    assert!(bundle.check().is_err());
}

#[test]
fn recalibration_swaps_only_the_calibrator() {
    let data = small();
    let bundle = train_bundle(&data, quick()).unwrap();
    let iso = recalibrate(&bundle, &data.validation, CalibrationMethod::Isotonic).unwrap();
    assert_eq!(iso.hybrid.calibrator.name(), "isotonic");
    assert_eq!(iso.metadata.calibrator, "isotonic");
    assert_eq!(iso.hybrid.gbdt, bundle.hybrid.gbdt);
    evaluate(&iso, &data.test).unwrap();
    let platt = recalibrate(&bundle, &data.validation, CalibrationMethod::Platt).unwrap();
    assert_eq!(platt, bundle);
}
