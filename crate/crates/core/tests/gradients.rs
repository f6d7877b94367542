use trajtensor_core::gradsuite::{layer_suite, model_suite};

#[test]
fn every_layer_matches_finite_differences() {
    for entry in layer_suite().unwrap() {
        assert!(entry.passed(), "{}: {:?}", entry.name, entry.report.failures());
    }
}

#[test]
fn every_family_and_head_matches_finite_differences() {
    let entries = model_suite().unwrap();
    assert_eq!(entries.len(), 20);
    for entry in entries {
        assert!(entry.passed(), "{}: {:?}", entry.name, entry.report.failures());
    }
}
