//! Small bowel motility fixture. The data are not redistributable; point
//! `RTREND_BOWEL_DATA` at a long CSV file (one process per patient, with a
//! `#censoring` section) and run `cargo test -- --ignored`.

use renewal_trend::estimators::{pooled_estimates, EstimatorKind};
use renewal_trend::event_data::{parse_events, DataFormat, MultiProcessData};
use renewal_trend::statistics::{run_test, TestKind, TestSpec};

fn load() -> MultiProcessData {
    let path = std::env::var("RTREND_BOWEL_DATA").expect("set RTREND_BOWEL_DATA to the data file");
    let text = std::fs::read_to_string(path).unwrap();
    parse_events(&text, DataFormat::LongCsv, None).unwrap()
}

#[test]
#[ignore = "external data required: set RTREND_BOWEL_DATA"]
fn bowel_pooled_estimates() {
    let e = pooled_estimates(&load(), EstimatorKind::Sample).unwrap();
    assert!((e.mu - 98.76).abs() < 0.01);
    assert!((e.sigma - 52.62).abs() < 0.01);
    assert!((e.gamma - 0.533).abs() < 0.001);
}

#[test]
#[ignore = "external data required: set RTREND_BOWEL_DATA"]
fn bowel_lr_multi_and_gl() {
    let data = load();
    let mut spec = TestSpec::new(TestKind::LrMulti);
    spec.pooled = true;
    let r = run_test(&data, &spec).unwrap();
    assert!((r.statistic - 3.67).abs() < 0.01, "{}", r.statistic);
    assert!((r.p_value - 0.00024).abs() < 0.00002, "{}", r.p_value);
    let gl = run_test(&data, &TestSpec::new(TestKind::Gl)).unwrap();
    assert!((gl.p_value - 0.007).abs() < 0.0005, "{}", gl.p_value);
}
