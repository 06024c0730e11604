#![no_main]

use drt_core::model::MlpClassifier;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = MlpClassifier::from_json_slice(data) {
        let again = MlpClassifier::from_json_slice(model.to_json().as_bytes()).expect("re-parse");
        assert_eq!(model, again);
    }
});
