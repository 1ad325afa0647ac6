#![no_main]

use fractam::reasoner::{parse_prediction_file, serialize_prediction};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_prediction_file(text) {
        // One serialization normalizes; after that, serialize∘parse is a
        // fixpoint.
        let rendered: String = records
            .iter()
            .map(serialize_prediction)
            .collect::<Vec<_>>()
            .join("\n");
        let normalized = parse_prediction_file(&rendered).unwrap();
        assert_eq!(normalized.len(), records.len());
        let rerendered: String = normalized
            .iter()
            .map(serialize_prediction)
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(rendered, rerendered);
        assert_eq!(parse_prediction_file(&rerendered).unwrap(), normalized);
    }
});
