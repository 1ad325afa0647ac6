#![no_main]

use fractam::corpus::{parse_record_line, validate_record, RoleCampMap, Strictness};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    let map = RoleCampMap::new();
    // Strict and lenient must never panic, whatever the bytes.
    let strict = parse_record_line(line, Strictness::Strict);
    let lenient = parse_record_line(line, Strictness::Lenient);
    if let Ok((record, _)) = &lenient {
        let _ = validate_record(record, &map);
        // A parsed record survives a serialize/parse round trip unchanged.
        let rendered = serde_json::to_string(record).unwrap();
        let (reparsed, unknown) = parse_record_line(&rendered, Strictness::Strict).unwrap();
        assert!(unknown.is_empty());
        assert_eq!(&reparsed, record);
    }
    // Anything strict accepts, lenient accepts identically.
    if let Ok((record, _)) = strict {
        let (lenient_record, unknown) = lenient.unwrap();
        assert!(unknown.is_empty());
        assert_eq!(record, lenient_record);
    }
});
