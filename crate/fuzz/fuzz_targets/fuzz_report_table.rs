#![no_main]

use fractam::report::{parse_table, render_table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_table(text) {
        // Accepted tables re-render and re-parse to the same rows.
        let rendered = render_table(&rows);
        let reparsed = parse_table(&rendered).unwrap();
        assert_eq!(reparsed.len(), rows.len());
        for (a, b) in rows.iter().zip(&reparsed) {
            assert_eq!(a.model_id, b.model_id);
        }
    }
});
