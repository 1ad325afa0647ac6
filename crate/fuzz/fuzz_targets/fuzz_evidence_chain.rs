#![no_main]

use fractam::reasoner::parse_evidence_chain;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(steps) = parse_evidence_chain(text) {
        // Accepted chains have non-empty claims and well-formed citations.
        for step in &steps {
            assert!(!step.claim.is_empty());
            for citation in &step.sources {
                let rendered = citation.to_string();
                assert_eq!(
                    rendered.parse::<fractam::reasoner::Citation>().unwrap(),
                    *citation
                );
            }
        }
    }
});
