#![no_main]

use fractam::gateway::parse_judge_reply;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scores) = parse_judge_reply(text) {
        assert!((0.0..=1.0).contains(&scores.fg));
        assert!((0.0..=1.0).contains(&scores.lc));
    }
});
