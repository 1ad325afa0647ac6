#![no_main]

use fractam::config::{parse_prompts_str, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = RunConfig::from_toml_str(text) {
        // Accepted configs digest and validate without panicking.
        let _ = config.digest();
        let _ = config.validate();
        let _ = config.model_id();
    }
    if let Ok(prompts) = parse_prompts_str(text) {
        let _ = prompts.digest();
        let _ = prompts.validate();
    }
});
