#![no_main]

use fractam::memory::MemoryBank;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(bank) = MemoryBank::from_lines(text) {
        // Loaded banks always satisfy the monotonicity invariant.
        let turns: Vec<u32> = bank.entries().iter().map(|f| f.turn.turn_index).collect();
        assert!(turns.windows(2).all(|w| w[0] < w[1]));
        // history_before never returns the queried turn or anything later.
        for t in [0u32, 1, 2, u32::MAX] {
            assert!(bank.history_before(t).iter().all(|f| f.turn.turn_index < t));
        }
    }
});
