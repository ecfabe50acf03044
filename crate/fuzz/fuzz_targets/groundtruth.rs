#![no_main]

use libfuzzer_sys::fuzz_target;
use oet_core::sequence_io::{format_results, parse_groundtruth};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(boxes) = parse_groundtruth(text) {
        assert!(boxes.iter().all(|b| b.w > 0.0 && b.h > 0.0 && b.x.is_finite() && b.y.is_finite()));
        // Results are written with two decimals; extents that survive the
        // rounding must read back.
        if boxes.iter().all(|b| b.w >= 0.01 && b.h >= 0.01) {
            let again = parse_groundtruth(&format_results(&boxes)).expect("formatted boxes parse");
            assert_eq!(again.len(), boxes.len());
        }
    }
});
