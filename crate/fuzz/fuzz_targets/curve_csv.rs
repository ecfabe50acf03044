#![no_main]

use libfuzzer_sys::fuzz_target;
use oet_core::metrics::parse_curve_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = parse_curve_csv(text) {
        assert!(points.iter().all(|(x, y)| x.is_finite() && y.is_finite()));
    }
});
