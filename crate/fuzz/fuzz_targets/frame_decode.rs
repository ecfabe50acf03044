#![no_main]

use libfuzzer_sys::fuzz_target;
use oet_core::sequence_io::decode_frame;

fuzz_target!(|data: &[u8]| {
    // Bound the work spent on huge declared dimensions.
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(frame) = decode_frame(data, 0) {
        assert_eq!(frame.pixels().len(), frame.width() * frame.height());
        assert!(frame.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }
});
