#![no_main]

use libfuzzer_sys::fuzz_target;
use oet_core::synth::{format_synth_spec, parse_synth_spec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_synth_spec(text) {
        spec.validate().expect("parsed specs are valid");
        let again = parse_synth_spec(&format_synth_spec(&spec)).expect("formatted spec parses");
        assert_eq!(again, spec);
    }
});
