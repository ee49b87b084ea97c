#![no_main]

use libfuzzer_sys::fuzz_target;
use wqed_core::BasisState;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(state) = text.parse::<BasisState>() {
            assert_eq!(state.label().parse::<BasisState>().unwrap(), state);
        }
    }
});
