#![no_main]

use libfuzzer_sys::fuzz_target;
use wqed_core::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_json(text) {
            let again = RunConfig::from_json(&cfg.to_json()).expect("accepted config reparses");
            assert_eq!(again, cfg);
        }
    }
});
