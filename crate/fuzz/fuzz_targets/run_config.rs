#![no_main]

use dpgds::config::{parse_config, render_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = parse_config(text) {
        assert_eq!(parse_config(&render_config(&map)).expect("rendered config parses"), map);
    }
});
