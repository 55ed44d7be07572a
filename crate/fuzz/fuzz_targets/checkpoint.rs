#![no_main]

use dpgds::data::{parse_checkpoint, render_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = parse_checkpoint(text) {
        let rendered = render_checkpoint(&c);
        let again = parse_checkpoint(&rendered).expect("rendered checkpoint parses");
        assert_eq!(render_checkpoint(&again), rendered);
    }
});
