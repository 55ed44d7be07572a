#![no_main]

use dpgds::data::{parse_dense_csv, render_dense_csv};
use dpgds::DataKind;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for kind in [DataKind::Count, DataKind::Binary] {
        if let Ok(x) = parse_dense_csv(text, kind) {
            let again = parse_dense_csv(&render_dense_csv(&x), kind).expect("rendered matrix parses");
            assert_eq!(again, x);
        }
    }
});
