#![no_main]

use dpgds::data::{parse_triplets, render_triplets};
use dpgds::DataKind;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for dims in [None, Some((4, 5))] {
        if let Ok(x) = parse_triplets(text, dims, DataKind::Count) {
            let again = parse_triplets(&render_triplets(&x), Some((x.vocab(), x.steps())), DataKind::Count)
                .expect("rendered triplets parse");
            assert_eq!(again, x);
        }
    }
});
