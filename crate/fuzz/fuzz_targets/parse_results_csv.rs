#![no_main]

use libfuzzer_sys::fuzz_target;
use zkpcn::report::{parse_csv, render_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_csv(text) {
        if !rows.is_empty() {
            let again = parse_csv(&render_csv(&rows).expect("non-empty")).expect("rendered csv parses");
            assert_eq!(again.len(), rows.len());
        }
    }
});
