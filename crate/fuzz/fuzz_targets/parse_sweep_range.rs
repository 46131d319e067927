#![no_main]

use libfuzzer_sys::fuzz_target;
use zkpcn::report::parse_sweep_range;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_sweep_range(text) {
        assert!(!values.is_empty());
        assert!(values.iter().all(|v| v.is_finite()));
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }
});
