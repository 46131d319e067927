#![no_main]

use libfuzzer_sys::fuzz_target;
use zkpcn::zk::LatencyModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = LatencyModel::parse(text) {
        let mut prev = 0.0;
        for n in [1u64, 2, 10, 100, 1000, 100_000] {
            let ms = m.prover_ms(n).expect("n >= 1");
            assert!(ms.is_finite() && ms >= prev);
            prev = ms;
        }
        let _ = m.verifier_latency();
    }
});
