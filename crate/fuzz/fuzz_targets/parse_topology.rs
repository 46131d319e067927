#![no_main]

use libfuzzer_sys::fuzz_target;
use zkpcn::topology::load_snapshot;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = load_snapshot(text) {
        for c in net.channels() {
            assert!(c.capacity > 0 && c.a != c.b);
        }
        // Whatever loads must survive a round trip through its own document.
        let again = load_snapshot(&net.to_document()).expect("re-load");
        assert_eq!(again.channel_count(), net.channel_count());
        assert_eq!(again.node_count(), net.node_count());
    }
});
