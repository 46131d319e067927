#![no_main]

use libfuzzer_sys::fuzz_target;
use zkpcn::channel::{open_channel, UpdateMsg};
use zkpcn::crypto::Keyring;
use zkpcn::{ChannelId, NodeId};

fuzz_target!(|data: &[u8]| {
    let Ok(msg) = serde_json::from_slice::<UpdateMsg>(data) else {
        return;
    };
    let ring = Keyring::new(0);
    let mut ch = open_channel(ChannelId(0), NodeId(0), NodeId(1), 1000, 1000).unwrap();
    let before = ch.clone();
    match ch.apply_update(&msg, &ring) {
        Ok(()) => {
            assert_eq!(ch.balances.0 + ch.balances.1, 2000);
            assert_eq!(ch.version, before.version + 1);
        }
        Err(_) => assert_eq!(ch, before),
    }
    assert_eq!(ch.check_invariants(), Ok(()));
});
