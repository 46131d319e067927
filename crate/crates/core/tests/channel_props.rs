use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zkpcn::channel::{
    close_channel, open_channel, replay_log, Channel, ChannelError, CloseClaim, PublicBalancePolicy, Side, UpdateMsg,
};
use zkpcn::crypto::Keyring;
use zkpcn::{ChannelId, NodeId};

const A: NodeId = NodeId(3);
const B: NodeId = NodeId(8);

fn side(a: bool) -> Side {
    if a {
        Side::A
    } else {
        Side::B
    }
}

/// Applies `steps` (sender, fraction of the sender's balance in thousandths);
/// steps the sender cannot fund are skipped. Returns the accepted messages.
fn drive(ch: &mut Channel, steps: &[(bool, u16)], ring: &Keyring, seed: u64) -> Vec<UpdateMsg> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut msgs = Vec::new();
    for &(a, frac) in steps {
        let s = side(a);
        let amt = (ch.balance(s) as u128 * frac as u128 / 1000) as u64;
        if amt == 0 {
            continue;
        }
        msgs.push(ch.pay(s, amt, &mut rng, ring).unwrap());
    }
    msgs
}

fn policy() -> impl Strategy<Value = PublicBalancePolicy> {
    prop_oneof![
        Just(PublicBalancePolicy::DeltaFollow),
        (0u32..=100).prop_map(|p| PublicBalancePolicy::Fraction(p as f64 / 100.0)),
    ]
}

fn steps(max: usize) -> impl Strategy<Value = Vec<(bool, u16)>> {
    prop::collection::vec((any::<bool>(), 1u16..=1000), 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn conservation_and_public_safety(
        xa in 0u64..1_000_000,
        xb in 1u64..1_000_000,
        pol in policy(),
        steps in steps(40),
        seed in any::<u64>(),
    ) {
        let ring = Keyring::new(seed);
        let mut ch = open_channel(ChannelId(1), A, B, xa, xb).unwrap().with_policy(pol);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (a, frac) in steps {
            let s = side(a);
            let amt = ch.balance(s) * frac as u64 / 1000;
            let before = ch.clone();
            match ch.pay(s, amt, &mut rng, &ring) {
                Ok(_) => prop_assert_eq!(ch.version, before.version + 1),
                Err(e) => {
                    prop_assert!(matches!(e, ChannelError::ZeroAmount));
                    prop_assert_eq!(&ch, &before);
                }
            }
            prop_assert_eq!(ch.balances.0 + ch.balances.1, xa + xb);
            prop_assert!(ch.public.0 <= ch.balances.0 && ch.public.1 <= ch.balances.1);
            prop_assert_eq!(replay_log(ch.initial, &ch.log).unwrap(), ch.balances);
            prop_assert_eq!(ch.check_invariants(), Ok(()));
        }
    }

    #[test]
    fn overdraft_never_changes_state(
        xa in 1u64..1000,
        xb in 1u64..1000,
        extra in 1u64..1000,
        a in any::<bool>(),
    ) {
        let ring = Keyring::new(0);
        let mut ch = open_channel(ChannelId(0), A, B, xa, xb).unwrap();
        let before = ch.clone();
        let s = side(a);
        let need = ch.balance(s) + extra;
        let err = ch.pay(s, need, &mut ChaCha8Rng::seed_from_u64(0), &ring).unwrap_err();
        let is_insufficient = matches!(err, ChannelError::InsufficientFunds { .. });
        prop_assert!(is_insufficient);
        prop_assert_eq!(ch, before);
    }

    #[test]
    fn mutating_a_logged_field_breaks_exactly_that_entry(
        steps in prop::collection::vec((any::<bool>(), 1u16..=1000), 1..30),
        pick in any::<prop::sample::Index>(),
        field in 0usize..5,
        byte in any::<prop::sample::Index>(),
        seed in any::<u64>(),
    ) {
        let ring = Keyring::new(seed);
        let mut ch = open_channel(ChannelId(2), A, B, 1000, 1000).unwrap();
        drive(&mut ch, &steps, &ring, seed);
        prop_assume!(!ch.log.is_empty());
        let i = pick.index(ch.log.len());
        let mut log = ch.log.clone();
        let e = &mut log[i];
        match field {
            0 => e.opening.nonce[byte.index(16)] ^= 1,
            1 => e.opening.amount ^= 1,
            2 => e.opening.version ^= 1,
            3 => e.opening.sig[byte.index(32)] ^= 1,
            _ => e.digest[byte.index(32)] ^= 1,
        }
        let broken: Vec<usize> = log
            .iter()
            .enumerate()
            .filter(|(_, t)| t.opening.digest() != t.digest)
            .map(|(j, _)| j)
            .collect();
        prop_assert_eq!(broken, vec![i]);
        prop_assert_eq!(replay_log(ch.initial, &log), Err(ChannelError::TamperDetected));
    }

    #[test]
    fn only_the_original_order_is_accepted(
        steps in prop::collection::vec((any::<bool>(), 1u16..=500), 2..12),
        shuffle_seed in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let ring = Keyring::new(seed);
        let fresh = open_channel(ChannelId(4), A, B, 10_000, 10_000).unwrap();
        let mut work = fresh.clone();
        let msgs = drive(&mut work, &steps, &ring, seed);
        prop_assume!(msgs.len() >= 2);
        let mut order: Vec<usize> = (0..msgs.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        prop_assume!(order.iter().enumerate().any(|(i, &j)| i != j));
        let first_bad = order.iter().enumerate().position(|(i, &j)| i != j).unwrap();
        let mut ch = fresh;
        for (pos, &j) in order.iter().enumerate() {
            let r = ch.apply_update(&msgs[j], &ring);
            if pos < first_bad {
                prop_assert!(r.is_ok());
            } else {
                let rejected = matches!(r, Err(ChannelError::VersionMismatch { .. }));
                prop_assert!(rejected, "position {pos}: {r:?}");
                break;
            }
        }
        // Replaying an accepted message is also refused.
        let mut ch = open_channel(ChannelId(4), A, B, 10_000, 10_000).unwrap();
        ch.apply_update(&msgs[0], &ring).unwrap();
        let replay_rejected = matches!(ch.apply_update(&msgs[0], &ring), Err(ChannelError::VersionMismatch { .. }));
        prop_assert!(replay_rejected);
    }

    #[test]
    fn settlement_takes_highest_version(
        steps in steps(25),
        va in any::<prop::sample::Index>(),
        vb in any::<prop::sample::Index>(),
        seed in any::<u64>(),
    ) {
        let ring = Keyring::new(seed);
        let mut ch = open_channel(ChannelId(5), A, B, 500, 700).unwrap();
        let mut history = vec![ch.balances];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (a, frac) in steps {
            let s = side(a);
            let amt = ch.balance(s) * frac as u64 / 1000;
            if ch.pay(s, amt, &mut rng, &ring).is_ok() {
                history.push(ch.balances);
            }
        }
        let n = ch.version as usize + 1;
        let (va, vb) = (va.index(n) as u64, vb.index(n) as u64);
        let s = close_channel(
            &ch,
            &CloseClaim::sign(&ring, A, ch.id, va),
            &CloseClaim::sign(&ring, B, ch.id, vb),
            &ring,
        )
        .unwrap();
        prop_assert_eq!(s.settled_version, va.max(vb));
        prop_assert_eq!(s.final_balances, history[va.max(vb) as usize]);
    }
}

/// Every pair of claims over every log of up to five entries.
#[test]
fn settlement_maximality_exhaustive() {
    let ring = Keyring::new(11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for len in 0..=5u64 {
        let mut ch = open_channel(ChannelId(6), A, B, 50, 50).unwrap();
        let mut history = vec![ch.balances];
        for i in 0..len {
            let s = if i % 2 == 0 { Side::A } else { Side::B };
            ch.pay(s, 7 + i, &mut rng, &ring).unwrap();
            history.push(ch.balances);
        }
        for va in 0..=len + 1 {
            for vb in 0..=len + 1 {
                let r = close_channel(
                    &ch,
                    &CloseClaim::sign(&ring, A, ch.id, va),
                    &CloseClaim::sign(&ring, B, ch.id, vb),
                    &ring,
                );
                if va.max(vb) > len {
                    assert!(
                        matches!(r, Err(ChannelError::FraudulentClaim { .. })),
                        "{len} {va} {vb}"
                    );
                } else {
                    let s = r.unwrap();
                    assert_eq!(s.settled_version, va.max(vb));
                    assert_eq!(s.final_balances, history[va.max(vb) as usize]);
                }
            }
        }
        // A claim signed by the wrong party is refused.
        let forged = CloseClaim::sign(&ring, B, ch.id, 0);
        let honest = CloseClaim::sign(&ring, B, ch.id, 0);
        assert_eq!(
            close_channel(&ch, &forged, &honest, &ring),
            Err(ChannelError::TamperDetected)
        );
    }
}

#[test]
fn settlement_after_reset_still_replays_current_log() {
    let ring = Keyring::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ch = open_channel(ChannelId(0), A, B, 100, 100).unwrap();
    for _ in 0..4 {
        ch.pay(Side::A, 5, &mut rng, &ring).unwrap();
    }
    assert!(ch.maybe_reset(4));
    ch.pay(Side::B, 1, &mut rng, &ring).unwrap();
    assert_eq!(ch.version, 5);
    let s = close_channel(
        &ch,
        &CloseClaim::sign(&ring, A, ch.id, 4),
        &CloseClaim::sign(&ring, B, ch.id, 5),
        &ring,
    )
    .unwrap();
    assert_eq!((s.settled_version, s.final_balances), (5, (81, 119)));
    assert_eq!(ch.balances_at(2), Err(ChannelError::PrunedVersion(2)));
}
