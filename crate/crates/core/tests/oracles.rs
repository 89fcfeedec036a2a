mod common;

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use common::{ddos_oracle, identity_model, metrics_oracle, random_packets, select_oracle, window_totals};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soar_core::botnet::{aggregate_flows, FlowAggregator};
use soar_core::ddos::LookbackState;
use soar_core::learners::{evaluate, Dataset, Schema};
use soar_core::orchestrator::{select_ips, Ipv4Net, ReservedIpPool};

fn subnet() -> Ipv4Net {
    Ipv4Net::new(Ipv4Addr::new(172, 26, 233, 0), 24).unwrap()
}

fn arb_pool() -> impl Strategy<Value = Vec<Ipv4Addr>> {
    prop::collection::btree_set(1u8..=254, 2..=16)
        .prop_map(|s| s.into_iter().map(|h| Ipv4Addr::new(172, 26, 233, h)).collect())
}

proptest! {
    #[test]
    fn selection_matches_rank_oracle(
        ips in arb_pool(),
        dst_pick in any::<prop::sample::Index>(),
        occ_mask in any::<u16>(),
        n in 0usize..18,
    ) {
        let pool = ReservedIpPool::from_list(ips.clone(), subnet()).unwrap();
        let dst = *dst_pick.get(&ips);
        let occupied: BTreeSet<_> = ips.iter().enumerate().filter(|(i, _)| occ_mask >> i & 1 == 1).map(|(_, ip)| *ip).collect();
        let got = select_ips(dst, n, &pool, &occupied).unwrap();
        let want = select_oracle(dst, n, &ips, &occupied);
        prop_assert_eq!(got.iter().copied().collect::<BTreeSet<_>>(), want.clone());
        // Output stays in ladder order, never repeats, never touches dst or occupied.
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(got.len(), want.len());
        prop_assert!(got.iter().all(|ip| *ip != dst && !occupied.contains(ip)));
    }

    #[test]
    fn selection_rejects_outside_addresses(ips in arb_pool(), h in 0u8..=255) {
        let pool = ReservedIpPool::from_list(ips.clone(), subnet()).unwrap();
        let dst = Ipv4Addr::new(172, 26, 233, h);
        prop_assert_eq!(select_ips(dst, 1, &pool, &BTreeSet::new()).is_err(), !ips.contains(&dst));
    }

    #[test]
    fn flow_totals_are_conserved(seed in any::<u64>(), n in 1usize..3000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut packets = random_packets(&mut rng, n, 6);
        for p in &mut packets {
            p.ts *= 20.0;
        }
        let flows = aggregate_flows(&packets);
        let mut got = std::collections::BTreeMap::<u64, (u64, u64)>::new();
        for f in &flows {
            let e = got.entry(f.window_id).or_default();
            e.0 += f.total_packets;
            e.1 += f.total_bytes;
            prop_assert!(f.first_ts <= f.last_ts);
            prop_assert_eq!(soar_core::botnet::window_of(f.first_ts), f.window_id);
        }
        prop_assert_eq!(got, window_totals(&packets));

        // Streaming aggregation emits the same records.
        let mut agg = FlowAggregator::new();
        let mut streamed = Vec::new();
        for p in &packets {
            streamed.extend(agg.push(p));
        }
        streamed.extend(agg.flush());
        prop_assert_eq!(streamed, flows);
    }

    #[test]
    fn evaluation_matches_direct_count(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..400)) {
        let (pred, actual): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let rows = pred.iter().map(|p| vec![f64::from(*p)]).collect();
        let ds = Dataset::new(Schema::numeric(&["prediction"]), rows, actual.clone()).unwrap();
        let m = evaluate(&identity_model(), &ds).unwrap();
        let (c, pct) = metrics_oracle(&pred, &actual);
        prop_assert_eq!(m.confusion, c);
        for (got, want) in [m.accuracy, m.precision, m.recall, m.f_score].into_iter().zip(pct) {
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
        prop_assert_eq!(m.precision_undefined, c.tp + c.fp == 0);
        prop_assert_eq!(m.recall_undefined, c.tp + c.fn_ == 0);
    }
}

#[test]
fn ddos_features_match_recount_past_both_windows() {
    for (seed, hosts) in [(11, 3), (12, 9), (13, 40)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let packets = random_packets(&mut rng, 2500, hosts);
        let mut state = LookbackState::new();
        for i in 0..packets.len() {
            let got = state.update_and_extract(&packets[i]).0;
            assert_eq!(got, ddos_oracle(&packets, i), "packet {i}, seed {seed}");
        }
    }
}
