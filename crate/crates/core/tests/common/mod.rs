//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use rand::Rng;
use soar_core::botnet::window_of;
use soar_core::learners::Confusion;
use soar_core::packet::{tcp_flags, MacAddr, Packet};

/// Free addresses picked by rank: with `dst` at the bottom of the ladder the
/// `n` lowest-ranked free addresses, otherwise the `n` highest-ranked.
pub fn select_oracle(dst: Ipv4Addr, n: usize, ips: &[Ipv4Addr], occupied: &BTreeSet<Ipv4Addr>) -> BTreeSet<Ipv4Addr> {
    let all: BTreeSet<Ipv4Addr> = ips.iter().copied().collect();
    let mut blocked = occupied.clone();
    blocked.insert(dst);
    let free: BTreeSet<Ipv4Addr> = all.difference(&blocked).copied().collect();
    let rank = |ip: &Ipv4Addr| ips.iter().position(|x| x == ip).unwrap();
    let upward = ips[0] == dst;
    free.iter()
        .copied()
        .filter(|x| {
            let beyond = free.iter().filter(|y| if upward { rank(y) < rank(x) } else { rank(y) > rank(x) }).count();
            beyond < n
        })
        .collect()
}

/// Feature row recomputed from scratch over the whole prefix `packets[..i]`.
pub fn ddos_oracle(packets: &[Packet], i: usize) -> [f64; 16] {
    let p = &packets[i];
    let mut v = [0.0; 16];
    for (k, window) in [100usize, 1000].into_iter().enumerate() {
        let prior = &packets[i.saturating_sub(window)..i];
        v[4 * k] = prior.iter().filter(|q| q.eth_src == p.eth_src).count() as f64;
        v[4 * k + 1] = prior.iter().filter(|q| q.eth_dst == p.eth_dst).count() as f64;
        v[4 * k + 2] = prior.iter().filter(|q| q.ip_src == p.ip_src).count() as f64;
        v[4 * k + 3] = prior.iter().filter(|q| q.ip_dst == p.ip_dst).count() as f64;
    }
    for (slot, m) in [1usize, 10, 100, 1000].into_iter().enumerate() {
        v[8 + slot] = if i == 0 {
            0.0
        } else if i >= m {
            p.ts - packets[i - m].ts
        } else {
            p.ts - packets[0].ts
        };
    }
    v[12] = f64::from(p.proto.code());
    v[13] = f64::from(p.src_port);
    v[14] = f64::from(p.dst_port);
    v[15] = f64::from(p.length);
    v
}

/// Time-ordered packets drawn from small address sets so that occurrence
/// counts collide often. MAC and IP identities vary independently.
pub fn random_packets<R: Rng>(rng: &mut R, n: usize, hosts: u8) -> Vec<Packet> {
    let mut ts = 0.0;
    (0..n)
        .map(|_| {
            ts += match rng.gen_range(0..4) {
                0 => 0.0,
                1 => rng.gen_range(0.0..0.001),
                _ => rng.gen_range(0.0..2.0),
            };
            let s = Ipv4Addr::new(10, 0, 0, rng.gen_range(1..=hosts));
            let d = Ipv4Addr::new(10, 0, 1, rng.gen_range(1..=hosts));
            let payload = vec![0u8; rng.gen_range(0..64)];
            let mut p = match rng.gen_range(0..3) {
                0 => Packet::tcp(ts, (s, rng.gen_range(1024..1040)), (d, 80), tcp_flags::SYN, payload),
                1 => Packet::udp(ts, (s, 53), (d, rng.gen_range(1..6)), payload),
                _ => Packet::icmp(ts, s, d, payload),
            };
            p.eth_src = MacAddr::for_host(Ipv4Addr::new(0, 0, 0, rng.gen_range(1..=hosts)));
            p.eth_dst = MacAddr::for_host(Ipv4Addr::new(0, 0, 1, rng.gen_range(1..=hosts)));
            p
        })
        .collect()
}

/// Per-window packet count and byte sum straight from the packets.
pub fn window_totals(packets: &[Packet]) -> BTreeMap<u64, (u64, u64)> {
    let mut out: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for p in packets {
        let e = out.entry(window_of(p.ts)).or_default();
        e.0 += 1;
        e.1 += u64::from(p.length);
    }
    out
}

/// Accuracy, precision, recall and F as percentages by direct counting.
pub fn metrics_oracle(predicted: &[u8], actual: &[u8]) -> (Confusion, [f64; 4]) {
    let count = |p: u8, a: u8| predicted.iter().zip(actual).filter(|(x, y)| **x == p && **y == a).count() as u64;
    let c = Confusion { tp: count(1, 1), fp: count(1, 0), tn: count(0, 0), fn_: count(0, 1) };
    let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 * 100.0 };
    let acc = pct(c.tp + c.tn, predicted.len() as u64);
    let prec = pct(c.tp, c.tp + c.fp);
    let rec = pct(c.tp, c.tp + c.fn_);
    let f = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
    (c, [acc, prec, rec, f])
}

/// One-feature tree that predicts its input: 1 when `x > 0.5`.
pub fn identity_model() -> soar_core::learners::ClassifierModel {
    use soar_core::learners::{
        ClassWeights, ClassifierModel, Family, ModelParams, Schema, Split, TreeNode, MODEL_FORMAT_VERSION,
    };
    let schema = Schema::numeric(&["prediction"]);
    let leaf = |c: u8| TreeNode { counts: [0.0, 0.0], prediction: c, split: None };
    let root = TreeNode {
        counts: [0.0, 0.0],
        prediction: 0,
        split: Some(Split { feature: 0, threshold: 0.5, left: 1, right: 2 }),
    };
    ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        family: Family::DecisionTree,
        schema_fingerprint: schema.fingerprint(),
        schema,
        class_weights: ClassWeights::UNIFORM,
        params: ModelParams::Tree { nodes: vec![root, leaf(0), leaf(1)] },
    }
}
