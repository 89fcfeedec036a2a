use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{HoneypotInstance, InstanceId, ServiceKind};
use crate::packet::Packet;

pub const DEFAULT_SESSION_GAP: f64 = 300.0;

/// Minimal per-packet record kept for engagement analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRef {
    pub ts: f64,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub dst_port: u16,
}

impl PacketRef {
    pub fn of(p: &Packet) -> Self {
        PacketRef { ts: p.ts, src: p.ip_src, dst: p.ip_dst, dst_port: p.dst_port }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub attacker_ip: Ipv4Addr,
    pub instance: InstanceId,
    pub service: ServiceKind,
    pub start_ts: f64,
    pub end_ts: f64,
    pub duration: f64,
}

/// The instance answering `p`: same address and port, ready, not yet reaped.
fn serving<'a>(instances: &'a [HoneypotInstance], p: &PacketRef) -> Option<&'a HoneypotInstance> {
    instances.iter().find(|i| {
        i.ip == p.dst
            && i.port == p.dst_port
            && i.ready_at.is_some_and(|r| r <= p.ts)
            && i.reaped_at.is_none_or(|r| p.ts < r)
    })
}

/// Sessions per (attacker, instance). A session is a maximal run of packets
/// whose consecutive gaps are below `gap`; its duration is last minus first
/// timestamp. Sorted by duration, longest first.
pub fn compute_engagements(instances: &[HoneypotInstance], packets: &[PacketRef], gap: f64) -> Vec<EngagementRecord> {
    let mut hits: BTreeMap<(Ipv4Addr, InstanceId), (ServiceKind, Vec<f64>)> = BTreeMap::new();
    for p in packets {
        if let Some(inst) = serving(instances, p) {
            hits.entry((p.src, inst.id)).or_insert_with(|| (inst.service, Vec::new())).1.push(p.ts);
        }
    }
    let mut out = Vec::new();
    for ((attacker_ip, instance), (service, mut times)) in hits {
        times.sort_by(f64::total_cmp);
        let mut start = times[0];
        let mut last = times[0];
        let mut close = |start: f64, end: f64| {
            out.push(EngagementRecord {
                attacker_ip,
                instance,
                service,
                start_ts: start,
                end_ts: end,
                duration: end - start,
            })
        };
        for &t in &times[1..] {
            if t - last >= gap {
                close(start, last);
                start = t;
            }
            last = t;
        }
        close(start, last);
    }
    out.sort_by(|a, b| {
        b.duration
            .total_cmp(&a.duration)
            .then(a.start_ts.total_cmp(&b.start_ts))
            .then(a.attacker_ip.cmp(&b.attacker_ip))
            .then(a.instance.cmp(&b.instance))
    });
    out
}

pub fn mean_duration(records: &[EngagementRecord]) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.duration).sum::<f64>() / records.len() as f64
    }
}
