//! Scenario report: a pure projection of the event log and packet index.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::sim::RunMeta;
use super::ScenarioError;
use crate::http_ids::AttackLabel;
use crate::orchestrator::{
    Catalog, DeployCause, EventDetail, EventKind, HoneypotInstance, InstanceId, OrchestratorEvent, ServiceKind,
};
use crate::storage::{
    compute_engagements, cpu_saving_report, mean_duration, replay, CpuSavingReport, EngagementRecord, PacketRef,
    UptimeLedger, DEFAULT_SESSION_GAP,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeploymentCount {
    /// Distinct deployment decisions: all instances placed by one trigger.
    pub bursts: u64,
    pub instances: u64,
    pub reaps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackCounts {
    pub http: BTreeMap<AttackLabel, u64>,
    pub ddos_packets: u64,
    pub botnet_flows: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoneypotAttacks {
    /// `None` for traffic aimed at an address with no decoy at the time.
    pub instance: Option<InstanceId>,
    pub service: Option<ServiceKind>,
    pub ip: Ipv4Addr,
    pub counts: AttackCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sha256: String,
    pub path: String,
    pub size: u64,
    pub instance: Option<InstanceId>,
    pub ts: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RaceOutcome {
    Win,
    Lose,
}

/// A decoy placed ahead of a scanner, and whether it was up before the
/// scanner first reached its address.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRecord {
    pub instance: InstanceId,
    pub ip: Ipv4Addr,
    pub scanner: Ipv4Addr,
    pub deployed_at: f64,
    pub active_at: Option<f64>,
    pub arrival: f64,
    /// `arrival - active_at`; negative when the scanner arrived first.
    pub margin: f64,
    pub outcome: RaceOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub meta: RunMeta,
    pub deployments: BTreeMap<ServiceKind, DeploymentCount>,
    pub attacks: Vec<HoneypotAttacks>,
    pub engagements: Vec<EngagementRecord>,
    pub mean_engagement: f64,
    pub ddos_packets: u64,
    pub botnet_flows: u64,
    pub samples: Vec<SampleRow>,
    pub races: Vec<RaceRecord>,
    pub uptime: CpuSavingReport,
}

fn instance_at(instances: &BTreeMap<InstanceId, HoneypotInstance>, ip: Ipv4Addr, ts: f64) -> Option<&HoneypotInstance> {
    instances.values().find(|i| i.ip == ip && i.deployed_at <= ts && i.reaped_at.is_none_or(|r| ts < r))
}

pub fn build_report(
    meta: &RunMeta,
    events: &[OrchestratorEvent],
    packets: &[PacketRef],
    catalog: &Catalog,
) -> Result<ScenarioReport, ScenarioError> {
    let instances = replay(events, catalog)?;

    let mut deployments: BTreeMap<ServiceKind, DeploymentCount> = BTreeMap::new();
    let mut last_burst: Option<(u64, f64, ServiceKind, DeployCause)> = None;
    let mut attacks: BTreeMap<(Ipv4Addr, Option<InstanceId>), AttackCounts> = BTreeMap::new();
    let mut ddos_packets = 0;
    let mut botnet_flows = 0;
    let mut samples = Vec::new();
    for ev in events {
        match &ev.detail {
            EventDetail::Deploy { cause, .. } => {
                let service = ev.service.expect("deploy names a service");
                let entry = deployments.entry(service).or_default();
                entry.instances += 1;
                // Deploys of one trigger are adjacent in the log and share ts, template and cause.
                let same = last_burst.as_ref().is_some_and(|(seq, ts, svc, c)| {
                    *seq + 1 == ev.seq && *ts == ev.ts && *svc == service && c == cause
                });
                if !same {
                    entry.bursts += 1;
                }
                last_burst = Some((ev.seq, ev.ts, service, cause.clone()));
            }
            EventDetail::Reap { .. } => {
                deployments.entry(ev.service.expect("reap names a service")).or_default().reaps += 1;
            }
            EventDetail::HttpAttack { label, .. } => {
                let c = attacks.entry((ev.ip.expect("attack has ip"), ev.instance)).or_default();
                *c.http.entry(*label).or_insert(0) += 1;
            }
            EventDetail::Ddos { dst, .. } => {
                ddos_packets += 1;
                let inst = instance_at(&instances, *dst, ev.ts).map(|i| i.id);
                attacks.entry((*dst, inst)).or_default().ddos_packets += 1;
            }
            EventDetail::Botnet { dst, .. } => {
                botnet_flows += 1;
                let inst = instance_at(&instances, *dst, ev.ts).map(|i| i.id);
                attacks.entry((*dst, inst)).or_default().botnet_flows += 1;
            }
            EventDetail::MalwareSample { sha256, path, size } => samples.push(SampleRow {
                sha256: sha256.clone(),
                path: path.clone(),
                size: *size,
                instance: ev.instance,
                ts: ev.ts,
            }),
            _ => {}
        }
    }
    let mut attacks: Vec<HoneypotAttacks> = attacks
        .into_iter()
        .map(|((ip, instance), counts)| HoneypotAttacks {
            instance,
            service: instance.and_then(|id| instances.get(&id)).map(|i| i.service),
            ip,
            counts,
        })
        .collect();
    attacks.sort_by(|a, b| a.instance.cmp(&b.instance).then(a.ip.cmp(&b.ip)));

    let list: Vec<HoneypotInstance> = instances.values().cloned().collect();
    let engagements = compute_engagements(&list, packets, DEFAULT_SESSION_GAP);
    let mean_engagement = mean_duration(&engagements);

    let mut races = Vec::new();
    for ev in events {
        let EventDetail::Deploy { cause: DeployCause::Probe { src, .. }, ahead: true } = &ev.detail else { continue };
        let inst = &instances[&ev.instance.expect("deploy has instance")];
        let Some(arrival) = packets.iter().find(|p| p.src == *src && p.dst == inst.ip && p.ts >= ev.ts).map(|p| p.ts)
        else {
            continue;
        };
        let margin = inst.ready_at.map_or(f64::NEG_INFINITY, |r| arrival - r);
        let outcome = if inst.ready_at.is_some_and(|r| r < arrival) { RaceOutcome::Win } else { RaceOutcome::Lose };
        races.push(RaceRecord {
            instance: inst.id,
            ip: inst.ip,
            scanner: *src,
            deployed_at: inst.deployed_at,
            active_at: inst.ready_at,
            arrival,
            margin,
            outcome,
        });
    }

    let reference: Vec<ServiceKind> = catalog.base_templates().map(|t| t.service).collect();
    let ledger = UptimeLedger::from_instances(instances.values(), reference, meta.duration);
    let uptime = cpu_saving_report(&ledger, meta.duration);

    Ok(ScenarioReport {
        meta: meta.clone(),
        deployments,
        attacks,
        engagements,
        mean_engagement,
        ddos_packets,
        botnet_flows,
        samples,
        races,
        uptime,
    })
}

fn f(x: f64) -> String {
    format!("{x:.3}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl ScenarioReport {
    pub fn races_won(&self) -> usize {
        self.races.iter().filter(|r| r.outcome == RaceOutcome::Win).count()
    }

    pub fn total_deployments(&self, service: ServiceKind) -> DeploymentCount {
        self.deployments.get(&service).cloned().unwrap_or_default()
    }

    /// Long-format CSV: `section,key,field,value`.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<[String; 4]> = Vec::new();
        let mut row = |s: &str, k: String, fld: &str, v: String| rows.push([s.into(), k, fld.into(), v]);
        let m = &self.meta;
        row("meta", "run".into(), "scenario", m.scenario.clone());
        row("meta", "run".into(), "seed", m.seed.to_string());
        row("meta", "run".into(), "mode", format!("{:?}", m.mode).to_lowercase());
        row("meta", "run".into(), "duration", f(m.duration));
        row("meta", "run".into(), "deploy_ahead", m.deploy_ahead.to_string());
        row("meta", "run".into(), "latency", f(m.latency));
        for (svc, d) in &self.deployments {
            row("deployments", svc.to_string(), "bursts", d.bursts.to_string());
            row("deployments", svc.to_string(), "instances", d.instances.to_string());
            row("deployments", svc.to_string(), "reaps", d.reaps.to_string());
        }
        for a in &self.attacks {
            let key = a.instance.map_or_else(|| format!("none@{}", a.ip), |i| i.to_string());
            row("attacks", key.clone(), "ip", a.ip.to_string());
            row("attacks", key.clone(), "service", opt(a.service));
            for (label, n) in &a.counts.http {
                row("attacks", key.clone(), label.as_str(), n.to_string());
            }
            row("attacks", key.clone(), "ddos_packets", a.counts.ddos_packets.to_string());
            row("attacks", key, "botnet_flows", a.counts.botnet_flows.to_string());
        }
        row("totals", "ddos".into(), "packets", self.ddos_packets.to_string());
        row("totals", "botnet".into(), "flows", self.botnet_flows.to_string());
        row("totals", "samples".into(), "count", self.samples.len().to_string());
        row("totals", "engagement".into(), "sessions", self.engagements.len().to_string());
        row("totals", "engagement".into(), "mean_duration", f(self.mean_engagement));
        row("totals", "races".into(), "won", self.races_won().to_string());
        row("totals", "races".into(), "total", self.races.len().to_string());
        for s in &self.samples {
            row("sample", s.sha256.clone(), "path", s.path.clone());
            row("sample", s.sha256.clone(), "size", s.size.to_string());
            row("sample", s.sha256.clone(), "instance", opt(s.instance));
            row("sample", s.sha256.clone(), "ts", f(s.ts));
        }
        for (n, e) in self.engagements.iter().enumerate() {
            let key = (n + 1).to_string();
            row("engagement", key.clone(), "attacker", e.attacker_ip.to_string());
            row("engagement", key.clone(), "instance", e.instance.to_string());
            row("engagement", key.clone(), "service", e.service.to_string());
            row("engagement", key.clone(), "start", f(e.start_ts));
            row("engagement", key, "duration", f(e.duration));
        }
        for r in &self.races {
            let key = r.instance.to_string();
            row("race", key.clone(), "ip", r.ip.to_string());
            row("race", key.clone(), "scanner", r.scanner.to_string());
            row("race", key.clone(), "deployed_at", f(r.deployed_at));
            row("race", key.clone(), "active_at", opt(r.active_at.map(f)));
            row("race", key.clone(), "arrival", f(r.arrival));
            row("race", key.clone(), "margin", f(r.margin));
            row("race", key, "outcome", format!("{:?}", r.outcome).to_uppercase());
        }
        let u = &self.uptime;
        row("uptime", "total".into(), "horizon", f(u.horizon));
        row("uptime", "total".into(), "uptime", f(u.dynamic_uptime));
        row("uptime", "total".into(), "always_on", f(u.always_on_uptime));
        row("uptime", "total".into(), "saved_pct", f(u.saved_pct));
        for t in &u.per_template {
            row("uptime", t.service.to_string(), "uptime", f(t.uptime));
            row("uptime", t.service.to_string(), "saved_pct", f(t.saved_pct));
        }

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["section", "key", "field", "value"]).expect("in-memory csv");
        for r in rows {
            w.write_record(&r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Counts by event kind, for summaries.
    pub fn kind_counts(events: &[OrchestratorEvent]) -> BTreeMap<EventKind, usize> {
        let mut out = BTreeMap::new();
        for e in events {
            *out.entry(e.kind).or_insert(0) += 1;
        }
        out
    }
}

/// Side-by-side table of the longest engagements of two runs.
pub fn top_engagement_table(
    left: &[EngagementRecord],
    right: &[EngagementRecord],
    n: usize,
    titles: (&str, &str),
) -> String {
    let cell = |r: Option<&EngagementRecord>| match r {
        Some(r) => (r.attacker_ip.to_string(), format!("{:.0} sec", r.duration)),
        None => (String::new(), String::new()),
    };
    let mut out = String::new();
    let _ = writeln!(out, "| {:<33} | {:<33} |", titles.0, titles.1);
    let _ = writeln!(out, "| {:<16} | {:>14} | {:<16} | {:>14} |", "Attacker IP", "Time", "Attacker IP", "Time");
    let _ = writeln!(out, "|{}|{}|{}|{}|", "-".repeat(18), "-".repeat(16), "-".repeat(18), "-".repeat(16));
    for k in 0..n.min(left.len().max(right.len())) {
        let (a, b) = cell(left.get(k));
        let (c, d) = cell(right.get(k));
        let _ = writeln!(out, "| {a:<16} | {b:>14} | {c:<16} | {d:>14} |");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::Mode;

    fn meta() -> RunMeta {
        RunMeta {
            scenario: "t".into(),
            seed: 1,
            mode: Mode::Dynamic,
            duration: 100.0,
            deploy_ahead: true,
            latency: 0.0,
        }
    }

    fn ip(h: u8) -> Ipv4Addr {
        Ipv4Addr::new(172, 26, 233, h)
    }

    #[test]
    fn bursts_group_adjacent_deploys_of_one_trigger() {
        let cause = DeployCause::Probe { src: ip(9), port: 22 };
        let mut events = vec![
            OrchestratorEvent::for_instance(
                1.0,
                InstanceId(1),
                ServiceKind::Ssh,
                ip(4),
                EventDetail::Deploy { cause: cause.clone(), ahead: false },
            ),
            OrchestratorEvent::for_instance(
                1.0,
                InstanceId(2),
                ServiceKind::Ssh,
                ip(24),
                EventDetail::Deploy { cause, ahead: true },
            ),
            OrchestratorEvent::for_instance(
                1.0,
                InstanceId(1),
                ServiceKind::Ssh,
                ip(4),
                EventDetail::Ready { latency: 0.0 },
            ),
            OrchestratorEvent::for_instance(
                1.0,
                InstanceId(2),
                ServiceKind::Ssh,
                ip(24),
                EventDetail::Ready { latency: 0.0 },
            ),
        ];
        for (k, e) in events.iter_mut().enumerate() {
            e.seq = k as u64 + 1;
        }
        let r = build_report(&meta(), &events, &[], &Catalog::default()).unwrap();
        assert_eq!(r.deployments[&ServiceKind::Ssh], DeploymentCount { bursts: 1, instances: 2, reaps: 0 });
        assert_eq!(r.uptime.dynamic_uptime, 2.0 * 99.0);
    }

    #[test]
    fn race_uses_first_arrival_after_deploy() {
        let cause = DeployCause::Probe { src: ip(9), port: 22 };
        let mut events = vec![
            OrchestratorEvent::for_instance(
                10.0,
                InstanceId(1),
                ServiceKind::Ssh,
                ip(24),
                EventDetail::Deploy { cause, ahead: true },
            ),
            OrchestratorEvent::for_instance(
                16.0,
                InstanceId(1),
                ServiceKind::Ssh,
                ip(24),
                EventDetail::Ready { latency: 6.0 },
            ),
        ];
        for (k, e) in events.iter_mut().enumerate() {
            e.seq = k as u64 + 1;
        }
        let pr = |t: f64, s: u8| PacketRef { ts: t, src: ip(s), dst: ip(24), dst_port: 22 };
        let packets = [pr(5.0, 9), pr(12.0, 7), pr(40.0, 9), pr(41.0, 9)];
        let r = build_report(&meta(), &events, &packets, &Catalog::default()).unwrap();
        assert_eq!(r.races.len(), 1);
        assert_eq!(r.races[0].arrival, 40.0);
        assert_eq!(r.races[0].margin, 24.0);
        assert_eq!(r.races[0].outcome, RaceOutcome::Win);
    }

    #[test]
    fn table_has_header_and_rows() {
        let rec = |s: u8, d: f64| EngagementRecord {
            attacker_ip: ip(s),
            instance: InstanceId(1),
            service: ServiceKind::Ssh,
            start_ts: 0.0,
            end_ts: d,
            duration: d,
        };
        let t = top_engagement_table(&[rec(5, 5977.0), rec(24, 4390.0)], &[rec(9, 321.0)], 10, ("dynamic", "static"));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[3].contains("172.26.233.5") && lines[3].contains("5977 sec") && lines[3].contains("321 sec"));
        assert!(lines[4].contains("4390 sec"));
    }
}
