//! Deployment decisions for the reserved decoy pool.
//!
//! The [`Orchestrator`] is a single-owner state machine. It consumes packets
//! addressed to reserved IPs, IDS alerts and clock advances, and returns the
//! events describing what changed. Backends and storage never mutate it
//! directly; the engine feeds their completions back through
//! [`Orchestrator::mark_ready`], [`Orchestrator::abort_deploy`] and
//! [`Orchestrator::record_backup`].

mod catalog;
mod event;
mod pool;
mod select;

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::http_ids::AttackLabel;
use crate::packet::Packet;

pub use catalog::{Catalog, CatalogError, HoneypotTemplate, Interaction, ServiceKind};
pub use event::{DeployCause, EventDetail, EventKind, InstanceId, OrchestratorEvent};
pub use pool::{Ipv4Net, PoolError, ReservedIpPool, DEFAULT_POOL_SIZE, DEFAULT_SPACING, MAX_POOL_SIZE, MIN_POOL_SIZE};
pub use select::{select_from, select_ips, DstNotInPool};

pub const DEFAULT_IDLE_TIMEOUT: f64 = 900.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InstanceState {
    Deploying,
    Active,
    Reaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoneypotInstance {
    pub id: InstanceId,
    pub service: ServiceKind,
    pub port: u16,
    pub ip: Ipv4Addr,
    pub state: InstanceState,
    pub deployed_at: f64,
    pub ready_at: Option<f64>,
    pub last_activity: f64,
    pub reaped_at: Option<f64>,
    pub backup_id: Option<String>,
}

impl HoneypotInstance {
    pub fn is_live(&self) -> bool {
        matches!(self.state, InstanceState::Deploying | InstanceState::Active)
    }

    /// Time at which the idle timeout expires.
    pub fn idle_deadline(&self, idle_timeout: f64) -> f64 {
        self.last_activity + idle_timeout
    }
}

/// Dynamic orchestration, or the always-on comparator where every base
/// template is placed once at start and never moved or reaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Dynamic,
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrchestratorConfig {
    pub idle_timeout: f64,
    /// Also place a decoy at the next free address ahead of the scanner.
    pub deploy_ahead: bool,
    pub mode: Mode,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig { idle_timeout: DEFAULT_IDLE_TIMEOUT, deploy_ahead: true, mode: Mode::Dynamic }
    }
}

/// Positive IDS verdict on a request received by an HTTP decoy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdsAlert {
    pub label: AttackLabel,
    pub ip: Ipv4Addr,
    pub src: Ipv4Addr,
    pub ts: f64,
}

#[derive(Debug, Clone)]
pub struct Orchestrator {
    pool: ReservedIpPool,
    catalog: Catalog,
    config: OrchestratorConfig,
    instances: BTreeMap<InstanceId, HoneypotInstance>,
    next_id: u32,
}

impl Orchestrator {
    pub fn new(pool: ReservedIpPool, catalog: Catalog, config: OrchestratorConfig) -> Self {
        Orchestrator { pool, catalog, config, instances: BTreeMap::new(), next_id: 1 }
    }

    pub fn pool(&self) -> &ReservedIpPool {
        &self.pool
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn instances(&self) -> &BTreeMap<InstanceId, HoneypotInstance> {
        &self.instances
    }

    pub fn instance(&self, id: InstanceId) -> Option<&HoneypotInstance> {
        self.instances.get(&id)
    }

    /// Addresses currently hosting a deploying or active instance.
    pub fn occupied(&self) -> BTreeSet<Ipv4Addr> {
        self.instances.values().filter(|i| i.is_live()).map(|i| i.ip).collect()
    }

    pub fn live_at(&self, ip: Ipv4Addr) -> Option<&HoneypotInstance> {
        self.instances.values().find(|i| i.is_live() && i.ip == ip)
    }

    /// The active instance that answers `port` on `ip`, if any.
    pub fn serving(&self, ip: Ipv4Addr, port: u16) -> Option<&HoneypotInstance> {
        self.live_at(ip).filter(|i| i.state == InstanceState::Active && i.port == port)
    }

    /// Earliest idle deadline among active instances, ties broken by id.
    pub fn next_reap_deadline(&self) -> Option<f64> {
        if self.config.mode == Mode::Static {
            return None;
        }
        self.instances
            .values()
            .filter(|i| i.state == InstanceState::Active)
            .map(|i| i.idle_deadline(self.config.idle_timeout))
            .min_by(f64::total_cmp)
    }

    fn live_of(&self, service: ServiceKind) -> Option<InstanceId> {
        self.instances.values().find(|i| i.is_live() && i.service == service).map(|i| i.id)
    }

    fn new_instance(&mut self, template: &HoneypotTemplate, ip: Ipv4Addr, ts: f64) -> InstanceId {
        let id = InstanceId(self.next_id);
        self.next_id += 1;
        self.instances.insert(
            id,
            HoneypotInstance {
                id,
                service: template.service,
                port: template.port,
                ip,
                state: InstanceState::Deploying,
                deployed_at: ts,
                ready_at: None,
                last_activity: ts,
                reaped_at: None,
                backup_id: None,
            },
        );
        id
    }

    fn deploy(
        &mut self,
        template: &HoneypotTemplate,
        ip: Ipv4Addr,
        ts: f64,
        cause: DeployCause,
        ahead: bool,
    ) -> OrchestratorEvent {
        let id = self.new_instance(template, ip, ts);
        OrchestratorEvent::for_instance(ts, id, template.service, ip, EventDetail::Deploy { cause, ahead })
    }

    fn touch(&mut self, id: InstanceId, ts: f64, src: Ipv4Addr, port: u16) -> OrchestratorEvent {
        let inst = self.instances.get_mut(&id).expect("touch of unknown instance");
        inst.last_activity = inst.last_activity.max(ts);
        OrchestratorEvent::for_instance(ts, id, inst.service, inst.ip, EventDetail::Touch { src, port })
    }

    /// Place every base template once, in catalog order, on the pool
    /// addresses in order. Only meaningful in static mode.
    pub fn deploy_static(&mut self, ts: f64) -> Vec<OrchestratorEvent> {
        let templates: Vec<HoneypotTemplate> = self.catalog.base_templates().cloned().collect();
        let ips = self.pool.ips().to_vec();
        templates.iter().zip(ips).map(|(t, ip)| self.deploy(t, ip, ts, DeployCause::Static, false)).collect()
    }

    /// React to a packet addressed to a reserved IP.
    ///
    /// A port with no template yields a single unknown-port notice. A port
    /// whose template already runs somewhere refreshes that instance (the one
    /// on the probed address if there is one, else the lowest id). Otherwise
    /// the template is deployed on the probed address when it is free and,
    /// with deploy-ahead enabled, on the next free address chosen by
    /// [`select_ips`].
    pub fn on_packet(&mut self, p: &Packet) -> Vec<OrchestratorEvent> {
        if !self.pool.contains(p.ip_dst) {
            return Vec::new();
        }
        let Some(template) = self.catalog.match_port(p.dst_port).cloned() else {
            return vec![OrchestratorEvent::new(
                p.ts,
                EventDetail::UnknownPortProbe { src: p.ip_src, port: p.dst_port },
            )
            .at_ip(p.ip_dst)];
        };

        let here = self.live_at(p.ip_dst).filter(|i| i.service == template.service).map(|i| i.id);
        if let Some(id) = here.or_else(|| self.live_of(template.service)) {
            return vec![self.touch(id, p.ts, p.ip_src, p.dst_port)];
        }
        if self.config.mode == Mode::Static {
            return Vec::new();
        }

        let mut events = Vec::new();
        let occupied = self.occupied();
        let cause = DeployCause::Probe { src: p.ip_src, port: p.dst_port };
        if !occupied.contains(&p.ip_dst) {
            events.push(self.deploy(&template, p.ip_dst, p.ts, cause.clone(), false));
        }
        if self.config.deploy_ahead {
            let ahead = select_ips(p.ip_dst, 1, &self.pool, &occupied).expect("dst checked above");
            match ahead.first() {
                Some(&ip) => events.push(self.deploy(&template, ip, p.ts, cause, true)),
                None => events.push(
                    OrchestratorEvent::new(p.ts, EventDetail::PoolExhausted { service: template.service })
                        .at_ip(p.ip_dst),
                ),
            }
        } else if events.is_empty() {
            events.push(
                OrchestratorEvent::new(p.ts, EventDetail::PoolExhausted { service: template.service }).at_ip(p.ip_dst),
            );
        }
        events
    }

    /// React to an IDS verdict on an HTTP decoy by placing the matching
    /// vulnerable image on the next free address.
    pub fn on_ids_alert(&mut self, alert: &IdsAlert) -> Vec<OrchestratorEvent> {
        let Some(host) = self.live_at(alert.ip).filter(|i| i.state == InstanceState::Active && i.service.is_http())
        else {
            return Vec::new();
        };
        let mut events = vec![OrchestratorEvent::for_instance(
            alert.ts,
            host.id,
            host.service,
            host.ip,
            EventDetail::AlertFollowup { label: alert.label, src: alert.src },
        )];
        let Some(template) = self.catalog.follow_up_for(alert.label).cloned() else {
            return events;
        };
        if let Some(id) = self.live_of(template.service) {
            events.push(self.touch(id, alert.ts, alert.src, template.port));
            return events;
        }
        if self.config.mode == Mode::Static {
            return events;
        }
        let picked = select_ips(alert.ip, 1, &self.pool, &self.occupied()).expect("alert ip is live");
        match picked.first() {
            Some(&ip) => {
                events.push(self.deploy(&template, ip, alert.ts, DeployCause::Alert { label: alert.label }, true))
            }
            None => events.push(
                OrchestratorEvent::new(alert.ts, EventDetail::PoolExhausted { service: template.service })
                    .at_ip(alert.ip),
            ),
        }
        events
    }

    /// Reap every active instance idle for at least the timeout, in id order.
    /// Backup fields of the returned events are left empty for the caller.
    pub fn reap_idle(&mut self, now: f64) -> Vec<OrchestratorEvent> {
        if self.config.mode == Mode::Static {
            return Vec::new();
        }
        let timeout = self.config.idle_timeout;
        let mut events = Vec::new();
        for inst in self.instances.values_mut() {
            if inst.state == InstanceState::Active && now >= inst.idle_deadline(timeout) {
                inst.state = InstanceState::Reaped;
                inst.reaped_at = Some(now);
                events.push(OrchestratorEvent::for_instance(
                    now,
                    inst.id,
                    inst.service,
                    inst.ip,
                    EventDetail::Reap { idle_for: now - inst.last_activity, backup_id: None, backup_error: None },
                ));
            }
        }
        events
    }

    pub fn mark_ready(&mut self, id: InstanceId, ts: f64) -> Option<OrchestratorEvent> {
        let inst = self.instances.get_mut(&id)?;
        if inst.state != InstanceState::Deploying {
            return None;
        }
        inst.state = InstanceState::Active;
        inst.ready_at = Some(ts);
        Some(OrchestratorEvent::for_instance(
            ts,
            id,
            inst.service,
            inst.ip,
            EventDetail::Ready { latency: ts - inst.deployed_at },
        ))
    }

    /// The backend could not start the instance; release its address.
    pub fn abort_deploy(&mut self, id: InstanceId, ts: f64, error: String) -> Option<OrchestratorEvent> {
        let inst = self.instances.get_mut(&id)?;
        inst.state = InstanceState::Reaped;
        inst.reaped_at = Some(ts);
        Some(OrchestratorEvent::for_instance(ts, id, inst.service, inst.ip, EventDetail::DeployFailed { error }))
    }

    pub fn record_backup(&mut self, id: InstanceId, backup_id: Option<String>) {
        if let Some(inst) = self.instances.get_mut(&id) {
            inst.backup_id = backup_id;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::tcp_flags;

    fn host(h: u8) -> Ipv4Addr {
        Ipv4Addr::new(172, 26, 233, h)
    }

    const SCANNER: Ipv4Addr = Ipv4Addr::new(172, 26, 233, 77);

    fn paper_pool() -> ReservedIpPool {
        let ips = [4, 40, 85, 125, 185, 220, 250].into_iter().map(host).collect();
        ReservedIpPool::from_list(ips, "172.26.233.0/24".parse().unwrap()).unwrap()
    }

    fn orch() -> Orchestrator {
        Orchestrator::new(paper_pool(), Catalog::default(), OrchestratorConfig::default())
    }

    fn syn(ts: f64, dst: u8, port: u16) -> Packet {
        Packet::tcp(ts, (SCANNER, 40000), (host(dst), port), tcp_flags::SYN, vec![])
    }

    fn deploys(events: &[OrchestratorEvent]) -> Vec<(ServiceKind, Ipv4Addr)> {
        events.iter().filter(|e| e.kind == EventKind::Deploy).map(|e| (e.service.unwrap(), e.ip.unwrap())).collect()
    }

    fn activate_all(o: &mut Orchestrator, ts: f64) {
        let ids: Vec<_> = o.instances().keys().copied().collect();
        for id in ids {
            o.mark_ready(id, ts);
        }
    }

    #[test]
    fn first_probe_deploys_here_and_ahead() {
        let mut o = orch();
        let ev = o.on_packet(&syn(1.0, 4, 80));
        assert_eq!(deploys(&ev), vec![(ServiceKind::HttpWeb, host(4)), (ServiceKind::HttpWeb, host(40))]);
        assert_eq!(ev[0].instance, Some(InstanceId(1)));
        assert!(matches!(ev[1].detail, EventDetail::Deploy { ahead: true, .. }));
    }

    #[test]
    fn probe_of_running_template_touches() {
        let mut o = orch();
        o.on_packet(&syn(1.0, 4, 80));
        activate_all(&mut o, 1.0);
        let ev = o.on_packet(&syn(30.0, 40, 80));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::Touch);
        assert_eq!(ev[0].ip, Some(host(40)));
        assert_eq!(o.instance(InstanceId(2)).unwrap().last_activity, 30.0);
    }

    #[test]
    fn unknown_port_only_notifies() {
        let mut o = orch();
        let ev = o.on_packet(&syn(1.0, 4, 9999));
        assert_eq!(ev.len(), 1);
        assert!(matches!(ev[0].detail, EventDetail::UnknownPortProbe { port: 9999, .. }));
        assert!(o.instances().is_empty());
    }

    #[test]
    fn deploy_ahead_can_be_disabled() {
        let mut o = Orchestrator::new(
            paper_pool(),
            Catalog::default(),
            OrchestratorConfig { deploy_ahead: false, ..Default::default() },
        );
        let ev = o.on_packet(&syn(1.0, 85, 22));
        assert_eq!(deploys(&ev), vec![(ServiceKind::Ssh, host(85))]);
    }

    #[test]
    fn mid_ladder_probe_deploys_at_far_end() {
        let mut o = orch();
        let ev = o.on_packet(&syn(1.0, 85, 22));
        assert_eq!(deploys(&ev), vec![(ServiceKind::Ssh, host(85)), (ServiceKind::Ssh, host(250))]);
    }

    #[test]
    fn sqli_alert_places_follow_up_on_next_free_ip() {
        let mut o = Orchestrator::new(
            paper_pool(),
            Catalog::default(),
            OrchestratorConfig { deploy_ahead: false, ..Default::default() },
        );
        o.on_packet(&syn(1.0, 4, 80));
        activate_all(&mut o, 1.0);
        let ev = o.on_ids_alert(&IdsAlert { label: AttackLabel::Sqli, ip: host(4), src: SCANNER, ts: 5.0 });
        assert_eq!(ev[0].kind, EventKind::AlertFollowup);
        assert_eq!(deploys(&ev), vec![(ServiceKind::HttpSqli, host(40))]);
    }

    #[test]
    fn alert_for_running_follow_up_touches_it() {
        let mut o = orch();
        o.on_packet(&syn(1.0, 4, 80)); // .4 and .40
        activate_all(&mut o, 1.0);
        o.on_ids_alert(&IdsAlert { label: AttackLabel::Xss, ip: host(4), src: SCANNER, ts: 2.0 });
        activate_all(&mut o, 2.0);
        let xss = o.instances().values().find(|i| i.service == ServiceKind::HttpXss).unwrap().ip;
        assert_eq!(xss, host(85));
        let ev = o.on_ids_alert(&IdsAlert { label: AttackLabel::Xss, ip: host(4), src: SCANNER, ts: 3.0 });
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[1].kind, ev[1].ip), (EventKind::Touch, Some(host(85))));
    }

    #[test]
    fn alert_with_exhausted_pool_only_notifies() {
        let mut o = Orchestrator::new(
            paper_pool(),
            Catalog::default(),
            OrchestratorConfig { deploy_ahead: false, ..Default::default() },
        );
        // Fill .4 .. .220 with distinct services so .250 can host HTTP.
        for (dst, port) in [(4, 22), (40, 25), (85, 502), (125, 3306), (185, 8080)] {
            o.on_packet(&syn(1.0, dst, port));
        }
        o.on_packet(&syn(1.0, 250, 80));
        activate_all(&mut o, 1.0);
        o.on_ids_alert(&IdsAlert { label: AttackLabel::Sqli, ip: host(250), src: SCANNER, ts: 2.0 });
        activate_all(&mut o, 2.0);
        assert_eq!(o.occupied().len(), 7);
        let ev = o.on_ids_alert(&IdsAlert { label: AttackLabel::Osc, ip: host(250), src: SCANNER, ts: 3.0 });
        assert_eq!(ev.len(), 2);
        assert!(matches!(ev[1].detail, EventDetail::PoolExhausted { service: ServiceKind::HttpOsc }));
    }

    #[test]
    fn reap_boundary_is_inclusive() {
        let mut o = orch();
        o.on_packet(&syn(100.0, 4, 502));
        activate_all(&mut o, 100.0);
        assert!(o.reap_idle(999.0).is_empty());
        let ev = o.reap_idle(1000.0);
        assert_eq!(ev.len(), 2);
        assert!(ev[0].instance < ev[1].instance);
        assert!(o.occupied().is_empty());
    }

    #[test]
    fn deploying_instances_are_not_reaped() {
        let mut o = orch();
        o.on_packet(&syn(0.0, 4, 22));
        assert!(o.reap_idle(5000.0).is_empty());
    }

    #[test]
    fn static_mode_places_base_templates_and_never_moves() {
        let mut o = Orchestrator::new(
            paper_pool(),
            Catalog::default(),
            OrchestratorConfig { mode: Mode::Static, ..Default::default() },
        );
        let ev = o.deploy_static(0.0);
        assert_eq!(ev.len(), 6);
        activate_all(&mut o, 0.0);
        assert!(o.on_packet(&syn(5.0, 250, 9999)).len() == 1);
        let touch = o.on_packet(&syn(5.0, 250, 22));
        assert_eq!(touch[0].kind, EventKind::Touch);
        assert!(o.reap_idle(1e9).is_empty());
        assert_eq!(o.next_reap_deadline(), None);
    }
}
