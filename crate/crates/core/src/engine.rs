//! Virtual-time engine tying the orchestrator to a backend, the detectors and
//! storage.
//!
//! Inputs (packets, file drops) at time `t` are applied before internal
//! timers due at exactly `t`. Timers are readiness completions, idle reaps at
//! their exact deadline, file-collection polls and flow-window closes.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::backend::{Backend, BackendAction, Handle};
use crate::botnet::{flow_schema, FlowAggregator, FlowRecord, WINDOW_SECS};
use crate::ddos::{DdosDetector, DdosVerdict};
use crate::http_ids::HttpIds;
use crate::learners::{ClassifierModel, LearnError};
use crate::orchestrator::{
    Catalog, EventDetail, EventKind, IdsAlert, InstanceId, InstanceState, Mode, Orchestrator, OrchestratorConfig,
    OrchestratorEvent, ReservedIpPool,
};
use crate::packet::{reassemble_http, Packet};
use crate::storage::{BackupStore, EventLog, PacketRef, SampleMeta, StorageError, Vault};

pub const DEFAULT_POLL_INTERVAL: f64 = 60.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("detector: {0}")]
    Detector(#[from] LearnError),
    #[error("packet at {got} precedes engine time {now}")]
    OutOfOrder { got: f64, now: f64 },
}

/// Trained models; a missing model disables that detector.
#[derive(Debug, Clone, Default)]
pub struct Detectors {
    pub http: Option<HttpIds>,
    pub ddos: Option<ClassifierModel>,
    pub botnet: Option<ClassifierModel>,
}

#[derive(Debug, Clone)]
pub struct EngineSettings {
    pub orchestrator: OrchestratorConfig,
    /// Seconds between new-file checks on each active decoy.
    pub poll_interval: f64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings { orchestrator: OrchestratorConfig::default(), poll_interval: DEFAULT_POLL_INTERVAL }
    }
}

/// Running totals. Everything here can also be recomputed from the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineStats {
    pub packets: u64,
    pub reserved_packets: u64,
    pub http_requests: u64,
    pub ddos_packets: u64,
    pub flows: u64,
    pub botnet_flows: u64,
    pub samples: u64,
}

pub struct Engine {
    orch: Orchestrator,
    backend: Box<dyn Backend>,
    handles: BTreeMap<InstanceId, Handle>,
    pending_ready: BTreeMap<InstanceId, f64>,
    next_poll: BTreeMap<InstanceId, f64>,
    last_poll: BTreeMap<InstanceId, f64>,
    http: Option<HttpIds>,
    ddos: Option<DdosDetector>,
    botnet: Option<ClassifierModel>,
    flows: FlowAggregator,
    log: EventLog,
    vault: Vault,
    backups: BackupStore,
    packet_index: Vec<PacketRef>,
    stats: EngineStats,
    poll_interval: f64,
    now: f64,
    started: bool,
}

enum Timer {
    Ready(InstanceId),
    Poll(InstanceId),
    Reap,
    FlowWindow,
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pool: ReservedIpPool,
        catalog: Catalog,
        settings: EngineSettings,
        backend: Box<dyn Backend>,
        detectors: Detectors,
        log: EventLog,
        vault: Vault,
        backups: BackupStore,
    ) -> Result<Self, EngineError> {
        if let Some(m) = &detectors.botnet {
            m.check_schema(&flow_schema())?;
        }
        let http = detectors.http.filter(|ids| {
            let complete = ids.is_complete();
            if !complete {
                log::warn!("HTTP IDS disabled: not all three attack models are loaded");
            }
            complete
        });
        Ok(Engine {
            orch: Orchestrator::new(pool, catalog, settings.orchestrator),
            backend,
            handles: BTreeMap::new(),
            pending_ready: BTreeMap::new(),
            next_poll: BTreeMap::new(),
            last_poll: BTreeMap::new(),
            http,
            ddos: detectors.ddos.map(|m| DdosDetector::new(Some(m))).transpose()?,
            botnet: detectors.botnet,
            flows: FlowAggregator::new(),
            log,
            vault,
            backups,
            packet_index: Vec::new(),
            stats: EngineStats::default(),
            poll_interval: settings.poll_interval,
            now: 0.0,
            started: false,
        })
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orch
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn vault(&self) -> &Vault {
        &self.vault
    }

    pub fn backups(&self) -> &BackupStore {
        &self.backups
    }

    pub fn backend_actions(&self) -> &[BackendAction] {
        self.backend.actions()
    }

    /// Packets addressed to reserved IPs, in arrival order.
    pub fn packet_index(&self) -> &[PacketRef] {
        &self.packet_index
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Begin at `ts`. Static mode places every base template here.
    pub fn start(&mut self, ts: f64) -> Result<(), EngineError> {
        if self.started {
            return Ok(());
        }
        self.started = true;
        self.now = ts;
        if self.orch.config().mode == Mode::Static {
            let events = self.orch.deploy_static(ts);
            self.apply(events)?;
        }
        Ok(())
    }

    fn next_timer(&self, limit: f64, inclusive: bool) -> Option<(f64, Timer)> {
        let due = |t: f64| if inclusive { t <= limit } else { t < limit };
        let mut best: Option<(f64, Timer)> = None;
        let mut offer = |t: f64, timer: Timer| {
            if due(t) && best.as_ref().is_none_or(|(b, _)| t < *b) {
                best = Some((t, timer));
            }
        };
        // Offered in tie-break priority order: the first offer wins on equal times.
        if let Some((&id, &t)) = self.pending_ready.iter().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0))) {
            offer(t, Timer::Ready(id));
        }
        if let Some((&id, &t)) = self.next_poll.iter().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0))) {
            offer(t, Timer::Poll(id));
        }
        if let Some(t) = self.orch.next_reap_deadline() {
            offer(t, Timer::Reap);
        }
        if let Some(w) = self.flows.current_window() {
            offer((w + 1) as f64 * WINDOW_SECS, Timer::FlowWindow);
        }
        best
    }

    fn run_timers(&mut self, limit: f64, inclusive: bool) -> Result<(), EngineError> {
        while let Some((t, timer)) = self.next_timer(limit, inclusive) {
            self.now = self.now.max(t);
            match timer {
                Timer::Ready(id) => {
                    self.pending_ready.remove(&id);
                    if let Some(ev) = self.orch.mark_ready(id, t) {
                        self.log.append(ev)?;
                        self.next_poll.insert(id, t + self.poll_interval);
                        self.last_poll.insert(id, t);
                    }
                }
                Timer::Poll(id) => {
                    self.poll(id, t)?;
                    self.next_poll.insert(id, t + self.poll_interval);
                }
                Timer::Reap => {
                    let events = self.orch.reap_idle(t);
                    self.apply(events)?;
                }
                Timer::FlowWindow => {
                    let closed = self.flows.flush();
                    self.classify_flows(closed, t)?;
                    // No packet has opened the next window yet.
                    self.flows = FlowAggregator::new();
                }
            }
        }
        Ok(())
    }

    fn classify_flows(&mut self, flows: Vec<FlowRecord>, ts: f64) -> Result<(), EngineError> {
        self.stats.flows += flows.len() as u64;
        let Some(model) = &self.botnet else { return Ok(()) };
        let mut hits = Vec::new();
        for f in flows {
            if model.predict(&f.features().as_row())? == 1 {
                hits.push(f);
            }
        }
        for f in hits {
            self.stats.botnet_flows += 1;
            let ev = OrchestratorEvent::new(
                ts,
                EventDetail::Botnet {
                    src: f.key.ip_src,
                    dst: f.key.ip_dst,
                    src_port: f.key.src_port,
                    dst_port: f.key.dst_port,
                    window_id: f.window_id,
                },
            )
            .at_ip(f.key.ip_dst);
            self.log.append(ev)?;
        }
        Ok(())
    }

    fn poll(&mut self, id: InstanceId, ts: f64) -> Result<(), EngineError> {
        let Some(handle) = self.handles.get(&id).cloned() else { return Ok(()) };
        let since = self.last_poll.get(&id).copied().unwrap_or(f64::NEG_INFINITY);
        self.last_poll.insert(id, ts);
        let files = match self.backend.list_new_files(&handle, since, ts) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("listing files of {id} failed: {e}");
                return Ok(());
            }
        };
        let inst = self.orch.instance(id).expect("handle implies instance").clone();
        for f in files {
            let meta = SampleMeta { ts, instance: Some(id), path: f.path.clone() };
            match self.vault.store_sample(&f.content, meta) {
                Ok((sample, true)) => {
                    self.stats.samples += 1;
                    let ev = OrchestratorEvent::for_instance(
                        ts,
                        id,
                        inst.service,
                        inst.ip,
                        EventDetail::MalwareSample { sha256: sample.sha256, path: f.path, size: sample.size },
                    );
                    self.log.append(ev)?;
                }
                Ok((_, false)) | Err(StorageError::EmptyFile) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// Append events, executing deploys and reaps against the backend.
    fn apply(&mut self, events: Vec<OrchestratorEvent>) -> Result<(), EngineError> {
        for mut ev in events {
            match (&mut ev.detail, ev.instance) {
                (EventDetail::Deploy { .. }, Some(id)) => {
                    self.log.append(ev.clone())?;
                    self.launch(id, ev.ts)?;
                }
                (EventDetail::Reap { backup_id, backup_error, .. }, Some(id)) => {
                    self.poll(id, ev.ts)?;
                    self.next_poll.remove(&id);
                    self.last_poll.remove(&id);
                    if let Some(handle) = self.handles.remove(&id) {
                        match self.backend.stop_with_backup(&handle, ev.ts, &mut self.backups) {
                            Ok(bid) => *backup_id = Some(bid),
                            Err(e) => *backup_error = Some(e.to_string()),
                        }
                    }
                    self.orch.record_backup(id, backup_id.clone());
                    self.log.append(ev)?;
                }
                _ => {
                    self.log.append(ev)?;
                }
            }
        }
        Ok(())
    }

    fn launch(&mut self, id: InstanceId, ts: f64) -> Result<(), EngineError> {
        let inst = self.orch.instance(id).expect("deployed instance exists").clone();
        let template = self.orch.catalog().get(inst.service).expect("template in catalog").clone();
        match self.backend.start(id, &template, inst.ip, ts) {
            Ok(started) => {
                self.handles.insert(id, started.handle);
                if started.latency <= 0.0 {
                    if let Some(ready) = self.orch.mark_ready(id, ts) {
                        self.log.append(ready)?;
                        self.next_poll.insert(id, ts + self.poll_interval);
                        self.last_poll.insert(id, ts);
                    }
                } else {
                    self.pending_ready.insert(id, ts + started.latency);
                }
            }
            Err(e) => {
                if let Some(ev) = self.orch.abort_deploy(id, ts, e.to_string()) {
                    self.log.append(ev)?;
                }
            }
        }
        Ok(())
    }

    fn enter(&mut self, ts: f64) -> Result<(), EngineError> {
        if !self.started {
            self.start(ts)?;
        }
        if ts < self.now {
            return Err(EngineError::OutOfOrder { got: ts, now: self.now });
        }
        self.run_timers(ts, false)?;
        self.now = ts;
        Ok(())
    }

    pub fn on_packet(&mut self, p: &Packet) -> Result<(), EngineError> {
        self.enter(p.ts)?;
        self.stats.packets += 1;

        let closed = self.flows.push(p);
        if !closed.is_empty() {
            self.classify_flows(closed, p.ts)?;
        }
        if let Some(det) = &mut self.ddos {
            if det.observe(p)? == DdosVerdict::Ddos {
                self.stats.ddos_packets += 1;
                let ev =
                    OrchestratorEvent::new(p.ts, EventDetail::Ddos { src: p.ip_src, dst: p.ip_dst }).at_ip(p.ip_dst);
                self.log.append(ev)?;
            }
        }

        if !self.orch.pool().contains(p.ip_dst) {
            return Ok(());
        }
        self.stats.reserved_packets += 1;
        self.packet_index.push(PacketRef::of(p));
        let responsive = self.orch.serving(p.ip_dst, p.dst_port).cloned();
        let events = self.orch.on_packet(p);
        self.apply(events)?;

        let Some(host) = responsive.filter(|i| i.service.is_http()) else { return Ok(()) };
        if p.payload.is_none() {
            return Ok(());
        }
        let requests = reassemble_http(std::slice::from_ref(p));
        self.stats.http_requests += requests.len() as u64;
        let Some(ids) = &self.http else { return Ok(()) };
        let mut alerts = Vec::new();
        for req in &requests {
            // The IDS was verified complete at construction.
            let labels = ids.classify(&req.raw).expect("complete IDS");
            alerts.extend(labels.into_iter().map(|label| IdsAlert { label, ip: host.ip, src: req.src_ip, ts: p.ts }));
        }
        for alert in alerts {
            let ev = OrchestratorEvent::for_instance(
                p.ts,
                host.id,
                host.service,
                host.ip,
                EventDetail::HttpAttack { label: alert.label, src: alert.src },
            );
            self.log.append(ev)?;
            let events = self.orch.on_ids_alert(&alert);
            self.apply(events)?;
        }
        Ok(())
    }

    /// Place a file on the decoy answering `ip:port`, if one is active.
    /// Returns whether a decoy received it.
    pub fn deliver_file(
        &mut self,
        ip: Ipv4Addr,
        port: u16,
        path: &str,
        content: &[u8],
        ts: f64,
    ) -> Result<bool, EngineError> {
        self.enter(ts)?;
        let Some(inst) = self.orch.serving(ip, port) else { return Ok(false) };
        let Some(handle) = self.handles.get(&inst.id).cloned() else { return Ok(false) };
        let Some(sim) = self.backend.as_simulated() else { return Ok(false) };
        Ok(sim.plant_file(&handle, path, content, ts).is_ok())
    }

    /// Advance to `end`, firing every timer due up to and including it, and
    /// close the open flow window. Decoys still running stay up.
    pub fn finish(&mut self, end: f64) -> Result<(), EngineError> {
        self.enter(end.max(self.now))?;
        self.run_timers(end, true)?;
        let open = self.flows.flush();
        if !open.is_empty() {
            self.classify_flows(open, end)?;
        }
        self.flows = FlowAggregator::new();
        self.log.flush()?;
        Ok(())
    }

    pub fn counts_by_kind(&self) -> BTreeMap<EventKind, usize> {
        let mut out = BTreeMap::new();
        for ev in self.log.events() {
            *out.entry(ev.kind).or_insert(0) += 1;
        }
        out
    }

    pub fn live_instances(&self) -> impl Iterator<Item = &crate::orchestrator::HoneypotInstance> {
        self.orch.instances().values().filter(|i| i.state != InstanceState::Reaped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SimulatedBackend;
    use crate::orchestrator::{Ipv4Net, ServiceKind};
    use crate::packet::tcp_flags;
    use crate::storage::replay;

    fn host(h: u8) -> Ipv4Addr {
        Ipv4Addr::new(172, 26, 233, h)
    }

    fn engine(latency: f64, mode: Mode) -> Engine {
        let net: Ipv4Net = "172.26.233.0/24".parse().unwrap();
        let pool = ReservedIpPool::from_list([4, 40, 85, 125, 185, 220, 250].map(host).to_vec(), net).unwrap();
        let mut settings = EngineSettings::default();
        settings.orchestrator.mode = mode;
        Engine::new(
            pool,
            Catalog::default(),
            settings,
            Box::new(SimulatedBackend::new(latency)),
            Detectors::default(),
            EventLog::in_memory(),
            Vault::in_memory(),
            BackupStore::in_memory(),
        )
        .unwrap()
    }

    fn syn(ts: f64, dst: u8, port: u16) -> Packet {
        Packet::tcp(ts, (host(77), 40000), (host(dst), port), tcp_flags::SYN, Vec::new())
    }

    #[test]
    fn probe_deploy_ready_and_reap() {
        let mut e = engine(6.0, Mode::Dynamic);
        e.on_packet(&syn(10.0, 85, 502)).unwrap();
        e.finish(2000.0).unwrap();
        let kinds: Vec<EventKind> = e.log().events().iter().map(|ev| ev.kind).collect();
        use EventKind::*;
        assert_eq!(kinds, vec![Deploy, Deploy, Ready, Ready, Reap, Reap]);
        let reaps: Vec<f64> = e.log().events().iter().filter(|ev| ev.kind == Reap).map(|ev| ev.ts).collect();
        // Ready at 16, idle since 10: deadline 910.
        assert_eq!(reaps, vec![910.0, 910.0]);
        assert_eq!(e.backups().backups().len(), 2);
        let rebuilt = replay(e.log().events(), e.orchestrator().catalog()).unwrap();
        assert_eq!(&rebuilt, e.orchestrator().instances());
    }

    #[test]
    fn activity_at_deadline_keeps_decoy() {
        let mut e = engine(0.0, Mode::Dynamic);
        e.on_packet(&syn(0.0, 4, 22)).unwrap();
        e.on_packet(&syn(900.0, 4, 22)).unwrap();
        e.finish(1000.0).unwrap();
        let touched = e.orchestrator().live_at(host(4)).expect("still live");
        assert_eq!(touched.last_activity, 900.0);
        // The untouched ahead decoy goes at its exact deadline.
        let reaps: Vec<(Option<Ipv4Addr>, f64)> =
            e.log().events().iter().filter(|ev| ev.kind == EventKind::Reap).map(|ev| (ev.ip, ev.ts)).collect();
        assert_eq!(reaps, vec![(Some(host(40)), 900.0)]);
    }

    #[test]
    fn dropped_file_is_collected_and_backed_up() {
        let mut e = engine(0.0, Mode::Dynamic);
        e.on_packet(&syn(0.0, 4, 22)).unwrap();
        assert!(e.deliver_file(host(4), 22, "/tmp/x.sh", b"rm -rf /", 60.0).unwrap());
        assert!(!e.deliver_file(host(5), 22, "/tmp/y", b"x", 61.0).unwrap());
        e.finish(5000.0).unwrap();
        let samples: Vec<&OrchestratorEvent> =
            e.log().events().iter().filter(|ev| matches!(ev.detail, EventDetail::MalwareSample { .. })).collect();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].ts, 60.0);
        assert_eq!(e.vault().len(), 1);
        let with_files: usize = e.backups().backups().iter().map(|b| b.files.len()).sum();
        assert_eq!(with_files, 1);
    }

    #[test]
    fn static_mode_places_base_templates_once() {
        let mut e = engine(6.0, Mode::Static);
        e.on_packet(&syn(100.0, 4, 80)).unwrap();
        e.finish(5000.0).unwrap();
        let deploys = e.counts_by_kind()[&EventKind::Deploy];
        assert_eq!(deploys, 6);
        assert!(e.log().events().iter().all(|ev| ev.kind != EventKind::Reap));
        assert_eq!(e.orchestrator().instance(InstanceId(1)).unwrap().service, ServiceKind::HttpWeb);
    }

    #[test]
    fn out_of_order_input_rejected() {
        let mut e = engine(0.0, Mode::Dynamic);
        e.on_packet(&syn(5.0, 4, 22)).unwrap();
        assert!(matches!(e.on_packet(&syn(4.0, 4, 22)), Err(EngineError::OutOfOrder { .. })));
    }
}
