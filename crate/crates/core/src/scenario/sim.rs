//! Discrete-event attacker simulation driving the full engine.
//!
//! Time is an integer microsecond clock. Scripted packets are expanded up
//! front from per-actor random streams; reactive lingering is scheduled while
//! the run progresses, from a second per-actor stream. Ties are broken by
//! insertion order, so a run is a pure function of `(script, options)`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;

use rand::distributions::Alphanumeric;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::payloads::http_request;
use super::report::{build_report, ScenarioReport};
use super::script::{Action, ProbeKind, ScenarioScript};
use super::ScenarioError;
use crate::backend::{BackendAction, SimulatedBackend};
use crate::config::EngineConfig;
use crate::engine::{Detectors, Engine};
use crate::orchestrator::{HoneypotInstance, InstanceId, Mode, OrchestratorEvent};
use crate::packet::{tcp_flags, write_capture, Packet};
use crate::storage::{replay, Backup, BackupStore, EventLog, MalwareSample, PacketRef, StorageError, Vault};

/// Capture timestamps are offset by this epoch (2023-11-14T22:13:20Z).
pub const CAPTURE_EPOCH_US: i64 = 1_700_000_000_000_000;

const US: f64 = 1e6;
pub const MAX_DROP_SIZE: usize = 60_000;

#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    pub seed: u64,
    pub config: EngineConfig,
    pub detectors: Detectors,
}

impl ScenarioOptions {
    /// Defaults with the script's own seed, latency and deploy-ahead
    /// directives applied; callers may override afterwards.
    pub fn for_script(script: &ScenarioScript, detectors: Detectors) -> Self {
        let mut config = EngineConfig::default();
        if let Some(ahead) = script.deploy_ahead {
            config.deploy_ahead = ahead;
        }
        if let Some(latency) = script.latency {
            config.backend = crate::config::BackendConfig::Simulated { latency };
        }
        ScenarioOptions { seed: script.seed, config, detectors }
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.config.mode = mode;
        self
    }
}

/// Identifying facts about a run, stored next to its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    pub duration: f64,
    pub deploy_ahead: bool,
    pub latency: f64,
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub meta: RunMeta,
    pub events: Vec<OrchestratorEvent>,
    pub instances: BTreeMap<InstanceId, HoneypotInstance>,
    pub packets: Vec<Packet>,
    pub samples: Vec<MalwareSample>,
    pub backups: Vec<Backup>,
    pub backend_actions: Vec<BackendAction>,
    pub report: ScenarioReport,
}

impl ScenarioRun {
    pub fn events_jsonl(&self) -> Vec<u8> {
        let mut log = EventLog::in_memory();
        for ev in &self.events {
            log.append(ev.clone()).expect("in-memory append");
        }
        let mut out = Vec::new();
        log.write_jsonl(&mut out).expect("in-memory write");
        out
    }

    pub fn capture_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_capture(&mut out, &self.packets, CAPTURE_EPOCH_US).expect("in-memory write");
        out
    }

    /// `run.json`, `events.jsonl`, `capture.pcap`, `report.csv`, `samples.jsonl`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(StorageError::from)?;
        fs::write(dir.join("run.json"), meta + "\n")?;
        fs::write(dir.join("events.jsonl"), self.events_jsonl())?;
        fs::write(dir.join("capture.pcap"), self.capture_bytes())?;
        fs::write(dir.join("report.csv"), self.report.to_csv())?;
        let mut samples = Vec::new();
        for s in &self.samples {
            samples.extend(serde_json::to_vec(s).map_err(StorageError::from)?);
            samples.push(b'\n');
        }
        fs::write(dir.join("samples.jsonl"), samples)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Emit {
    /// `discover`: a responsive answer may start lingering.
    Packet {
        packet: Packet,
        discover: bool,
    },
    Drop {
        packet: Packet,
        path: String,
        content: Vec<u8>,
    },
}

#[derive(Debug)]
struct Pending {
    at: i64,
    seq: u64,
    actor: usize,
    emit: Emit,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct Queue {
    heap: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    end_us: i64,
}

impl Queue {
    fn push(&mut self, at: i64, actor: usize, emit: Emit) {
        if at >= self.end_us {
            return;
        }
        self.seq += 1;
        self.heap.push(Reverse(Pending { at, seq: self.seq, actor, emit }));
    }
}

fn to_us(t: f64) -> i64 {
    (t * US).round() as i64
}

fn ts(us: i64) -> f64 {
    us as f64 / US
}

fn actor_rng(seed: u64, actor: usize, reactive: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * actor as u64 + u64::from(reactive));
    rng
}

fn ephemeral(rng: &mut ChaCha8Rng) -> u16 {
    rng.gen_range(32768..61000)
}

fn probe_payload(kind: ProbeKind) -> Vec<u8> {
    match kind {
        ProbeKind::Ssh => b"SSH-2.0-Go\r\n".to_vec(),
        ProbeKind::Smtp => b"EHLO scanner.example\r\n".to_vec(),
        // Read holding registers 0..10 of unit 1.
        ProbeKind::Modbus => vec![0x00, 0x01, 0x00, 0x00, 0x00, 0x06, 0x01, 0x03, 0x00, 0x00, 0x00, 0x0a],
    }
}

fn dropped_file(rng: &mut ChaCha8Rng, path: &str, size: usize) -> Vec<u8> {
    let mut body = format!("#!/bin/sh\n# {path}\n").into_bytes();
    body.extend(rng.sample_iter(&Alphanumeric).take(size.saturating_sub(body.len())));
    body.truncate(size);
    body
}

fn expand(queue: &mut Queue, script: &ScenarioScript, seed: u64) -> Result<(), ScenarioError> {
    for (actor_idx, actor) in script.actors.iter().enumerate() {
        let mut rng = actor_rng(seed, actor_idx, false);
        let me = actor.ip;
        for sa in script.actions.iter().filter(|a| a.actor == actor_idx) {
            let start = to_us(sa.start);
            let packet = |queue: &mut Queue, at: i64, packet: Packet, discover: bool| {
                queue.push(at, actor_idx, Emit::Packet { packet, discover });
            };
            match &sa.action {
                Action::Scan { first, last, ports, rate } => {
                    let step = to_us(*rate);
                    let per_port = (step / (ports.len() as i64 + 1)).min(10_000);
                    for h in 0..Action::scanned_hosts(*first, *last) {
                        let host = Ipv4Addr::from(u32::from(*first) + h as u32);
                        let sport = ephemeral(&mut rng);
                        for (k, &port) in ports.iter().enumerate() {
                            let at = start + h as i64 * step + k as i64 * per_port;
                            let p = Packet::tcp(ts(at), (me, sport), (host, port), tcp_flags::SYN, Vec::new());
                            packet(queue, at, p, true);
                        }
                    }
                }
                Action::HttpAttack { target, port, class, count, interval } => {
                    for i in 0..*count {
                        let at = start + i as i64 * to_us(*interval);
                        let raw = http_request(&mut rng, *class, &target.to_string());
                        let flags = tcp_flags::PSH | tcp_flags::ACK;
                        let p =
                            Packet::tcp(ts(at), (me, ephemeral(&mut rng)), (*target, *port), flags, raw.into_bytes());
                        packet(queue, at, p, true);
                    }
                }
                Action::Probe { kind, target } => {
                    let sport = ephemeral(&mut rng);
                    let dst = (*target, kind.port());
                    packet(queue, start, Packet::tcp(ts(start), (me, sport), dst, tcp_flags::SYN, Vec::new()), true);
                    let at = start + 200_000;
                    let flags = tcp_flags::PSH | tcp_flags::ACK;
                    packet(queue, at, Packet::tcp(ts(at), (me, sport), dst, flags, probe_payload(*kind)), true);
                }
                Action::DropFile { target, port, size, path } => {
                    if *size > MAX_DROP_SIZE {
                        return Err(ScenarioError::ScriptValidation {
                            line: sa.line,
                            reason: format!("DROP_FILE size {size} exceeds {MAX_DROP_SIZE}"),
                        });
                    }
                    let at = start + 500_000;
                    let content = dropped_file(&mut rng, path, *size);
                    let flags = tcp_flags::PSH | tcp_flags::ACK;
                    let p = Packet::tcp(ts(at), (me, ephemeral(&mut rng)), (*target, *port), flags, content.clone());
                    queue.push(at, actor_idx, Emit::Drop { packet: p, path: path.clone(), content });
                }
                Action::Flood { target, port, pps, duration } => {
                    let n = (pps * duration).floor() as i64;
                    for k in 0..n {
                        let at = start + to_us(k as f64 / pps);
                        let p = Packet::tcp(
                            ts(at),
                            (me, ephemeral(&mut rng)),
                            (*target, *port),
                            tcp_flags::SYN,
                            Vec::new(),
                        );
                        packet(queue, at, p, false);
                    }
                }
                Action::Beacon { target, port, period, size, count } => {
                    let sport = ephemeral(&mut rng);
                    for k in 0..*count {
                        let at = start + k as i64 * to_us(*period);
                        let flags = tcp_flags::PSH | tcp_flags::ACK;
                        let p = Packet::tcp(ts(at), (me, sport), (*target, *port), flags, vec![0x42; *size]);
                        packet(queue, at, p, false);
                    }
                }
                Action::Idle { .. } => {}
            }
        }
    }
    Ok(())
}

const LINGER_PATHS: &[&str] = &[
    "/",
    "/index.html",
    "/login",
    "/admin",
    "/about",
    "/robots.txt",
    "/static/app.js",
    "/api/v1/status",
    "/search?q=report",
    "/images/logo.png",
];
const LINGER_COMMANDS: &[&str] = &[
    "ls -la\n",
    "uname -a\n",
    "cat /etc/issue\n",
    "ps aux\n",
    "id\n",
    "w\n",
    "cd /tmp && ls\n",
    "netstat -antp\n",
    "cat /proc/cpuinfo | grep name\n",
    "find / -perm -4000 -type f 2>/dev/null\n",
    "history\n",
    "df -h\n",
];

fn linger_payload(rng: &mut ChaCha8Rng, inst: &HoneypotInstance) -> Vec<u8> {
    if inst.service.is_http() {
        let path = LINGER_PATHS.choose(rng).expect("non-empty");
        format!("GET {path} HTTP/1.1\r\nHost: {}\r\nAccept: */*\r\n\r\n", inst.ip).into_bytes()
    } else {
        LINGER_COMMANDS.choose(rng).expect("non-empty").as_bytes().to_vec()
    }
}

pub fn run_scenario(script: &ScenarioScript, opts: &ScenarioOptions) -> Result<ScenarioRun, ScenarioError> {
    opts.config.validate()?;
    let pool = opts.config.pool.build().map_err(crate::config::ConfigError::from)?;
    let catalog = opts.config.catalog().map_err(crate::config::ConfigError::from)?;
    let latency = match &opts.config.backend {
        crate::config::BackendConfig::Simulated { latency } => *latency,
        _ => return Err(ScenarioError::Config("scenarios run on the simulated backend only".into())),
    };
    let mut engine = Engine::new(
        pool,
        catalog.clone(),
        opts.config.settings(),
        Box::new(SimulatedBackend::new(latency)),
        opts.detectors.clone(),
        EventLog::in_memory(),
        Vault::in_memory(),
        BackupStore::in_memory(),
    )?;

    let end_us = to_us(script.duration);
    let mut queue = Queue { heap: BinaryHeap::new(), seq: 0, end_us };
    expand(&mut queue, script, opts.seed)?;
    let mut reactive: Vec<ChaCha8Rng> = (0..script.actors.len()).map(|a| actor_rng(opts.seed, a, true)).collect();
    let mut engaged: BTreeSet<(usize, InstanceId)> = BTreeSet::new();
    let mut packets = Vec::new();

    engine.start(0.0)?;
    while let Some(Reverse(item)) = queue.heap.pop() {
        match item.emit {
            Emit::Packet { packet, discover } => {
                let answered = if discover {
                    engine.orchestrator().serving(packet.ip_dst, packet.dst_port).cloned()
                } else {
                    None
                };
                engine.on_packet(&packet)?;
                if let Some(inst) = answered {
                    if engaged.insert((item.actor, inst.id)) {
                        let src = (packet.ip_src, packet.src_port);
                        linger(&mut queue, &mut reactive[item.actor], item.actor, src, &inst, item.at, script);
                    }
                }
                packets.push(packet);
            }
            Emit::Drop { packet, path, content } => {
                engine.on_packet(&packet)?;
                engine.deliver_file(packet.ip_dst, packet.dst_port, &path, &content, packet.ts)?;
                packets.push(packet);
            }
        }
    }
    engine.finish(script.duration)?;

    let events = engine.log().events().to_vec();
    let instances = engine.orchestrator().instances().clone();
    debug_assert_eq!(replay(&events, &catalog).ok().as_ref(), Some(&instances));
    let meta = RunMeta {
        scenario: script.name.clone(),
        seed: opts.seed,
        mode: opts.config.mode,
        duration: script.duration,
        deploy_ahead: opts.config.deploy_ahead,
        latency,
    };
    let refs: Vec<PacketRef> = engine.packet_index().to_vec();
    let report = build_report(&meta, &events, &refs, &catalog)?;
    Ok(ScenarioRun {
        meta,
        events,
        instances,
        packets,
        samples: engine.vault().samples().cloned().collect(),
        backups: engine.backups().backups().to_vec(),
        backend_actions: engine.backend_actions().to_vec(),
        report,
    })
}

/// Keep talking to a decoy that answered. The session lasts a random base
/// length shrunk by the decoy's age, with random pauses between packets.
fn linger(
    queue: &mut Queue,
    rng: &mut ChaCha8Rng,
    actor: usize,
    src: (Ipv4Addr, u16),
    inst: &HoneypotInstance,
    now_us: i64,
    script: &ScenarioScript,
) {
    let m = &script.linger;
    let age = ts(now_us) - inst.ready_at.unwrap_or(inst.deployed_at);
    let base = if m.max > m.min { rng.gen_range(m.min..m.max) } else { m.min };
    let stay = to_us(base * (-age.max(0.0) / m.decay).exp());
    let mut at = now_us;
    loop {
        let gap = if m.gap_max > m.gap_min { rng.gen_range(m.gap_min..m.gap_max) } else { m.gap_min };
        at += to_us(gap);
        if at > now_us + stay {
            break;
        }
        // A short burst of requests or commands; HTTP clients open a new
        // connection per visit, shell sessions keep theirs.
        let sport = if inst.service.is_http() { ephemeral(rng) } else { src.1 };
        let mut t = at;
        for _ in 0..rng.gen_range(1..=4) {
            let payload = linger_payload(rng, inst);
            let flags = tcp_flags::PSH | tcp_flags::ACK;
            let p = Packet::tcp(ts(t), (src.0, sport), (inst.ip, inst.port), flags, payload);
            queue.push(t, actor, Emit::Packet { packet: p, discover: false });
            t += to_us(rng.gen_range(0.3..4.0));
        }
    }
}
