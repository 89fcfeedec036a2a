//! Labelled synthetic corpora for the three detection tasks.
//!
//! Labels are exact by construction and class counts match the request.
//! Output is a pure function of `(task, seed, sizes)`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::payloads::{http_request, PayloadClass};
use super::ScenarioError;
use crate::botnet::{aggregate_flows, flow_dataset, flow_schema, FlowRecord};
use crate::ddos::{ddos_schema, LookbackState};
use crate::http_ids::{http_dataset, AttackLabel, TokenFeatureSpec};
use crate::learners::{Dataset, LearnError, Schema};
use crate::packet::{tcp_flags, Packet};

pub const MIN_CLASS_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusTask {
    Httpids,
    Botnet,
    Ddos,
}

impl FromStr for CorpusTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "httpids" => Ok(CorpusTask::Httpids),
            "botnet" => Ok(CorpusTask::Botnet),
            "ddos" => Ok(CorpusTask::Ddos),
            _ => Err(format!("unknown corpus task `{s}` (expected httpids, botnet or ddos)")),
        }
    }
}

/// A trainable detection problem; fixes the feature schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DetectionTask {
    Http(AttackLabel),
    Botnet,
    Ddos,
}

impl DetectionTask {
    pub const ALL: [DetectionTask; 5] = [
        DetectionTask::Http(AttackLabel::Xss),
        DetectionTask::Http(AttackLabel::Sqli),
        DetectionTask::Http(AttackLabel::Osc),
        DetectionTask::Botnet,
        DetectionTask::Ddos,
    ];

    pub fn schema(self) -> Schema {
        match self {
            DetectionTask::Http(l) => TokenFeatureSpec::builtin(l).schema(),
            DetectionTask::Botnet => flow_schema(),
            DetectionTask::Ddos => ddos_schema(),
        }
    }
}

impl fmt::Display for DetectionTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectionTask::Http(l) => write!(f, "httpids-{}", l.as_str().to_lowercase()),
            DetectionTask::Botnet => f.write_str("botnet"),
            DetectionTask::Ddos => f.write_str("ddos"),
        }
    }
}

impl FromStr for DetectionTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectionTask::ALL.into_iter().find(|t| t.to_string().eq_ignore_ascii_case(s)).ok_or_else(|| {
            format!("unknown task `{s}` (expected httpids-xss, httpids-sqli, httpids-osc, botnet or ddos)")
        })
    }
}

/// Requested rows per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSizes {
    pub negative: usize,
    pub positive: usize,
}

impl ClassSizes {
    pub fn balanced(per_class: usize) -> Self {
        ClassSizes { negative: per_class, positive: per_class }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusPart {
    pub task: DetectionTask,
    pub dataset: Dataset,
}

/// Raw HTTP request with its generating class, kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledRequest {
    pub class: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub task: CorpusTask,
    pub seed: u64,
    pub parts: Vec<CorpusPart>,
    pub requests: Vec<LabelledRequest>,
}

impl Corpus {
    pub fn part(&self, task: DetectionTask) -> Option<&Dataset> {
        self.parts.iter().find(|p| p.task == task).map(|p| &p.dataset)
    }

    /// Write `<task>.csv` per part (and `httpids-requests.jsonl`); returns
    /// the paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for part in &self.parts {
            let path = dir.join(format!("{}.csv", part.task));
            part.dataset.write_csv(fs::File::create(&path)?)?;
            written.push(path);
        }
        if !self.requests.is_empty() {
            let path = dir.join("httpids-requests.jsonl");
            let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
            for r in &self.requests {
                serde_json::to_writer(&mut f, r).map_err(LearnError::from)?;
                f.write_all(b"\n")?;
            }
            f.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gen_corpus(task: CorpusTask, seed: u64, sizes: ClassSizes) -> Result<Corpus, ScenarioError> {
    if sizes.negative < MIN_CLASS_SIZE || sizes.positive < MIN_CLASS_SIZE {
        return Err(ScenarioError::Corpus(format!(
            "class sizes must be at least {MIN_CLASS_SIZE}, got {} negative / {} positive",
            sizes.negative, sizes.positive
        )));
    }
    let mut corpus = Corpus { task, seed, parts: Vec::new(), requests: Vec::new() };
    match task {
        CorpusTask::Httpids => {
            for (k, label) in AttackLabel::ALL.into_iter().enumerate() {
                let mut rng = rng_for(seed, k as u64);
                let rows = http_rows(&mut rng, label, sizes);
                let spec = TokenFeatureSpec::builtin(label);
                let dataset =
                    http_dataset(&spec, rows.iter().map(|(c, raw)| (raw.as_str(), *c == PayloadClass::Attack(label))))?;
                corpus.requests.extend(rows.into_iter().map(|(c, raw)| LabelledRequest { class: c.to_string(), raw }));
                corpus.parts.push(CorpusPart { task: DetectionTask::Http(label), dataset });
            }
        }
        CorpusTask::Botnet => {
            let flows = botnet_flows(&mut rng_for(seed, 10), sizes);
            corpus.parts.push(CorpusPart { task: DetectionTask::Botnet, dataset: flow_dataset(&flows)? });
        }
        CorpusTask::Ddos => {
            let mut rows = Vec::with_capacity(sizes.negative + sizes.positive);
            let mut labels = Vec::with_capacity(sizes.negative + sizes.positive);
            for capture in ddos_captures(&mut rng_for(seed, 20), sizes) {
                let mut state = LookbackState::new();
                for (p, y) in &capture {
                    rows.push(state.update_and_extract(p).0.to_vec());
                    labels.push(u8::from(*y));
                }
            }
            let dataset = Dataset::new(ddos_schema(), rows, labels)?;
            corpus.parts.push(CorpusPart { task: DetectionTask::Ddos, dataset });
        }
    }
    Ok(corpus)
}

/// Negatives are three parts benign browsing to one part other attack
/// classes, so each detector learns to ignore its siblings.
fn http_rows(rng: &mut ChaCha8Rng, label: AttackLabel, sizes: ClassSizes) -> Vec<(PayloadClass, String)> {
    let others: Vec<AttackLabel> = AttackLabel::ALL.into_iter().filter(|&l| l != label).collect();
    let mut rows = Vec::with_capacity(sizes.negative + sizes.positive);
    for _ in 0..sizes.positive {
        rows.push((PayloadClass::Attack(label), http_request(rng, PayloadClass::Attack(label), "shop.example")));
    }
    for i in 0..sizes.negative {
        let class =
            if i % 4 == 3 { PayloadClass::Attack(others[(i / 4) % others.len()]) } else { PayloadClass::Benign };
        rows.push((class, http_request(rng, class, "shop.example")));
    }
    rows.shuffle(rng);
    rows
}

fn lan_host(rng: &mut ChaCha8Rng) -> Ipv4Addr {
    Ipv4Addr::new(10, 1, rng.gen_range(0..4), rng.gen_range(2..250))
}

fn external_host(rng: &mut ChaCha8Rng) -> Ipv4Addr {
    Ipv4Addr::new(rng.gen_range(11..223), rng.gen_range(0..=255), rng.gen_range(0..=255), rng.gen_range(1..255))
}

fn ephemeral(rng: &mut ChaCha8Rng) -> u16 {
    rng.gen_range(32768..61000)
}

/// One directional flow confined to window `w`.
fn background_flow(rng: &mut ChaCha8Rng, w: u64) -> Vec<Packet> {
    let base = w as f64 * 60.0 + rng.gen_range(0.0..5.0);
    let src = lan_host(rng);
    let sport = ephemeral(rng);
    let mut out = Vec::new();
    match rng.gen_range(0..6) {
        // Web transfer: bursty, large segments.
        0 | 1 => {
            let dst = (external_host(rng), *[80u16, 443, 8080].choose(rng).unwrap());
            let n = rng.gen_range(4..60);
            let span = rng.gen_range(0.2..20.0);
            for k in 0..n {
                let ts = base + span * k as f64 / n as f64;
                let flags = if k == 0 {
                    tcp_flags::SYN
                } else if k + 1 == n && rng.gen_bool(0.7) {
                    tcp_flags::FIN | tcp_flags::ACK
                } else {
                    tcp_flags::PSH | tcp_flags::ACK
                };
                let size = if k == 0 { 0 } else { rng.gen_range(400..1460) };
                out.push(Packet::tcp(ts, (src, sport), dst, flags, vec![0x61; size]));
            }
        }
        // DNS lookup.
        2 => {
            let dst = (Ipv4Addr::new(10, 1, 0, 1), 53);
            for k in 0..rng.gen_range(1..4) {
                out.push(Packet::udp(base + k as f64 * 0.05, (src, sport), dst, vec![0x64; rng.gen_range(30..120)]));
            }
        }
        // Interactive shell: many small packets.
        3 => {
            let dst = (Ipv4Addr::new(10, 1, 9, rng.gen_range(2..20)), 22);
            let n = rng.gen_range(25..200);
            let span = rng.gen_range(10.0..54.0);
            for k in 0..n {
                let ts = base + span * k as f64 / n as f64 + rng.gen_range(0.0..0.01);
                out.push(Packet::tcp(
                    ts,
                    (src, sport),
                    dst,
                    tcp_flags::PSH | tcp_flags::ACK,
                    vec![0x73; rng.gen_range(20..140)],
                ));
            }
        }
        // Scan probe.
        4 => {
            let dst = (external_host(rng), rng.gen_range(1..1024));
            out.push(Packet::tcp(base, (src, sport), dst, tcp_flags::SYN, Vec::new()));
        }
        // Ping.
        _ => {
            let dst = external_host(rng);
            for k in 0..rng.gen_range(1..6) {
                out.push(Packet::icmp(base + k as f64, src, dst, vec![0x70; 56]));
            }
        }
    }
    out
}

/// Fixed-period, fixed-size check-ins to a command server.
fn beacon_flow(rng: &mut ChaCha8Rng, w: u64) -> Vec<Packet> {
    let period = rng.gen_range(3.0..25.0);
    let size = rng.gen_range(40..260);
    let start = w as f64 * 60.0 + rng.gen_range(0.0..2.0);
    let src = lan_host(rng);
    let dst = (external_host(rng), *[6667u16, 4444, 1337, 8443, 443, 80, 5555].choose(rng).unwrap());
    let udp = rng.gen_bool(0.2);
    let sport = ephemeral(rng);
    let mut out = Vec::new();
    let mut ts = start;
    while ts < w as f64 * 60.0 + 59.0 {
        out.push(if udp {
            Packet::udp(ts, (src, sport), dst, vec![0x62; size])
        } else {
            Packet::tcp(ts, (src, sport), dst, tcp_flags::PSH | tcp_flags::ACK, vec![0x62; size])
        });
        ts += period;
    }
    out
}

fn botnet_flows(rng: &mut ChaCha8Rng, sizes: ClassSizes) -> Vec<(FlowRecord, bool)> {
    let mut kinds: Vec<bool> =
        std::iter::repeat_n(false, sizes.negative).chain(std::iter::repeat_n(true, sizes.positive)).collect();
    kinds.shuffle(rng);
    kinds
        .into_iter()
        .enumerate()
        .map(|(w, bot)| {
            let pkts = if bot { beacon_flow(rng, w as u64) } else { background_flow(rng, w as u64) };
            let mut flows = aggregate_flows(&pkts);
            debug_assert_eq!(flows.len(), 1);
            (flows.pop().expect("one flow per window"), bot)
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Regime {
    Busy,
    Normal,
    Slow,
    Scan,
}

/// Independent captures of background regime segments with flood bursts
/// overlaid. Each capture starts from an empty history, so cold starts and
/// sparse traffic are represented, not just the warm middle of one stream.
fn ddos_captures(rng: &mut ChaCha8Rng, sizes: ClassSizes) -> Vec<Vec<(Packet, bool)>> {
    let servers: Vec<Ipv4Addr> = (0..8).map(|i| Ipv4Addr::new(10, 1, 1, 10 + i)).collect();
    let mut captures: Vec<(Vec<Packet>, Vec<Packet>, f64)> = Vec::new();
    let mut remaining = sizes.negative;
    while remaining > 0 {
        let quota = rng.gen_range(60..600).min(remaining);
        remaining -= quota;
        let (background, horizon) = background_capture(rng, &servers, quota);
        captures.push((background, Vec::new(), horizon));
    }

    let mut flooded = 0;
    while flooded < sizes.positive {
        let (_, flood, horizon) = captures.choose_mut(rng).expect("at least one capture");
        let n = rng.gen_range(150..600).min(sizes.positive - flooded);
        flooded += n;
        let pps = rng.gen_range(300.0..3000.0);
        let start = rng.gen_range(0.0..horizon.max(1.0));
        let victim = *servers.choose(rng).unwrap();
        let sources: Vec<Ipv4Addr> = (0..rng.gen_range(1..4)).map(|_| external_host(rng)).collect();
        let spoofed = rng.gen_bool(0.25);
        let udp = rng.gen_bool(0.3);
        for k in 0..n {
            let t = start + k as f64 / pps;
            let src = if spoofed { external_host(rng) } else { *sources.choose(rng).unwrap() };
            let p = if udp {
                Packet::udp(
                    t,
                    (src, ephemeral(rng)),
                    (victim, rng.gen_range(1..65535)),
                    vec![0; rng.gen_range(0..1200)],
                )
            } else {
                Packet::tcp(t, (src, ephemeral(rng)), (victim, 80), tcp_flags::SYN, Vec::new())
            };
            flood.push(p);
        }
    }

    captures
        .into_iter()
        .map(|(background, flood, _)| {
            let mut merged: Vec<(Packet, bool)> =
                background.into_iter().map(|p| (p, false)).chain(flood.into_iter().map(|p| (p, true))).collect();
            merged.sort_by(|a, b| a.0.ts.total_cmp(&b.0.ts));
            merged
        })
        .collect()
}

/// `quota` background packets in regime segments; returns them with the
/// capture's time span.
fn background_capture(rng: &mut ChaCha8Rng, servers: &[Ipv4Addr], quota: usize) -> (Vec<Packet>, f64) {
    let mut background = Vec::with_capacity(quota);
    let mut ts = 0.0;
    while background.len() < quota {
        let regime = *[Regime::Busy, Regime::Normal, Regime::Normal, Regime::Slow, Regime::Scan].choose(rng).unwrap();
        let segment = rng.gen_range(20..250).min(quota - background.len());
        let scanner = external_host(rng);
        let pair = (lan_host(rng), *servers.choose(rng).unwrap());
        let scan_gap = rng.gen_range(0.05..3.0);
        let slow_ports = (ephemeral(rng), *[22u16, 25, 443, 1883, 5222, 6667, 8443].choose(rng).unwrap());
        let slow_udp = rng.gen_bool(0.25);
        let mut swept = u32::from(Ipv4Addr::new(10, 1, 2, 1));
        for _ in 0..segment {
            let p = match regime {
                Regime::Busy | Regime::Normal => {
                    // Some packets follow their predecessor almost at once,
                    // as replies and back-to-back segments do.
                    ts += match regime {
                        _ if rng.gen_bool(0.2) => rng.gen_range(0.0..0.002),
                        Regime::Busy => rng.gen_range(0.005..0.05),
                        _ => rng.gen_range(0.05..0.6),
                    };
                    let client = lan_host(rng);
                    let server = *servers.choose(rng).unwrap();
                    let port = *[80u16, 443, 53, 22, 3306].choose(rng).unwrap();
                    if rng.gen_bool(0.5) {
                        Packet::tcp(
                            ts,
                            (client, ephemeral(rng)),
                            (server, port),
                            tcp_flags::PSH | tcp_flags::ACK,
                            vec![0; rng.gen_range(0..1400)],
                        )
                    } else {
                        Packet::tcp(
                            ts,
                            (server, port),
                            (client, ephemeral(rng)),
                            tcp_flags::ACK,
                            vec![0; rng.gen_range(0..1400)],
                        )
                    }
                }
                // One quiet conversation: interactive shell, keepalives, polling.
                Regime::Slow => {
                    ts += rng.gen_range(1.0..45.0);
                    let body = vec![0; rng.gen_range(20..300)];
                    if slow_udp {
                        Packet::udp(ts, (pair.0, slow_ports.0), (pair.1, slow_ports.1), body)
                    } else {
                        Packet::tcp(
                            ts,
                            (pair.0, slow_ports.0),
                            (pair.1, slow_ports.1),
                            tcp_flags::PSH | tcp_flags::ACK,
                            body,
                        )
                    }
                }
                // Scanners probe a few ports per host back to back, then move on.
                Regime::Scan => {
                    if rng.gen_bool(0.5) {
                        ts += rng.gen_range(0.002..0.02);
                    } else {
                        ts += scan_gap;
                        swept += 1;
                    }
                    let port = *[22u16, 25, 80, 443, 502, 3306, 8080].choose(rng).unwrap();
                    Packet::tcp(ts, (scanner, 40000), (Ipv4Addr::from(swept), port), tcp_flags::SYN, Vec::new())
                }
            };
            background.push(p);
        }
    }
    (background, ts)
}
