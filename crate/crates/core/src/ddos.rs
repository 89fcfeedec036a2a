//! Per-packet DDoS features over sliding look-back windows.
//!
//! Every feature describes the stream *before* the current packet is added,
//! so a packet never counts itself.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::learners::{ClassifierModel, Dataset, LearnError, Schema};
use crate::packet::{MacAddr, Packet};

pub const SHORT_LOOKBACK: usize = 100;
pub const LONG_LOOKBACK: usize = 1000;
/// Packets of history required before the detector classifies; until then
/// the time features are measured from a cold start and carry no signal.
pub const WARMUP_PACKETS: usize = 10;

pub const FEATURE_NAMES: [&str; 16] = [
    "eth_src_occ_100",
    "eth_dst_occ_100",
    "ip_src_occ_100",
    "ip_dst_occ_100",
    "eth_src_occ_1000",
    "eth_dst_occ_1000",
    "ip_src_occ_1000",
    "ip_dst_occ_1000",
    "dt_prev",
    "dt_10",
    "dt_100",
    "dt_1000",
    "proto_code",
    "src_port",
    "dst_port",
    "length",
];

pub fn ddos_schema() -> Schema {
    Schema::numeric(&FEATURE_NAMES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Addresses {
    pub eth_src: MacAddr,
    pub eth_dst: MacAddr,
    pub ip_src: Ipv4Addr,
    pub ip_dst: Ipv4Addr,
}

impl Addresses {
    pub fn of(p: &Packet) -> Self {
        Addresses { eth_src: p.eth_src, eth_dst: p.eth_dst, ip_src: p.ip_src, ip_dst: p.ip_dst }
    }
}

#[derive(Debug, Clone)]
struct Counter<K: Hash + Eq>(HashMap<K, u32>);

impl<K: Hash + Eq> Default for Counter<K> {
    fn default() -> Self {
        Counter(HashMap::new())
    }
}

impl<K: Hash + Eq> Counter<K> {
    fn get(&self, k: &K) -> u32 {
        self.0.get(k).copied().unwrap_or(0)
    }

    fn add(&mut self, k: K) {
        *self.0.entry(k).or_insert(0) += 1;
    }

    fn remove(&mut self, k: &K) {
        if let Some(c) = self.0.get_mut(k) {
            *c -= 1;
            if *c == 0 {
                self.0.remove(k);
            }
        }
    }
}

/// Fixed-capacity window of recent address tuples with O(1) occurrence counts.
#[derive(Debug, Clone)]
struct Window {
    cap: usize,
    ring: VecDeque<Addresses>,
    eth_src: Counter<MacAddr>,
    eth_dst: Counter<MacAddr>,
    ip_src: Counter<Ipv4Addr>,
    ip_dst: Counter<Ipv4Addr>,
}

impl Window {
    fn new(cap: usize) -> Self {
        Window {
            cap,
            ring: VecDeque::with_capacity(cap),
            eth_src: Counter::default(),
            eth_dst: Counter::default(),
            ip_src: Counter::default(),
            ip_dst: Counter::default(),
        }
    }

    fn occurrences(&self, a: &Addresses) -> [u32; 4] {
        [
            self.eth_src.get(&a.eth_src),
            self.eth_dst.get(&a.eth_dst),
            self.ip_src.get(&a.ip_src),
            self.ip_dst.get(&a.ip_dst),
        ]
    }

    fn push(&mut self, a: Addresses) {
        if self.ring.len() == self.cap {
            let old = self.ring.pop_front().expect("full ring");
            self.eth_src.remove(&old.eth_src);
            self.eth_dst.remove(&old.eth_dst);
            self.ip_src.remove(&old.ip_src);
            self.ip_dst.remove(&old.ip_dst);
        }
        self.eth_src.add(a.eth_src);
        self.eth_dst.add(a.eth_dst);
        self.ip_src.add(a.ip_src);
        self.ip_dst.add(a.ip_dst);
        self.ring.push_back(a);
    }
}

/// Look-back history for one monitored interface.
#[derive(Debug, Clone)]
pub struct LookbackState {
    short: Window,
    long: Window,
    ts_history: VecDeque<f64>,
    first_ts: Option<f64>,
}

impl Default for LookbackState {
    fn default() -> Self {
        LookbackState {
            short: Window::new(SHORT_LOOKBACK),
            long: Window::new(LONG_LOOKBACK),
            ts_history: VecDeque::with_capacity(LONG_LOOKBACK),
            first_ts: None,
        }
    }
}

impl LookbackState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of packets seen so far, saturating at the long window size.
    pub fn depth(&self) -> usize {
        self.long.ring.len()
    }

    /// Most recent `n` address tuples, oldest first (`n` ≤ 1000).
    pub fn recent(&self, n: usize) -> impl Iterator<Item = &Addresses> {
        let len = self.long.ring.len();
        self.long.ring.iter().skip(len.saturating_sub(n))
    }

    /// Occurrence counts answered from the streaming counters, in feature order.
    pub fn occurrences(&self, a: &Addresses) -> [u32; 8] {
        let s = self.short.occurrences(a);
        let l = self.long.occurrences(a);
        [s[0], s[1], s[2], s[3], l[0], l[1], l[2], l[3]]
    }

    /// Time since the `m`-th previous packet, or since the first packet when
    /// fewer than `m` are available. Zero on an empty history.
    fn dt(&self, ts: f64, m: usize) -> f64 {
        let len = self.ts_history.len();
        let reference = if len >= m {
            self.ts_history[len - m]
        } else {
            match self.first_ts {
                Some(t) => t,
                None => return 0.0,
            }
        };
        (ts - reference).max(0.0)
    }

    pub fn update_and_extract(&mut self, p: &Packet) -> DdosFeatureVector {
        let a = Addresses::of(p);
        let occ = self.occurrences(&a);
        let mut v = [0.0; 16];
        for (slot, c) in v.iter_mut().zip(occ) {
            *slot = f64::from(c);
        }
        v[8] = self.dt(p.ts, 1);
        v[9] = self.dt(p.ts, 10);
        v[10] = self.dt(p.ts, SHORT_LOOKBACK);
        v[11] = self.dt(p.ts, LONG_LOOKBACK);
        v[12] = f64::from(p.proto.code());
        v[13] = f64::from(p.src_port);
        v[14] = f64::from(p.dst_port);
        v[15] = f64::from(p.length);

        self.short.push(a);
        self.long.push(a);
        if self.ts_history.len() == LONG_LOOKBACK {
            self.ts_history.pop_front();
        }
        self.ts_history.push_back(p.ts);
        self.first_ts.get_or_insert(p.ts);
        DdosFeatureVector(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdosFeatureVector(pub [f64; 16]);

impl DdosFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DdosVerdict {
    Ddos,
    Normal,
}

pub fn classify_packet(v: &DdosFeatureVector, model: Option<&ClassifierModel>) -> Result<DdosVerdict, LearnError> {
    let model = model.ok_or(LearnError::UntrainedModel)?;
    model.check_schema(&ddos_schema())?;
    Ok(if model.predict(&v.0)? == 1 { DdosVerdict::Ddos } else { DdosVerdict::Normal })
}

/// Feature vectors for a labeled packet stream, extracted in order with a
/// fresh look-back state.
pub fn ddos_dataset(packets: &[(Packet, bool)]) -> Result<Dataset, LearnError> {
    let mut st = LookbackState::new();
    let (rows, labels) =
        packets.iter().map(|(p, is_ddos)| (st.update_and_extract(p).0.to_vec(), u8::from(*is_ddos))).unzip();
    Dataset::new(ddos_schema(), rows, labels)
}

/// Streaming detector owning the interface's look-back state.
#[derive(Debug, Clone, Default)]
pub struct DdosDetector {
    state: LookbackState,
    model: Option<ClassifierModel>,
    positives: u64,
}

impl DdosDetector {
    pub fn new(model: Option<ClassifierModel>) -> Result<Self, LearnError> {
        if let Some(m) = &model {
            m.check_schema(&ddos_schema())?;
        }
        Ok(DdosDetector { state: LookbackState::new(), model, positives: 0 })
    }

    pub fn observe(&mut self, p: &Packet) -> Result<DdosVerdict, LearnError> {
        let model = self.model.as_ref().ok_or(LearnError::UntrainedModel)?;
        let warm = self.state.depth() >= WARMUP_PACKETS;
        let v = self.state.update_and_extract(p);
        // Schema was checked once in `new`.
        let verdict = if warm && model.predict(&v.0)? == 1 { DdosVerdict::Ddos } else { DdosVerdict::Normal };
        if verdict == DdosVerdict::Ddos {
            self.positives += 1;
        }
        Ok(verdict)
    }

    /// Running count of packets classified as DDoS.
    pub fn positives(&self) -> u64 {
        self.positives
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }
}
