//! One-minute tumbling netflow windows and per-flow botnet classification.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::learners::{ClassifierModel, Dataset, FeatureSpec, LearnError, Schema};
use crate::packet::{tcp_flags, Packet, Protocol};

pub const WINDOW_SECS: f64 = 60.0;

/// Directional 5-tuple; `A -> B` and `B -> A` are distinct flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub ip_src: Ipv4Addr,
    pub ip_dst: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Protocol,
}

impl FlowKey {
    pub fn of(p: &Packet) -> Self {
        FlowKey { ip_src: p.ip_src, ip_dst: p.ip_dst, src_port: p.src_port, dst_port: p.dst_port, proto: p.proto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlowState {
    SynOnly,
    Established,
    FinRst,
    NonTcp,
}

impl FlowState {
    pub const LEVELS: [&'static str; 4] = ["SYN_ONLY", "ESTABLISHED", "FIN_RST", "NON_TCP"];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        Self::LEVELS[self.index()]
    }

    /// Summary of the union of TCP flags seen on a flow.
    pub fn from_flags(proto: Protocol, seen: u8) -> Self {
        if proto != Protocol::Tcp {
            FlowState::NonTcp
        } else if seen & (tcp_flags::FIN | tcp_flags::RST) != 0 {
            FlowState::FinRst
        } else if seen & tcp_flags::ACK != 0 {
            FlowState::Established
        } else {
            FlowState::SynOnly
        }
    }
}

impl std::str::FromStr for FlowState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SYN_ONLY" => Ok(FlowState::SynOnly),
            "ESTABLISHED" => Ok(FlowState::Established),
            "FIN_RST" | "FIN/RST_SEEN" => Ok(FlowState::FinRst),
            "NON_TCP" => Ok(FlowState::NonTcp),
            _ => Err(format!("unknown flow state `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub window_id: u64,
    pub key: FlowKey,
    pub first_ts: f64,
    pub last_ts: f64,
    pub total_bytes: u64,
    pub total_packets: u64,
    /// Union of TCP flags over member packets.
    pub flags_seen: u8,
}

impl FlowRecord {
    fn start(window_id: u64, p: &Packet) -> Self {
        FlowRecord {
            window_id,
            key: FlowKey::of(p),
            first_ts: p.ts,
            last_ts: p.ts,
            total_bytes: 0,
            total_packets: 0,
            flags_seen: 0,
        }
    }

    fn absorb(&mut self, p: &Packet) {
        self.first_ts = self.first_ts.min(p.ts);
        self.last_ts = self.last_ts.max(p.ts);
        self.total_bytes += u64::from(p.length);
        self.total_packets += 1;
        self.flags_seen |= p.tcp_flags;
    }

    pub fn duration(&self) -> f64 {
        self.last_ts - self.first_ts
    }

    pub fn state(&self) -> FlowState {
        FlowState::from_flags(self.key.proto, self.flags_seen)
    }

    /// Totals become per-minute rates only when the flow spans more than a
    /// minute, which happens for imported flows but never for windowed ones.
    fn per_minute(&self, total: u64) -> f64 {
        let d = self.duration();
        if d > WINDOW_SECS {
            total as f64 * WINDOW_SECS / d
        } else {
            total as f64
        }
    }

    pub fn features(&self) -> FlowFeatureVector {
        FlowFeatureVector {
            duration: self.duration(),
            proto: self.key.proto,
            src_port: self.key.src_port,
            dst_port: self.key.dst_port,
            bytes_per_min: self.per_minute(self.total_bytes),
            pkts_per_min: self.per_minute(self.total_packets),
            state: self.state(),
        }
    }
}

pub fn window_of(ts: f64) -> u64 {
    (ts / WINDOW_SECS).floor().max(0.0) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFeatureVector {
    pub duration: f64,
    pub proto: Protocol,
    pub src_port: u16,
    pub dst_port: u16,
    pub bytes_per_min: f64,
    pub pkts_per_min: f64,
    pub state: FlowState,
}

const PROTO_LEVELS: [&str; 4] = ["TCP", "UDP", "ICMP", "OTHER"];

fn proto_index(p: Protocol) -> usize {
    match p {
        Protocol::Tcp => 0,
        Protocol::Udp => 1,
        Protocol::Icmp => 2,
        Protocol::Other => 3,
    }
}

pub fn flow_schema() -> Schema {
    Schema::new(vec![
        FeatureSpec::numeric("duration"),
        FeatureSpec::categorical("proto", &PROTO_LEVELS),
        FeatureSpec::numeric("src_port"),
        FeatureSpec::numeric("dst_port"),
        FeatureSpec::numeric("bytes_per_min"),
        FeatureSpec::numeric("pkts_per_min"),
        FeatureSpec::categorical("state", &FlowState::LEVELS),
    ])
}

impl FlowFeatureVector {
    pub fn as_row(&self) -> Vec<f64> {
        vec![
            self.duration,
            proto_index(self.proto) as f64,
            f64::from(self.src_port),
            f64::from(self.dst_port),
            self.bytes_per_min,
            self.pkts_per_min,
            self.state.index() as f64,
        ]
    }
}

/// Partition packets by `(window, key)`; output is ordered by window then key.
pub fn aggregate_flows(packets: &[Packet]) -> Vec<FlowRecord> {
    let mut flows: BTreeMap<(u64, FlowKey), FlowRecord> = BTreeMap::new();
    for p in packets {
        let w = window_of(p.ts);
        flows.entry((w, FlowKey::of(p))).or_insert_with(|| FlowRecord::start(w, p)).absorb(p);
    }
    flows.into_values().collect()
}

/// Streaming form of [`aggregate_flows`] for time-ordered input. A window is
/// emitted as soon as a packet from a later window arrives.
#[derive(Debug, Default)]
pub struct FlowAggregator {
    window: Option<u64>,
    open: BTreeMap<FlowKey, FlowRecord>,
}

impl FlowAggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current_window(&self) -> Option<u64> {
        self.window
    }

    pub fn push(&mut self, p: &Packet) -> Vec<FlowRecord> {
        let w = window_of(p.ts);
        let closed = match self.window {
            Some(cur) if w > cur => self.flush(),
            _ => Vec::new(),
        };
        let w = w.max(self.window.unwrap_or(0));
        self.window = Some(w);
        self.open.entry(FlowKey::of(p)).or_insert_with(|| FlowRecord::start(w, p)).absorb(p);
        closed
    }

    /// Close the open window if time has moved past it.
    pub fn advance_to(&mut self, ts: f64) -> Vec<FlowRecord> {
        match self.window {
            Some(cur) if window_of(ts) > cur => self.flush(),
            _ => Vec::new(),
        }
    }

    pub fn flush(&mut self) -> Vec<FlowRecord> {
        std::mem::take(&mut self.open).into_values().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FlowVerdict {
    Botnet,
    Normal,
}

pub fn classify_flow(f: &FlowRecord, model: Option<&ClassifierModel>) -> Result<FlowVerdict, LearnError> {
    let model = model.ok_or(LearnError::UntrainedModel)?;
    model.check_schema(&flow_schema())?;
    Ok(if model.predict(&f.features().as_row())? == 1 { FlowVerdict::Botnet } else { FlowVerdict::Normal })
}

pub fn flow_dataset(flows: &[(FlowRecord, bool)]) -> Result<Dataset, LearnError> {
    let (rows, labels) = flows.iter().map(|(f, bot)| (f.features().as_row(), u8::from(*bot))).unzip();
    Dataset::new(flow_schema(), rows, labels)
}

/// Flat CSV row. Column order is the file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FlowCsvRow {
    window_id: u64,
    ip_src: Ipv4Addr,
    ip_dst: Ipv4Addr,
    src_port: u16,
    dst_port: u16,
    proto: Protocol,
    first_ts: f64,
    last_ts: f64,
    duration: f64,
    total_bytes: u64,
    total_packets: u64,
    state: String,
    label: Option<FlowVerdict>,
}

pub const FLOW_CSV_HEADER: &str =
    "window_id,ip_src,ip_dst,src_port,dst_port,proto,first_ts,last_ts,duration,total_bytes,total_packets,state,label";

pub fn write_flows_csv<W: Write>(sink: W, flows: &[(FlowRecord, Option<FlowVerdict>)]) -> Result<(), LearnError> {
    let mut w = csv::Writer::from_writer(sink);
    for (f, label) in flows {
        w.serialize(FlowCsvRow {
            window_id: f.window_id,
            ip_src: f.key.ip_src,
            ip_dst: f.key.ip_dst,
            src_port: f.key.src_port,
            dst_port: f.key.dst_port,
            proto: f.key.proto,
            first_ts: f.first_ts,
            last_ts: f.last_ts,
            duration: f.duration(),
            total_bytes: f.total_bytes,
            total_packets: f.total_packets,
            state: f.state().as_str().to_string(),
            label: *label,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Read flows from CSV. The state column is mapped back onto representative
/// TCP flags so [`FlowRecord::state`] reproduces it.
pub fn read_flows_csv<R: Read>(source: R) -> Result<Vec<(FlowRecord, Option<FlowVerdict>)>, LearnError> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: FlowCsvRow = row?;
        let state: FlowState = row.state.parse().map_err(LearnError::InvalidData)?;
        let flags_seen = match state {
            FlowState::SynOnly => tcp_flags::SYN,
            FlowState::NonTcp => 0,
            FlowState::Established => tcp_flags::ACK,
            FlowState::FinRst => tcp_flags::FIN,
        };
        if state != FlowState::from_flags(row.proto, flags_seen) {
            return Err(LearnError::InvalidData(format!("state {state:?} inconsistent with proto {}", row.proto)));
        }
        out.push((
            FlowRecord {
                window_id: row.window_id,
                key: FlowKey {
                    ip_src: row.ip_src,
                    ip_dst: row.ip_dst,
                    src_port: row.src_port,
                    dst_port: row.dst_port,
                    proto: row.proto,
                },
                first_ts: row.first_ts,
                last_ts: row.last_ts,
                total_bytes: row.total_bytes,
                total_packets: row.total_packets,
                flags_seen,
            },
            row.label,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(ts: f64, payload: usize) -> Packet {
        Packet::tcp(
            ts,
            (Ipv4Addr::new(10, 0, 0, 2), 4444),
            (Ipv4Addr::new(10, 0, 0, 9), 80),
            tcp_flags::ACK,
            vec![0; payload],
        )
    }

    #[test]
    fn singleton_flow() {
        let flows = aggregate_flows(&[pkt(3.0, 0)]);
        assert_eq!(flows.len(), 1);
        assert_eq!((flows[0].duration(), flows[0].total_packets), (0.0, 1));
        assert_eq!(flows[0].state(), FlowState::Established);
    }

    #[test]
    fn bytes_sum_within_window() {
        // 54-byte TCP frame + 46 payload bytes = 100 per packet.
        let ps: Vec<Packet> = (0..5).map(|i| pkt(10.0 + i as f64, 46)).collect();
        let flows = aggregate_flows(&ps);
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].total_bytes, 500);
        assert_eq!(flows[0].duration(), 4.0);
    }

    #[test]
    fn window_boundary_splits_flow() {
        let flows = aggregate_flows(&[pkt(59.9, 0), pkt(60.0, 0)]);
        assert_eq!(flows.len(), 2);
        assert_eq!((flows[0].window_id, flows[1].window_id), (0, 1));
    }

    #[test]
    fn streaming_matches_batch() {
        let ps: Vec<Packet> = (0..300).map(|i| pkt(i as f64 * 0.7, i % 13)).collect();
        let mut agg = FlowAggregator::new();
        let mut got: Vec<FlowRecord> = ps.iter().flat_map(|p| agg.push(p)).collect();
        got.extend(agg.flush());
        assert_eq!(got, aggregate_flows(&ps));
    }

    #[test]
    fn imported_long_flows_are_rate_normalized() {
        let f = FlowRecord {
            window_id: 0,
            key: FlowKey::of(&pkt(0.0, 0)),
            first_ts: 0.0,
            last_ts: 120.0,
            total_bytes: 1200,
            total_packets: 10,
            flags_seen: tcp_flags::ACK,
        };
        let v = f.features();
        assert_eq!((v.bytes_per_min, v.pkts_per_min), (600.0, 5.0));
    }

    #[test]
    fn csv_round_trip() {
        let mut flows: Vec<(FlowRecord, Option<FlowVerdict>)> =
            aggregate_flows(&[pkt(1.0, 3), pkt(70.0, 0)]).into_iter().map(|f| (f, Some(FlowVerdict::Normal))).collect();
        flows[1].1 = None;
        let mut buf = Vec::new();
        write_flows_csv(&mut buf, &flows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), FLOW_CSV_HEADER);
        let back = read_flows_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0.features(), flows[0].0.features());
        assert_eq!(back[1].1, None);
    }

    #[test]
    fn untrained_model_is_an_error() {
        let f = &aggregate_flows(&[pkt(0.0, 0)])[0];
        assert!(matches!(classify_flow(f, None), Err(LearnError::UntrainedModel)));
    }
}
