//! HTTP request recovery from in-order TCP payloads.
//!
//! Payload bytes of one TCP direction are concatenated and split wherever a
//! line starts with a request line (`METHOD SP target SP HTTP/x.y`).
//! Retransmissions and reordering are not handled; the input is assumed to be
//! an in-order stream.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::Packet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub ts: f64,
    pub src_ip: Ipv4Addr,
    pub method: String,
    pub path: String,
    pub query: String,
    pub body: String,
    /// The full request text; the source for all frequency features.
    pub raw: String,
    /// Bytes that did not start with a request line.
    pub malformed: bool,
}

impl HttpRequest {
    /// Request from raw text, as if received in a single segment.
    pub fn from_raw(ts: f64, src_ip: Ipv4Addr, raw: &str) -> Self {
        parse_segment(ts, src_ip, raw.as_bytes())
    }
}

/// True when a request line starts at byte `at`.
fn request_line_at(buf: &[u8], at: usize) -> bool {
    let rest = &buf[at..];
    let line_end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
    let line = &rest[..line_end];
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let mut parts = line.split(|&b| b == b' ');
    let (Some(method), Some(target), Some(version), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return false;
    };
    let method_ok = (1..=16).contains(&method.len()) && method.iter().all(u8::is_ascii_uppercase);
    let version_ok = version.len() == 8
        && version.starts_with(b"HTTP/")
        && version[5].is_ascii_digit()
        && version[6] == b'.'
        && version[7].is_ascii_digit();
    method_ok && !target.is_empty() && version_ok
}

fn parse_segment(ts: f64, src_ip: Ipv4Addr, seg: &[u8]) -> HttpRequest {
    let raw = String::from_utf8_lossy(seg).into_owned();
    if !request_line_at(seg, 0) {
        return HttpRequest {
            ts,
            src_ip,
            method: "UNKNOWN".into(),
            path: "/".into(),
            query: String::new(),
            body: String::new(),
            raw,
            malformed: true,
        };
    }
    let line_end = raw.find('\n').unwrap_or(raw.len());
    let line = raw[..line_end].trim_end_matches('\r');
    let mut parts = line.split(' ');
    let method = parts.next().unwrap_or_default().to_string();
    let target = parts.next().unwrap_or_default();
    let (path, query) = match target.split_once('?') {
        Some((p, q)) => (p.to_string(), q.to_string()),
        None => (target.to_string(), String::new()),
    };
    let body = raw
        .find("\r\n\r\n")
        .map(|i| i + 4)
        .or_else(|| raw.find("\n\n").map(|i| i + 2))
        .map(|i| raw[i..].to_string())
        .unwrap_or_default();
    HttpRequest { ts, src_ip, method, path, query, body, raw, malformed: false }
}

/// Split the payloads of one TCP direction into requests.
///
/// Each request carries the source address and timestamp of the packet that
/// holds its first byte. Leading bytes that are not a request line become one
/// degenerate request with `malformed = true` and the raw bytes preserved.
pub fn reassemble_http(packets: &[Packet]) -> Vec<HttpRequest> {
    let mut buf = Vec::new();
    // (offset of first byte, ts, src)
    let mut origins: Vec<(usize, f64, Ipv4Addr)> = Vec::new();
    for p in packets {
        let payload = p.payload_bytes();
        if payload.is_empty() {
            continue;
        }
        origins.push((buf.len(), p.ts, p.ip_src));
        buf.extend_from_slice(payload);
    }
    if buf.is_empty() {
        return Vec::new();
    }

    let mut starts = vec![0usize];
    for i in 1..buf.len() {
        if buf[i - 1] == b'\n' && request_line_at(&buf, i) {
            starts.push(i);
        }
    }
    let origin_of = |offset: usize| {
        let idx = origins.partition_point(|o| o.0 <= offset) - 1;
        (origins[idx].1, origins[idx].2)
    };

    starts
        .iter()
        .enumerate()
        .map(|(k, &start)| {
            let end = starts.get(k + 1).copied().unwrap_or(buf.len());
            let (ts, src) = origin_of(start);
            parse_segment(ts, src, &buf[start..end])
        })
        .collect()
}

/// Group packets by TCP direction (src, sport, dst, dport) and reassemble each
/// stream. Output is ordered by request timestamp, then stream key.
pub fn reassemble_http_streams(packets: &[Packet]) -> Vec<HttpRequest> {
    let mut streams: BTreeMap<(Ipv4Addr, u16, Ipv4Addr, u16), Vec<Packet>> = BTreeMap::new();
    for p in packets.iter().filter(|p| p.payload.is_some()) {
        streams.entry((p.ip_src, p.src_port, p.ip_dst, p.dst_port)).or_default().push(p.clone());
    }
    let mut out: Vec<HttpRequest> = streams.values().flat_map(|s| reassemble_http(s)).collect();
    out.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    out
}
