//! Packet model shared by every component of the engine.
//!
//! A [`Packet`] is one observed Ethernet/IPv4 frame reduced to the fields the
//! orchestrator and the detectors consume. Capture files are read and written
//! by [`pcap`], raw frames are encoded/decoded by [`frame`], and HTTP requests
//! are recovered from TCP payloads by [`http`].

pub mod frame;
pub mod http;
pub mod pcap;

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::orchestrator::ReservedIpPool;

pub use http::{reassemble_http, HttpRequest};
pub use pcap::{parse_capture, write_capture, Capture, CaptureError};

/// TCP flag bits as they appear in the TCP header.
pub mod tcp_flags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
}

/// 48-bit link-layer address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Locally administered address derived from an IPv4 host address. Used by
    /// the simulator so each simulated host has a stable link address.
    pub fn for_host(ip: Ipv4Addr) -> Self {
        let o = ip.octets();
        MacAddr([0x02, 0x00, o[0], o[1], o[2], o[3]])
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3], b[4], b[5])
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("invalid MAC address `{s}`"));
        }
        for (slot, part) in out.iter_mut().zip(parts) {
            *slot = u8::from_str_radix(part, 16).map_err(|_| format!("invalid MAC address `{s}`"))?;
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Transport protocol of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Other,
}

impl Protocol {
    /// IANA protocol number; `Other` maps to 0.
    pub fn code(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
            Protocol::Icmp => 1,
            Protocol::Other => 0,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            6 => Protocol::Tcp,
            17 => Protocol::Udp,
            1 => Protocol::Icmp,
            _ => Protocol::Other,
        }
    }

    pub fn has_ports(self) -> bool {
        matches!(self, Protocol::Tcp | Protocol::Udp)
    }

    /// Smallest Ethernet + IPv4 + transport header size for the protocol.
    pub fn min_frame_len(self) -> u32 {
        match self {
            Protocol::Tcp => 54,
            Protocol::Udp | Protocol::Icmp => 42,
            Protocol::Other => 34,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Tcp => "TCP",
            Protocol::Udp => "UDP",
            Protocol::Icmp => "ICMP",
            Protocol::Other => "OTHER",
        };
        f.write_str(s)
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TCP" => Ok(Protocol::Tcp),
            "UDP" => Ok(Protocol::Udp),
            "ICMP" => Ok(Protocol::Icmp),
            "OTHER" => Ok(Protocol::Other),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

/// One observed frame.
///
/// `ts` is seconds since the stream epoch (the first packet of the stream).
/// Ports are zero for ICMP and other non-port protocols. `length` is the
/// on-wire frame length, which may exceed the captured bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub ts: f64,
    pub eth_src: MacAddr,
    pub eth_dst: MacAddr,
    pub ip_src: Ipv4Addr,
    pub ip_dst: Ipv4Addr,
    pub proto: Protocol,
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u32,
    /// Raw TCP flag byte; zero for non-TCP packets.
    pub tcp_flags: u8,
    pub payload: Option<Vec<u8>>,
}

impl Packet {
    fn build(
        ts: f64,
        ip_src: Ipv4Addr,
        ip_dst: Ipv4Addr,
        proto: Protocol,
        ports: (u16, u16),
        tcp_flags: u8,
        payload: Vec<u8>,
    ) -> Self {
        let length = proto.min_frame_len() + payload.len() as u32;
        let (src_port, dst_port) = if proto.has_ports() { ports } else { (0, 0) };
        Packet {
            ts,
            eth_src: MacAddr::for_host(ip_src),
            eth_dst: MacAddr::for_host(ip_dst),
            ip_src,
            ip_dst,
            proto,
            src_port,
            dst_port,
            length,
            tcp_flags: if proto == Protocol::Tcp { tcp_flags } else { 0 },
            payload: if payload.is_empty() { None } else { Some(payload) },
        }
    }

    pub fn tcp(ts: f64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), flags: u8, payload: Vec<u8>) -> Self {
        Self::build(ts, src.0, dst.0, Protocol::Tcp, (src.1, dst.1), flags, payload)
    }

    pub fn udp(ts: f64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), payload: Vec<u8>) -> Self {
        Self::build(ts, src.0, dst.0, Protocol::Udp, (src.1, dst.1), 0, payload)
    }

    pub fn icmp(ts: f64, src: Ipv4Addr, dst: Ipv4Addr, payload: Vec<u8>) -> Self {
        Self::build(ts, src, dst, Protocol::Icmp, (0, 0), 0, payload)
    }

    pub fn payload_bytes(&self) -> &[u8] {
        self.payload.as_deref().unwrap_or(&[])
    }
}

/// True iff the packet is addressed to one of the reserved decoy IPs.
pub fn is_reserved_target(p: &Packet, pool: &ReservedIpPool) -> bool {
    pool.contains(p.ip_dst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_pool() -> ReservedIpPool {
        let ips = [4u8, 40, 85, 125, 185, 220, 250].iter().map(|h| Ipv4Addr::new(172, 26, 233, *h)).collect();
        ReservedIpPool::from_list(ips, "172.26.233.0/24".parse().unwrap()).unwrap()
    }

    fn probe(dst: Ipv4Addr) -> Packet {
        Packet::tcp(0.0, (Ipv4Addr::new(172, 26, 233, 77), 40000), (dst, 80), tcp_flags::SYN, vec![])
    }

    #[test]
    fn reserved_first_and_last_pool_members() {
        let pool = paper_pool();
        assert!(is_reserved_target(&probe(Ipv4Addr::new(172, 26, 233, 4)), &pool));
        assert!(!is_reserved_target(&probe(Ipv4Addr::new(172, 26, 233, 5)), &pool));
        assert!(is_reserved_target(&probe(Ipv4Addr::new(172, 26, 233, 250)), &pool));
    }

    #[test]
    fn mac_round_trips_through_text() {
        let mac = MacAddr([0x02, 0, 0xac, 0x1a, 0xe9, 0x04]);
        assert_eq!(mac.to_string(), "02:00:ac:1a:e9:04");
        assert_eq!(mac.to_string().parse::<MacAddr>().unwrap(), mac);
        assert!("02:00".parse::<MacAddr>().is_err());
    }

    #[test]
    fn constructors_respect_port_and_length_invariants() {
        let a = Ipv4Addr::new(10, 0, 0, 1);
        let b = Ipv4Addr::new(10, 0, 0, 2);
        let icmp = Packet::icmp(1.0, a, b, vec![0; 10]);
        assert_eq!((icmp.src_port, icmp.dst_port), (0, 0));
        assert_eq!(icmp.length, 52);
        let tcp = Packet::tcp(1.0, (a, 1), (b, 2), tcp_flags::SYN, vec![]);
        assert_eq!(tcp.length, 54);
        assert!(tcp.payload.is_none());
    }
}
