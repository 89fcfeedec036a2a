//! Ethernet/IPv4 frame encoding and decoding.

use std::net::Ipv4Addr;

use super::{MacAddr, Packet, Protocol};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETH_HEADER: usize = 14;
const IPV4_HEADER: usize = 20;

/// Why a frame did not produce a [`Packet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSkip {
    /// Not IPv4 (ARP, IPv6, ...).
    NotIpv4(u16),
    /// Headers run past the captured bytes.
    Truncated,
    /// IPv4 header failed basic validation.
    Malformed,
}

/// Decode the headers of one captured Ethernet frame.
///
/// `wire_len` is the original frame length; `data` may be shorter when the
/// capture used a snap length. Payload bytes beyond `data` are not recovered.
pub fn decode(ts: f64, data: &[u8], wire_len: u32) -> Result<Packet, FrameSkip> {
    if data.len() < ETH_HEADER {
        return Err(FrameSkip::Truncated);
    }
    let eth_dst = MacAddr(data[0..6].try_into().unwrap());
    let eth_src = MacAddr(data[6..12].try_into().unwrap());
    let mut ethertype = u16::from_be_bytes([data[12], data[13]]);
    let mut offset = ETH_HEADER;
    if ethertype == ETHERTYPE_VLAN {
        if data.len() < offset + 4 {
            return Err(FrameSkip::Truncated);
        }
        ethertype = u16::from_be_bytes([data[offset + 2], data[offset + 3]]);
        offset += 4;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Err(FrameSkip::NotIpv4(ethertype));
    }

    let ip = &data[offset..];
    if ip.len() < IPV4_HEADER {
        return Err(FrameSkip::Truncated);
    }
    if ip[0] >> 4 != 4 {
        return Err(FrameSkip::Malformed);
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    let total_len = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    if ihl < IPV4_HEADER || total_len < ihl {
        return Err(FrameSkip::Malformed);
    }
    if ip.len() < ihl {
        return Err(FrameSkip::Truncated);
    }
    let proto = Protocol::from_code(ip[9]);
    let ip_src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let ip_dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    // Ethernet padding is excluded by honouring the IPv4 total length.
    let l4 = &ip[ihl..ip.len().min(total_len)];

    let (src_port, dst_port, tcp_flags, payload) = match proto {
        Protocol::Tcp => {
            if l4.len() < 20 {
                return Err(FrameSkip::Truncated);
            }
            let data_off = usize::from(l4[12] >> 4) * 4;
            if data_off < 20 {
                return Err(FrameSkip::Malformed);
            }
            let payload = l4.get(data_off..).unwrap_or(&[]);
            (u16::from_be_bytes([l4[0], l4[1]]), u16::from_be_bytes([l4[2], l4[3]]), l4[13], payload)
        }
        Protocol::Udp => {
            if l4.len() < 8 {
                return Err(FrameSkip::Truncated);
            }
            (u16::from_be_bytes([l4[0], l4[1]]), u16::from_be_bytes([l4[2], l4[3]]), 0, &l4[8..])
        }
        Protocol::Icmp => {
            if l4.len() < 8 {
                return Err(FrameSkip::Truncated);
            }
            (0, 0, 0, &l4[8..])
        }
        Protocol::Other => (0, 0, 0, l4),
    };

    Ok(Packet {
        ts,
        eth_src,
        eth_dst,
        ip_src,
        ip_dst,
        proto,
        src_port,
        dst_port,
        length: wire_len,
        tcp_flags,
        payload: if payload.is_empty() { None } else { Some(payload.to_vec()) },
    })
}

fn checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut carry: Option<u8> = None;
    for chunk in chunks {
        for &b in *chunk {
            match carry.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => carry = Some(b),
            }
        }
    }
    if let Some(hi) = carry {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Encode a packet as a minimal Ethernet/IPv4 frame with valid checksums.
///
/// The result is `length` bytes long for packets built by the [`Packet`]
/// constructors; decoded packets whose original frame carried options or
/// padding re-encode to fewer bytes than `length`.
pub fn encode(p: &Packet) -> Vec<u8> {
    let payload = p.payload_bytes();
    let mut l4 = Vec::with_capacity(20 + payload.len());
    match p.proto {
        Protocol::Tcp => {
            l4.extend_from_slice(&p.src_port.to_be_bytes());
            l4.extend_from_slice(&p.dst_port.to_be_bytes());
            l4.extend_from_slice(&[0; 8]); // seq, ack
            l4.push(5 << 4);
            l4.push(p.tcp_flags);
            l4.extend_from_slice(&0xffffu16.to_be_bytes());
            l4.extend_from_slice(&[0; 4]); // checksum, urgent
            l4.extend_from_slice(payload);
        }
        Protocol::Udp => {
            l4.extend_from_slice(&p.src_port.to_be_bytes());
            l4.extend_from_slice(&p.dst_port.to_be_bytes());
            l4.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
            l4.extend_from_slice(&[0; 2]);
            l4.extend_from_slice(payload);
        }
        Protocol::Icmp => {
            l4.extend_from_slice(&[8, 0, 0, 0, 0, 0, 0, 0]);
            l4.extend_from_slice(payload);
            let c = checksum(&[&l4]);
            l4[2..4].copy_from_slice(&c.to_be_bytes());
        }
        Protocol::Other => l4.extend_from_slice(payload),
    }
    if p.proto.has_ports() {
        let mut pseudo = Vec::with_capacity(12);
        pseudo.extend_from_slice(&p.ip_src.octets());
        pseudo.extend_from_slice(&p.ip_dst.octets());
        pseudo.push(0);
        pseudo.push(p.proto.code());
        pseudo.extend_from_slice(&(l4.len() as u16).to_be_bytes());
        let c = checksum(&[&pseudo, &l4]);
        let at = if p.proto == Protocol::Tcp { 16 } else { 6 };
        l4[at..at + 2].copy_from_slice(&c.to_be_bytes());
    }

    let mut ip = Vec::with_capacity(IPV4_HEADER);
    ip.push(0x45);
    ip.push(0);
    ip.extend_from_slice(&((IPV4_HEADER + l4.len()) as u16).to_be_bytes());
    ip.extend_from_slice(&[0, 0, 0x40, 0]); // id, DF
    ip.push(64);
    ip.push(if p.proto == Protocol::Other { 253 } else { p.proto.code() });
    ip.extend_from_slice(&[0, 0]);
    ip.extend_from_slice(&p.ip_src.octets());
    ip.extend_from_slice(&p.ip_dst.octets());
    let c = checksum(&[&ip]);
    ip[10..12].copy_from_slice(&c.to_be_bytes());

    let mut frame = Vec::with_capacity(ETH_HEADER + ip.len() + l4.len());
    frame.extend_from_slice(&p.eth_dst.0);
    frame.extend_from_slice(&p.eth_src.0);
    frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    frame.extend_from_slice(&ip);
    frame.extend_from_slice(&l4);
    frame
}
