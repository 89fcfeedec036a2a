//! Classic capture-file container (microsecond timestamps, Ethernet link type).
//!
//! Both byte orders of the 0xA1B2C3D4 magic are accepted. Frames that are not
//! IPv4, or whose record is cut short by the end of the file, are counted and
//! skipped; parsing never aborts after a valid global header.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::frame::{self, FrameSkip};
use super::Packet;

const MAGIC: u32 = 0xa1b2_c3d4;
const LINKTYPE_ETHERNET: u32 = 1;
const GLOBAL_HEADER: usize = 24;
const RECORD_HEADER: usize = 16;
const SNAPLEN: u32 = 65_535;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("unrecognized capture magic {0:#010x}")]
    UnrecognizedMagic(u32),
    #[error("unsupported link type {0}; only Ethernet (1) is accepted")]
    UnsupportedLinkType(u32),
    #[error("capture shorter than its global header")]
    TruncatedHeader,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Result of parsing one capture file.
#[derive(Debug, Clone, Default)]
pub struct Capture {
    /// Accepted packets in file order, timestamps relative to `epoch_us`.
    pub packets: Vec<Packet>,
    /// Absolute timestamp (microseconds) of the first accepted packet.
    pub epoch_us: i64,
    /// Records that were well-formed frames but not IPv4 (ARP, IPv6, ...).
    pub skipped_non_ipv4: usize,
    /// Records cut short by end-of-file or with headers beyond the captured bytes.
    pub truncated: usize,
    /// Records with a malformed IPv4 header.
    pub malformed: usize,
}

impl Capture {
    pub fn skipped(&self) -> usize {
        self.skipped_non_ipv4 + self.truncated + self.malformed
    }

    pub fn total_records(&self) -> usize {
        self.packets.len() + self.skipped()
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let arr: [u8; 4] = b[..4].try_into().unwrap();
        match self {
            Endian::Little => u32::from_le_bytes(arr),
            Endian::Big => u32::from_be_bytes(arr),
        }
    }
}

/// Parse a capture file from any byte source.
pub fn parse_capture<R: Read>(mut source: R) -> Result<Capture, CaptureError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(CaptureError::TruncatedHeader);
    }
    let endian = match (
        u32::from_le_bytes(bytes[..4].try_into().unwrap()),
        u32::from_be_bytes(bytes[..4].try_into().unwrap()),
    ) {
        (MAGIC, _) => Endian::Little,
        (_, MAGIC) => Endian::Big,
        (le, _) => return Err(CaptureError::UnrecognizedMagic(le)),
    };
    if bytes.len() < GLOBAL_HEADER {
        return Err(CaptureError::TruncatedHeader);
    }
    let link = endian.u32(&bytes[20..24]);
    if link != LINKTYPE_ETHERNET {
        return Err(CaptureError::UnsupportedLinkType(link));
    }

    let mut out = Capture::default();
    let mut epoch: Option<i64> = None;
    let mut pos = GLOBAL_HEADER;
    while pos < bytes.len() {
        if bytes.len() - pos < RECORD_HEADER {
            out.truncated += 1;
            break;
        }
        let hdr = &bytes[pos..pos + RECORD_HEADER];
        let sec = i64::from(endian.u32(&hdr[0..4]));
        let usec = i64::from(endian.u32(&hdr[4..8]));
        let caplen = endian.u32(&hdr[8..12]) as usize;
        let wire_len = endian.u32(&hdr[12..16]);
        pos += RECORD_HEADER;
        if bytes.len() - pos < caplen {
            out.truncated += 1;
            break;
        }
        let data = &bytes[pos..pos + caplen];
        pos += caplen;

        let abs_us = sec * 1_000_000 + usec;
        let rel_us = abs_us - epoch.unwrap_or(abs_us);
        match frame::decode(rel_us as f64 / 1e6, data, wire_len.max(caplen as u32)) {
            Ok(p) => {
                epoch.get_or_insert(abs_us);
                out.packets.push(p);
            }
            Err(FrameSkip::NotIpv4(_)) => out.skipped_non_ipv4 += 1,
            Err(FrameSkip::Truncated) => out.truncated += 1,
            Err(FrameSkip::Malformed) => out.malformed += 1,
        }
    }
    out.epoch_us = epoch.unwrap_or(0);
    Ok(out)
}

/// Write packets as a little-endian capture file. Each packet's `ts` is
/// rounded to the microsecond and offset by `epoch_us`.
pub fn write_capture<W: Write>(mut sink: W, packets: &[Packet], epoch_us: i64) -> io::Result<()> {
    let mut header = Vec::with_capacity(GLOBAL_HEADER);
    header.extend_from_slice(&MAGIC.to_le_bytes());
    header.extend_from_slice(&2u16.to_le_bytes());
    header.extend_from_slice(&4u16.to_le_bytes());
    header.extend_from_slice(&0i32.to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    header.extend_from_slice(&SNAPLEN.to_le_bytes());
    header.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    sink.write_all(&header)?;

    for p in packets {
        let abs_us = epoch_us + (p.ts * 1e6).round() as i64;
        let frame = frame::encode(p);
        let mut rec = Vec::with_capacity(RECORD_HEADER);
        rec.extend_from_slice(&(abs_us.div_euclid(1_000_000) as u32).to_le_bytes());
        rec.extend_from_slice(&(abs_us.rem_euclid(1_000_000) as u32).to_le_bytes());
        rec.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        rec.extend_from_slice(&p.length.max(frame.len() as u32).to_le_bytes());
        sink.write_all(&rec)?;
        sink.write_all(&frame)?;
    }
    sink.flush()
}
