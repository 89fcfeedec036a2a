use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::ServiceKind;
use crate::http_ids::AttackLabel;

/// Instance identifier, rendered as `hp-0001`. Ordering is numeric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId(pub u32);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "hp-{:04}", self.0)
    }
}

impl std::str::FromStr for InstanceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("hp-")
            .and_then(|n| n.parse().ok())
            .map(InstanceId)
            .ok_or_else(|| format!("invalid instance id `{s}`"))
    }
}

impl Serialize for InstanceId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InstanceId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Deploy,
    /// Backend reported the instance reachable (DEPLOYING -> ACTIVE).
    Ready,
    Touch,
    Reap,
    AlertFollowup,
    Notify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeployCause {
    Probe { src: Ipv4Addr, port: u16 },
    Alert { label: AttackLabel },
    Static,
}

/// Structured payload of an event. The variant determines the [`EventKind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventDetail {
    Deploy {
        cause: DeployCause,
        /// Placed ahead of the scanner rather than at the probed address.
        ahead: bool,
    },
    Ready {
        latency: f64,
    },
    Touch {
        src: Ipv4Addr,
        port: u16,
    },
    Reap {
        idle_for: f64,
        backup_id: Option<String>,
        backup_error: Option<String>,
    },
    AlertFollowup {
        label: AttackLabel,
        src: Ipv4Addr,
    },
    UnknownPortProbe {
        src: Ipv4Addr,
        port: u16,
    },
    PoolExhausted {
        service: ServiceKind,
    },
    DeployFailed {
        error: String,
    },
    HttpAttack {
        label: AttackLabel,
        src: Ipv4Addr,
    },
    Ddos {
        src: Ipv4Addr,
        dst: Ipv4Addr,
    },
    Botnet {
        src: Ipv4Addr,
        dst: Ipv4Addr,
        src_port: u16,
        dst_port: u16,
        window_id: u64,
    },
    MalwareSample {
        sha256: String,
        path: String,
        size: u64,
    },
}

impl EventDetail {
    pub fn kind(&self) -> EventKind {
        match self {
            EventDetail::Deploy { .. } => EventKind::Deploy,
            EventDetail::Ready { .. } => EventKind::Ready,
            EventDetail::Touch { .. } => EventKind::Touch,
            EventDetail::Reap { .. } => EventKind::Reap,
            EventDetail::AlertFollowup { .. } => EventKind::AlertFollowup,
            _ => EventKind::Notify,
        }
    }
}

/// One entry of the append-only engine log.
///
/// `seq` is assigned when the event is appended; the log is totally ordered by
/// `(ts, seq)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorEvent {
    pub seq: u64,
    pub ts: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<Ipv4Addr>,
    pub detail: EventDetail,
}

impl OrchestratorEvent {
    pub fn new(ts: f64, detail: EventDetail) -> Self {
        OrchestratorEvent { seq: 0, ts, kind: detail.kind(), instance: None, service: None, ip: None, detail }
    }

    pub fn for_instance(
        ts: f64,
        instance: InstanceId,
        service: ServiceKind,
        ip: Ipv4Addr,
        detail: EventDetail,
    ) -> Self {
        OrchestratorEvent { instance: Some(instance), service: Some(service), ip: Some(ip), ..Self::new(ts, detail) }
    }

    pub fn at_ip(mut self, ip: Ipv4Addr) -> Self {
        self.ip = Some(ip);
        self
    }
}
