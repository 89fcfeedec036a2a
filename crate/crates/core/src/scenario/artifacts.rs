//! Reading a run directory back. The report is rebuilt from the event log
//! and the capture alone, so it can be checked against the stored copy.

use std::fs;
use std::path::Path;

use super::report::{build_report, ScenarioReport};
use super::sim::{RunMeta, CAPTURE_EPOCH_US};
use super::ScenarioError;
use crate::config::{ConfigError, EngineConfig};
use crate::orchestrator::OrchestratorEvent;
use crate::packet::{parse_capture, Packet};
use crate::storage::{read_jsonl, PacketRef, StorageError};

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub meta: RunMeta,
    pub events: Vec<OrchestratorEvent>,
    /// Timestamps are on the run clock, not relative to the first packet.
    pub packets: Vec<Packet>,
}

impl RunArtifacts {
    /// Load `run.json`, `events.jsonl` and `capture.pcap` from `dir`.
    pub fn read(dir: &Path) -> Result<Self, ScenarioError> {
        let meta_text = fs::read_to_string(dir.join("run.json"))?;
        let meta: RunMeta = serde_json::from_str(&meta_text).map_err(StorageError::from)?;
        let events = read_jsonl(fs::File::open(dir.join("events.jsonl"))?)?;
        let bytes = fs::read(dir.join("capture.pcap"))?;
        let cap = parse_capture(bytes.as_slice())?;
        let shift_us = cap.epoch_us - CAPTURE_EPOCH_US;
        let packets = cap
            .packets
            .into_iter()
            .map(|mut p| {
                // Same integer-microsecond arithmetic as the simulator clock.
                p.ts = ((p.ts * 1e6).round() as i64 + shift_us) as f64 / 1e6;
                p
            })
            .collect();
        Ok(RunArtifacts { meta, events, packets })
    }

    /// Rebuild the report under `config`'s pool and catalog.
    pub fn report(&self, config: &EngineConfig) -> Result<ScenarioReport, ScenarioError> {
        let pool = config.pool.build().map_err(ConfigError::from)?;
        let catalog = config.catalog().map_err(ConfigError::from)?;
        let refs: Vec<PacketRef> = self.packets.iter().filter(|p| pool.contains(p.ip_dst)).map(PacketRef::of).collect();
        build_report(&self.meta, &self.events, &refs, &catalog)
    }
}
