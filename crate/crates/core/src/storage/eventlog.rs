use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::StorageError;
use crate::orchestrator::{Catalog, EventDetail, HoneypotInstance, InstanceId, InstanceState, OrchestratorEvent};

/// Append-only engine log. Sequence numbers start at 1 and are assigned on
/// append; an optional file sink receives one JSON object per line.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<OrchestratorEvent>,
    sink: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Log that also appends to `path` (created if missing).
    pub fn with_file(path: &Path) -> Result<Self, StorageError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog { events: Vec::new(), sink: Some(BufWriter::new(file)) })
    }

    pub fn append(&mut self, mut ev: OrchestratorEvent) -> Result<&OrchestratorEvent, StorageError> {
        ev.seq = self.events.len() as u64 + 1;
        if let Some(sink) = &mut self.sink {
            serde_json::to_writer(&mut *sink, &ev)?;
            sink.write_all(b"\n")?;
        }
        self.events.push(ev);
        Ok(self.events.last().expect("just pushed"))
    }

    pub fn flush(&mut self) -> Result<(), StorageError> {
        if let Some(sink) = &mut self.sink {
            sink.flush()?;
        }
        Ok(())
    }

    pub fn events(&self) -> &[OrchestratorEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> Result<(), StorageError> {
        for ev in &self.events {
            serde_json::to_writer(&mut sink, ev)?;
            sink.write_all(b"\n")?;
        }
        sink.flush()?;
        Ok(())
    }
}

/// Parse a JSON-lines log. Blank lines are ignored.
pub fn read_jsonl<R: Read>(source: R) -> Result<Vec<OrchestratorEvent>, StorageError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev =
            serde_json::from_str(&line).map_err(|e| StorageError::Corrupt { line: n + 1, reason: e.to_string() })?;
        out.push(ev);
    }
    Ok(out)
}

/// Rebuild instance records from a log. Ports come from the catalog.
pub fn replay(
    events: &[OrchestratorEvent],
    catalog: &Catalog,
) -> Result<BTreeMap<InstanceId, HoneypotInstance>, StorageError> {
    let mut out: BTreeMap<InstanceId, HoneypotInstance> = BTreeMap::new();
    for ev in events {
        let Some(id) = ev.instance else { continue };
        let corrupt = |reason: &str| StorageError::Corrupt { line: ev.seq as usize, reason: reason.to_string() };
        if let EventDetail::Deploy { .. } = ev.detail {
            let service = ev.service.ok_or_else(|| corrupt("deploy without service"))?;
            let ip = ev.ip.ok_or_else(|| corrupt("deploy without ip"))?;
            let port = catalog.get(service).ok_or_else(|| corrupt("service not in catalog"))?.port;
            out.insert(
                id,
                HoneypotInstance {
                    id,
                    service,
                    port,
                    ip,
                    state: InstanceState::Deploying,
                    deployed_at: ev.ts,
                    ready_at: None,
                    last_activity: ev.ts,
                    reaped_at: None,
                    backup_id: None,
                },
            );
            continue;
        }
        let inst = out.get_mut(&id).ok_or_else(|| corrupt("event for unknown instance"))?;
        match &ev.detail {
            EventDetail::Ready { .. } => {
                inst.state = InstanceState::Active;
                inst.ready_at = Some(ev.ts);
            }
            EventDetail::Touch { .. } => inst.last_activity = inst.last_activity.max(ev.ts),
            EventDetail::Reap { backup_id, .. } => {
                inst.state = InstanceState::Reaped;
                inst.reaped_at = Some(ev.ts);
                inst.backup_id = backup_id.clone();
            }
            EventDetail::DeployFailed { .. } => {
                inst.state = InstanceState::Reaped;
                inst.reaped_at = Some(ev.ts);
            }
            _ => {}
        }
    }
    Ok(out)
}
