//! Deployment backends that carry out start and reap decisions.

mod exec;
mod simulated;

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{HoneypotTemplate, InstanceId};
use crate::storage::{BackupStore, StorageError};

pub use exec::{ExecBackend, ExecConfig};
pub use simulated::SimulatedBackend;

/// Opaque reference to a running instance on a backend.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Handle {
    pub instance: InstanceId,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Started {
    pub handle: Handle,
    /// Seconds from the start request until the instance is reachable.
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewFile {
    pub path: String,
    pub content: Vec<u8>,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Start,
    StopWithBackup,
    ListNewFiles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendAction {
    pub kind: ActionKind,
    pub instance: InstanceId,
    pub image_id: String,
    pub ip: Ipv4Addr,
    pub issued_at: f64,
    pub completed_at: f64,
    pub outcome: Outcome,
    pub latency: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("image {0} is not available")]
    ImageMissing(String),
    #[error("address {0} is already in use")]
    AddressInUse(Ipv4Addr),
    #[error("instance not reachable on port {port} within {timeout}s")]
    ReadinessTimeout { port: u16, timeout: f64 },
    #[error("handle {0} does not refer to a running instance")]
    StaleHandle(String),
    #[error("backup failed (instance destroyed): {0}")]
    BackupFailed(String),
    #[error("runtime command failed: {0}")]
    Command(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

pub trait Backend {
    fn start(
        &mut self,
        id: InstanceId,
        template: &HoneypotTemplate,
        ip: Ipv4Addr,
        now: f64,
    ) -> Result<Started, BackendError>;

    /// Snapshot the instance's new files into `store`, then destroy it. The
    /// instance is gone afterwards even when the backup fails.
    fn stop_with_backup(&mut self, handle: &Handle, now: f64, store: &mut BackupStore) -> Result<String, BackendError>;

    /// Files created after `since`, ordered by path.
    fn list_new_files(&mut self, handle: &Handle, since: f64, now: f64) -> Result<Vec<NewFile>, BackendError>;

    fn actions(&self) -> &[BackendAction];

    /// Check that the backend can act at all before any traffic arrives.
    fn probe(&mut self) -> Result<(), BackendError> {
        Ok(())
    }

    /// Access to simulation-only hooks.
    fn as_simulated(&mut self) -> Option<&mut SimulatedBackend> {
        None
    }
}
