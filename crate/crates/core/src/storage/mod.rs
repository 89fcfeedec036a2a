//! Event log, malware vault, instance backups and the engagement and uptime
//! analyses computed from them.

mod backup;
mod engagement;
mod eventlog;
mod uptime;
mod vault;

use thiserror::Error;

pub use backup::{Backup, BackupFile, BackupStore};
pub use engagement::{compute_engagements, mean_duration, EngagementRecord, PacketRef, DEFAULT_SESSION_GAP};
pub use eventlog::{read_jsonl, replay, EventLog};
pub use uptime::{cpu_saving_report, CpuSavingReport, TemplateUptime, UptimeLedger};
pub use vault::{sha256_hex, BlobStore, MalwareSample, SampleMeta, Vault};

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("refusing to store an empty file")]
    EmptyFile,
    #[error("corrupt record at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
