use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use super::{ActionKind, Backend, BackendAction, BackendError, Handle, NewFile, Outcome, Started};
use crate::orchestrator::{HoneypotTemplate, InstanceId};
use crate::storage::{sha256_hex, BackupStore};

#[derive(Debug, Clone)]
struct SimInstance {
    instance: InstanceId,
    image_id: String,
    ip: Ipv4Addr,
    /// path -> (created_at, content)
    files: BTreeMap<String, (f64, Vec<u8>)>,
}

/// In-process backend with a fixed start latency and synthetic file systems.
/// Fully deterministic: handles are derived from a counter.
#[derive(Debug, Default)]
pub struct SimulatedBackend {
    latency: f64,
    running: BTreeMap<String, SimInstance>,
    addresses: BTreeSet<Ipv4Addr>,
    missing_images: BTreeSet<String>,
    failing_backups: BTreeSet<InstanceId>,
    next: u64,
    actions: Vec<BackendAction>,
}

impl SimulatedBackend {
    pub fn new(latency: f64) -> Self {
        SimulatedBackend { latency, ..Default::default() }
    }

    pub fn latency(&self) -> f64 {
        self.latency
    }

    /// Make `start` of this image fail with `ImageMissing`.
    pub fn remove_image(&mut self, image_id: &str) {
        self.missing_images.insert(image_id.to_string());
    }

    /// Make the backup of this instance fail.
    pub fn fail_backup_of(&mut self, id: InstanceId) {
        self.failing_backups.insert(id);
    }

    /// Write a file into a running instance, as an attacker would.
    pub fn plant_file(&mut self, handle: &Handle, path: &str, content: &[u8], ts: f64) -> Result<(), BackendError> {
        let inst =
            self.running.get_mut(&handle.token).ok_or_else(|| BackendError::StaleHandle(handle.token.clone()))?;
        inst.files.insert(path.to_string(), (ts, content.to_vec()));
        Ok(())
    }

    pub fn is_running(&self, handle: &Handle) -> bool {
        self.running.contains_key(&handle.token)
    }

    fn log(&mut self, kind: ActionKind, inst: &SimInstance, issued_at: f64, latency: f64, outcome: Outcome) {
        self.actions.push(BackendAction {
            kind,
            instance: inst.instance,
            image_id: inst.image_id.clone(),
            ip: inst.ip,
            issued_at,
            completed_at: issued_at + latency,
            outcome,
            latency,
        });
    }
}

impl Backend for SimulatedBackend {
    fn start(
        &mut self,
        id: InstanceId,
        template: &HoneypotTemplate,
        ip: Ipv4Addr,
        now: f64,
    ) -> Result<Started, BackendError> {
        let inst = SimInstance { instance: id, image_id: template.image_id.clone(), ip, files: BTreeMap::new() };
        let failure = if self.missing_images.contains(&template.image_id) {
            Some(BackendError::ImageMissing(template.image_id.clone()))
        } else if self.addresses.contains(&ip) {
            Some(BackendError::AddressInUse(ip))
        } else {
            None
        };
        if let Some(err) = failure {
            self.log(ActionKind::Start, &inst, now, 0.0, Outcome::Failed);
            return Err(err);
        }
        self.next += 1;
        let token = format!("sim-{:06}", self.next);
        self.log(ActionKind::Start, &inst, now, self.latency, Outcome::Ok);
        self.addresses.insert(ip);
        self.running.insert(token.clone(), inst);
        Ok(Started { handle: Handle { instance: id, token }, latency: self.latency })
    }

    fn stop_with_backup(&mut self, handle: &Handle, now: f64, store: &mut BackupStore) -> Result<String, BackendError> {
        let inst = self.running.remove(&handle.token).ok_or_else(|| BackendError::StaleHandle(handle.token.clone()))?;
        self.addresses.remove(&inst.ip);
        if self.failing_backups.contains(&inst.instance) {
            self.log(ActionKind::StopWithBackup, &inst, now, 0.0, Outcome::Failed);
            return Err(BackendError::BackupFailed("injected failure".into()));
        }
        let files: Vec<(String, Vec<u8>)> = inst.files.iter().map(|(p, (_, c))| (p.clone(), c.clone())).collect();
        match store.store(inst.instance, &inst.image_id, now, &files) {
            Ok(id) => {
                self.log(ActionKind::StopWithBackup, &inst, now, 0.0, Outcome::Ok);
                Ok(id)
            }
            Err(e) => {
                self.log(ActionKind::StopWithBackup, &inst, now, 0.0, Outcome::Failed);
                Err(BackendError::BackupFailed(e.to_string()))
            }
        }
    }

    fn list_new_files(&mut self, handle: &Handle, since: f64, now: f64) -> Result<Vec<NewFile>, BackendError> {
        let inst = self.running.get(&handle.token).ok_or_else(|| BackendError::StaleHandle(handle.token.clone()))?;
        let files: Vec<NewFile> = inst
            .files
            .iter()
            .filter(|(_, (created, _))| *created > since)
            .map(|(path, (_, content))| NewFile {
                path: path.clone(),
                sha256: sha256_hex(content),
                content: content.clone(),
            })
            .collect();
        let inst = inst.clone();
        self.log(ActionKind::ListNewFiles, &inst, now, 0.0, Outcome::Ok);
        Ok(files)
    }

    fn actions(&self) -> &[BackendAction] {
        &self.actions
    }

    fn as_simulated(&mut self) -> Option<&mut SimulatedBackend> {
        Some(self)
    }
}
