use std::collections::{BTreeMap, BTreeSet};
use std::net::{Ipv4Addr, SocketAddr, TcpStream};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ActionKind, Backend, BackendAction, BackendError, Handle, NewFile, Outcome, Started};
use crate::orchestrator::{HoneypotTemplate, InstanceId};
use crate::storage::{sha256_hex, BackupStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecConfig {
    /// Container runtime binary, e.g. `docker` or `podman`.
    pub runtime: PathBuf,
    /// Prefix joined to image ids, e.g. `registry.local:5000`. Empty for none.
    #[serde(default)]
    pub registry: String,
    /// Network the decoys are attached to with their reserved addresses.
    pub network: String,
    #[serde(default = "default_readiness_timeout")]
    pub readiness_timeout: f64,
}

fn default_readiness_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone)]
struct Container {
    instance: InstanceId,
    image: String,
    ip: Ipv4Addr,
    reported: BTreeSet<String>,
}

/// Drives an external container runtime through its command-line interface.
/// Every command line is logged before it runs. Timestamps passed in are
/// engine time; latencies are measured on the wall clock.
#[derive(Debug)]
pub struct ExecBackend {
    config: ExecConfig,
    containers: BTreeMap<String, Container>,
    actions: Vec<BackendAction>,
    commands: Vec<String>,
}

impl ExecBackend {
    pub fn new(config: ExecConfig) -> Self {
        ExecBackend { config, containers: BTreeMap::new(), actions: Vec::new(), commands: Vec::new() }
    }

    /// Every command line issued so far.
    pub fn commands(&self) -> &[String] {
        &self.commands
    }

    fn image_ref(&self, image_id: &str) -> String {
        if self.config.registry.is_empty() {
            image_id.to_string()
        } else {
            format!("{}/{}", self.config.registry.trim_end_matches('/'), image_id)
        }
    }

    fn run(&mut self, args: &[&str]) -> Result<std::process::Output, BackendError> {
        let line = std::iter::once(self.config.runtime.display().to_string())
            .chain(args.iter().map(|a| a.to_string()))
            .collect::<Vec<_>>()
            .join(" ");
        log::info!("exec: {line}");
        self.commands.push(line.clone());
        Command::new(&self.config.runtime)
            .args(args)
            .output()
            .map_err(|e| BackendError::Command(format!("{line}: {e}")))
    }

    fn run_ok(&mut self, args: &[&str]) -> Result<String, BackendError> {
        let out = self.run(args)?;
        if !out.status.success() {
            return Err(BackendError::Command(format!(
                "{} exited with {}: {}",
                args.first().unwrap_or(&""),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    fn wait_ready(&self, ip: Ipv4Addr, port: u16) -> Result<(), BackendError> {
        let timeout = Duration::from_secs_f64(self.config.readiness_timeout);
        let deadline = Instant::now() + timeout;
        let addr = SocketAddr::from((ip, port));
        while Instant::now() < deadline {
            if TcpStream::connect_timeout(&addr, Duration::from_millis(500)).is_ok() {
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(250));
        }
        Err(BackendError::ReadinessTimeout { port, timeout: self.config.readiness_timeout })
    }

    fn record(&mut self, kind: ActionKind, c: &Container, issued_at: f64, latency: f64, outcome: Outcome) {
        self.actions.push(BackendAction {
            kind,
            instance: c.instance,
            image_id: c.image.clone(),
            ip: c.ip,
            issued_at,
            completed_at: issued_at + latency,
            outcome,
            latency,
        });
    }

    /// Paths added to the container's filesystem, from `diff` output.
    fn added_paths(&mut self, token: &str) -> Result<Vec<String>, BackendError> {
        let out = self.run_ok(&["diff", token])?;
        let mut paths: Vec<String> =
            out.lines().filter_map(|l| l.strip_prefix("A ")).map(|p| p.trim().to_string()).collect();
        paths.sort();
        Ok(paths)
    }

    fn read_file(&mut self, token: &str, path: &str) -> Result<Option<Vec<u8>>, BackendError> {
        let out = self.run(&["exec", token, "cat", path])?;
        // Directories and unreadable entries are skipped.
        Ok(out.status.success().then_some(out.stdout))
    }
}

impl Backend for ExecBackend {
    fn start(
        &mut self,
        id: InstanceId,
        template: &HoneypotTemplate,
        ip: Ipv4Addr,
        now: f64,
    ) -> Result<Started, BackendError> {
        let image = self.image_ref(&template.image_id);
        let pending = Container { instance: id, image: image.clone(), ip, reported: BTreeSet::new() };
        let began = Instant::now();
        let result = (|| {
            if self.containers.values().any(|c| c.ip == ip) {
                return Err(BackendError::AddressInUse(ip));
            }
            let inspected = self.run(&["image", "inspect", &image])?;
            if !inspected.status.success() {
                return Err(BackendError::ImageMissing(image.clone()));
            }
            let name = format!("soar-{id}");
            let ip_s = ip.to_string();
            let network = self.config.network.clone();
            let token = self.run_ok(&["run", "-d", "--name", &name, "--network", &network, "--ip", &ip_s, &image])?;
            if let Err(e) = self.wait_ready(ip, template.port) {
                let _ = self.run(&["rm", "-f", &token]);
                return Err(e);
            }
            Ok(token)
        })();
        let latency = began.elapsed().as_secs_f64();
        match result {
            Ok(token) => {
                self.record(ActionKind::Start, &pending, now, latency, Outcome::Ok);
                self.containers.insert(token.clone(), pending);
                Ok(Started { handle: Handle { instance: id, token }, latency })
            }
            Err(e) => {
                self.record(ActionKind::Start, &pending, now, latency, Outcome::Failed);
                Err(e)
            }
        }
    }

    fn stop_with_backup(&mut self, handle: &Handle, now: f64, store: &mut BackupStore) -> Result<String, BackendError> {
        let c = self.containers.remove(&handle.token).ok_or_else(|| BackendError::StaleHandle(handle.token.clone()))?;
        let began = Instant::now();
        let snapshot = (|| {
            let mut files = Vec::new();
            for path in self.added_paths(&handle.token)? {
                if let Some(body) = self.read_file(&handle.token, &path)? {
                    files.push((path, body));
                }
            }
            Ok::<_, BackendError>(files)
        })();
        let removed = self.run_ok(&["rm", "-f", &handle.token]);
        let latency = began.elapsed().as_secs_f64();
        let result = match snapshot {
            Ok(files) => {
                store.store(c.instance, &c.image, now, &files).map_err(|e| BackendError::BackupFailed(e.to_string()))
            }
            Err(e) => Err(BackendError::BackupFailed(e.to_string())),
        };
        if let Err(e) = removed {
            log::warn!("removing {} failed: {e}", handle.token);
        }
        let outcome = if result.is_ok() { Outcome::Ok } else { Outcome::Failed };
        self.record(ActionKind::StopWithBackup, &c, now, latency, outcome);
        result
    }

    /// The runtime has no creation times, so "new" means not returned by an
    /// earlier call; `since` is ignored.
    fn list_new_files(&mut self, handle: &Handle, _since: f64, now: f64) -> Result<Vec<NewFile>, BackendError> {
        let mut c = self
            .containers
            .get(&handle.token)
            .cloned()
            .ok_or_else(|| BackendError::StaleHandle(handle.token.clone()))?;
        let began = Instant::now();
        let mut out = Vec::new();
        for path in self.added_paths(&handle.token)? {
            if c.reported.contains(&path) {
                continue;
            }
            if let Some(content) = self.read_file(&handle.token, &path)? {
                c.reported.insert(path.clone());
                out.push(NewFile { path, sha256: sha256_hex(&content), content });
            }
        }
        self.record(ActionKind::ListNewFiles, &c, now, began.elapsed().as_secs_f64(), Outcome::Ok);
        self.containers.insert(handle.token.clone(), c);
        Ok(out)
    }

    fn probe(&mut self) -> Result<(), BackendError> {
        self.run_ok(&["version"]).map(drop).map_err(|e| match e {
            BackendError::Command(m) => BackendError::Unavailable(m),
            e => e,
        })
    }

    fn actions(&self) -> &[BackendAction] {
        &self.actions
    }
}
