//! `soar run`: feed a capture file through the engine.

use std::fs::{self, File};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Args;
use soar_core::engine::Engine;
use soar_core::orchestrator::{EventKind, Mode};
use soar_core::packet::parse_capture;
use soar_core::storage::{BackupStore, EventLog, Vault};

use crate::learn::load_detectors;
use crate::{load_config, CliError, CmdResult, Switch};

#[derive(Args)]
pub struct RunArgs {
    /// Engine configuration (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Capture file to replay (pcap, Ethernet link type).
    #[arg(long)]
    capture: PathBuf,
    /// Event log path; overrides the config.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Malware vault directory; overrides the config.
    #[arg(long)]
    vault: Option<PathBuf>,
    /// Backup directory; overrides the config.
    #[arg(long)]
    backups: Option<PathBuf>,
    /// Keep one decoy per template up for the whole run.
    #[arg(long = "static")]
    fixed: bool,
    #[arg(long, value_enum)]
    deploy_ahead: Option<Switch>,
    /// Use the built-in reference models for detectors without a model file.
    #[arg(long)]
    reference_detectors: bool,
}

pub fn run(a: RunArgs) -> CmdResult {
    let mut config = load_config(a.config.as_ref())?;
    if let Some(p) = a.log {
        config.output.log = p;
    }
    if let Some(p) = a.vault {
        config.output.vault = p;
    }
    if let Some(p) = a.backups {
        config.output.backups = p;
    }
    if a.fixed {
        config.mode = Mode::Static;
    }
    if let Some(s) = a.deploy_ahead {
        config.deploy_ahead = s.enabled();
    }
    let detectors = load_detectors(&config, a.reference_detectors)?;
    let pool = config.pool.build().map_err(|e| CliError::config("pool", e))?;
    let catalog = config.catalog().map_err(|e| CliError::config("catalog", e))?;

    let file = File::open(&a.capture).map_err(|e| CliError::runtime(a.capture.display(), e))?;
    let capture = parse_capture(file).map_err(|e| CliError::runtime(a.capture.display(), e))?;
    if capture.skipped_non_ipv4 + capture.truncated + capture.malformed > 0 {
        log::warn!(
            "skipped {} non-IPv4, {} truncated and {} malformed records",
            capture.skipped_non_ipv4,
            capture.truncated,
            capture.malformed
        );
    }

    let out = &config.output;
    if let Some(dir) = out.log.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(dir.display(), e))?;
    }
    let log = EventLog::with_file(&out.log).map_err(|e| CliError::runtime(out.log.display(), e))?;
    let vault = Vault::open(&out.vault).map_err(|e| CliError::runtime(out.vault.display(), e))?;
    let backups = BackupStore::open(&out.backups).map_err(|e| CliError::runtime(out.backups.display(), e))?;
    let mut backend = config.backend.build();
    backend.probe().map_err(|e| CliError::runtime("backend", e))?;
    let mut engine = Engine::new(pool, catalog, config.settings(), backend, detectors, log, vault, backups)
        .map_err(|e| CliError::config("detectors", e))?;

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        if let Err(e) = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)) {
            log::warn!("no interrupt handler: {e}");
        }
    }

    let start = capture.packets.first().map_or(0.0, |p| p.ts);
    engine.start(start).map_err(|e| CliError::runtime("start", e))?;
    let mut end = start;
    for p in &capture.packets {
        if stop.load(Ordering::SeqCst) {
            log::warn!("interrupted at t={end:.3}; draining");
            break;
        }
        engine.on_packet(p).map_err(|e| CliError::runtime(format!("packet at t={:.6}", p.ts), e))?;
        end = p.ts;
    }
    // Pending timers at the last packet time still fire before exit.
    engine.finish(end).map_err(|e| CliError::runtime("finish", e))?;

    let counts = engine.counts_by_kind();
    let n = |k: EventKind| counts.get(&k).copied().unwrap_or(0);
    let stats = engine.stats();
    out!("packets       {} ({} to reserved addresses)", stats.packets, stats.reserved_packets);
    out!("deployments   {}", n(EventKind::Deploy));
    out!("reaps         {}", n(EventKind::Reap));
    out!("live decoys   {}", engine.live_instances().count());
    out!("http requests {}", stats.http_requests);
    out!("ddos packets  {}", stats.ddos_packets);
    out!("botnet flows  {} of {}", stats.botnet_flows, stats.flows);
    out!("samples       {}", stats.samples);
    out!("events        {} -> {}", engine.log().len(), out.log.display());
    Ok(())
}
