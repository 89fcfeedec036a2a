//! `soar simulate` and `soar report`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use soar_core::config::BackendConfig;
use soar_core::orchestrator::Mode;
use soar_core::scenario::{
    bundled, run_scenario, top_engagement_table, RaceOutcome, RunArtifacts, ScenarioOptions, ScenarioReport,
    ScenarioScript, BUNDLED,
};
use soar_core::storage::EngagementRecord;

use crate::learn::load_detectors;
use crate::{load_config, CliError, CmdResult, Switch};

#[derive(Args)]
pub struct SimulateArgs {
    /// Bundled scenario name or path to a script file.
    script: String,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Override the script's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "static")]
    fixed: bool,
    #[arg(long, value_enum)]
    deploy_ahead: Option<Switch>,
    /// Decoy start latency in seconds.
    #[arg(long)]
    latency: Option<f64>,
    /// Engine configuration; model files named there replace the reference
    /// detectors.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run dynamic and static placement; artifacts go to `<out>/dynamic`
    /// and `<out>/static`.
    #[arg(long, conflicts_with = "fixed")]
    compare: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run directory written by `simulate`.
    #[arg(long)]
    run: PathBuf,
    /// Second run shown in the right-hand columns of the engagement table.
    #[arg(long)]
    against: Option<PathBuf>,
    /// Rows in the engagement table.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Configuration the runs were made with (pool and catalog).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the rebuilt report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn load_script(name: &str) -> Result<ScenarioScript, CliError> {
    if let Some(s) = bundled(name) {
        return s.map_err(|e| CliError::config(name, e));
    }
    let path = Path::new(name);
    if !path.exists() {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(CliError::Config(format!(
            "`{name}` is neither a bundled scenario ({}) nor a file",
            names.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::runtime(path.display(), e))?;
    text.parse().map_err(|e| CliError::config(path.display(), e))
}

fn summarize(dir: &Path, r: &ScenarioReport) {
    let m = &r.meta;
    let mode = match m.mode {
        Mode::Dynamic => "dynamic",
        Mode::Static => "static",
    };
    out!("{} seed={} mode={mode} -> {}", m.scenario, m.seed, dir.display());
    for (svc, d) in &r.deployments {
        out!("  deploy {svc:<10} bursts={} instances={} reaps={}", d.bursts, d.instances, d.reaps);
    }
    let won = r.races.iter().filter(|x| x.outcome == RaceOutcome::Win).count();
    out!("  races won        {won}/{}", r.races.len());
    out!("  engagements      {} (mean {:.1} s)", r.engagements.len(), r.mean_engagement);
    out!(
        "  uptime           {:.0} s of {:.0} s always-on ({:.1}% saved)",
        r.uptime.dynamic_uptime,
        r.uptime.always_on_uptime,
        r.uptime.saved_pct
    );
    out!("  ddos packets     {}", r.ddos_packets);
    out!("  botnet flows     {}", r.botnet_flows);
    out!("  samples          {}", r.samples.len());
}

pub fn simulate(a: SimulateArgs) -> CmdResult {
    let script = load_script(&a.script)?;
    let file_config = a.config.as_ref().map(|p| load_config(Some(p))).transpose()?;
    let detectors = load_detectors(file_config.as_ref().unwrap_or(&Default::default()), true)?;
    let mut opts = ScenarioOptions::for_script(&script, detectors);
    if let Some(cfg) = file_config {
        // Script directives still apply on top of the file.
        let (ahead, backend) = (opts.config.deploy_ahead, opts.config.backend.clone());
        opts.config = cfg;
        if script.deploy_ahead.is_some() {
            opts.config.deploy_ahead = ahead;
        }
        if script.latency.is_some() {
            opts.config.backend = backend;
        }
    }
    if let Some(seed) = a.seed {
        opts.seed = seed;
    }
    if let Some(s) = a.deploy_ahead {
        opts.config.deploy_ahead = s.enabled();
    }
    if let Some(latency) = a.latency {
        opts.config.backend = BackendConfig::Simulated { latency };
    }
    let modes: Vec<(Mode, PathBuf)> = if a.compare {
        vec![(Mode::Dynamic, a.out.join("dynamic")), (Mode::Static, a.out.join("static"))]
    } else {
        vec![(if a.fixed { Mode::Static } else { Mode::Dynamic }, a.out.clone())]
    };
    let mut reports = Vec::new();
    for (mode, dir) in modes {
        let run = run_scenario(&script, &opts.clone().mode(mode)).map_err(|e| match e {
            soar_core::scenario::ScenarioError::ScriptValidation { .. }
            | soar_core::scenario::ScenarioError::Config(_)
            | soar_core::scenario::ScenarioError::ConfigFile(_) => CliError::config(&script.name, e),
            e => CliError::runtime(&script.name, e),
        })?;
        run.write_to(&dir).map_err(|e| CliError::runtime(dir.display(), e))?;
        summarize(&dir, &run.report);
        reports.push(run.report);
    }
    if let [dynamic, fixed] = reports.as_slice() {
        out!("");
        out!("{}", table(dynamic, Some(fixed), 10).trim_end());
    }
    Ok(())
}

fn longest(r: &ScenarioReport) -> Vec<EngagementRecord> {
    let mut e = r.engagements.clone();
    e.sort_by(|a, b| b.duration.total_cmp(&a.duration).then(a.start_ts.total_cmp(&b.start_ts)));
    e
}

fn title(r: &ScenarioReport) -> String {
    let mode = match r.meta.mode {
        Mode::Dynamic => "Dynamic",
        Mode::Static => "Static",
    };
    format!("{mode} decoys ({})", r.meta.scenario)
}

fn table(left: &ScenarioReport, right: Option<&ScenarioReport>, n: usize) -> String {
    let empty = Vec::new();
    let r = right.map(longest);
    let rt = right.map(title).unwrap_or_default();
    top_engagement_table(&longest(left), r.as_ref().unwrap_or(&empty), n, (&title(left), &rt))
}

pub fn report(a: ReportArgs) -> CmdResult {
    let config = load_config(a.config.as_ref())?;
    let rebuild = |dir: &Path| -> Result<ScenarioReport, CliError> {
        let art = RunArtifacts::read(dir).map_err(|e| CliError::runtime(dir.display(), e))?;
        art.report(&config).map_err(|e| CliError::runtime(dir.display(), e))
    };
    let left = rebuild(&a.run)?;
    let right = a.against.as_deref().map(rebuild).transpose()?;
    summarize(&a.run, &left);
    if let (Some(r), Some(dir)) = (&right, &a.against) {
        summarize(dir, r);
    }
    out!("");
    out!("{}", table(&left, right.as_ref(), a.top).trim_end());
    if let Some(path) = &a.csv {
        fs::write(path, left.to_csv()).map_err(|e| CliError::runtime(path.display(), e))?;
    }
    Ok(())
}
