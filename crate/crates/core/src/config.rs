//! Engine configuration file (TOML). Unknown keys are rejected.
//!
//! Defaults: seven reserved addresses 20 hosts apart starting at
//! 172.26.233.4, a 900 s idle timeout, deploy-ahead on, the simulated backend
//! with a 6 s start latency, and every detector enabled.

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, ExecBackend, ExecConfig, SimulatedBackend};
use crate::engine::EngineSettings;
use crate::http_ids::AttackLabel;
use crate::orchestrator::{
    Catalog, CatalogError, HoneypotTemplate, Interaction, Ipv4Net, Mode, OrchestratorConfig, PoolError, ReservedIpPool,
    ServiceKind, DEFAULT_IDLE_TIMEOUT,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("pool: {0}")]
    Pool(#[from] PoolError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub subnet: Ipv4Net,
    pub first: Ipv4Addr,
    pub spacing: u32,
    pub count: usize,
    /// Explicit ladder; overrides first/spacing/count when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ips: Option<Vec<Ipv4Addr>>,
    /// Inclusive DHCP range the reserved addresses must avoid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dhcp_range: Option<[Ipv4Addr; 2]>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            subnet: Ipv4Net::new(Ipv4Addr::new(172, 26, 233, 0), 24).expect("valid subnet"),
            first: Ipv4Addr::new(172, 26, 233, 4),
            spacing: 20,
            count: 7,
            ips: None,
            dhcp_range: None,
        }
    }
}

impl PoolConfig {
    pub fn build(&self) -> Result<ReservedIpPool, PoolError> {
        let pool = match &self.ips {
            Some(ips) => ReservedIpPool::from_list(ips.clone(), self.subnet)?,
            None => ReservedIpPool::evenly_spaced(self.subnet, self.first, self.spacing, self.count)?,
        };
        if let Some([lo, hi]) = self.dhcp_range {
            pool.check_dhcp_range(lo, hi)?;
        }
        Ok(pool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    pub service: ServiceKind,
    pub port: u16,
    pub image_id: String,
    pub interaction: Interaction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_up_of: Option<AttackLabel>,
}

impl From<&TemplateConfig> for HoneypotTemplate {
    fn from(t: &TemplateConfig) -> Self {
        HoneypotTemplate {
            service: t.service,
            port: t.port,
            image_id: t.image_id.clone(),
            interaction: t.interaction,
            follow_up_of: t.follow_up_of,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Simulated {
        #[serde(default = "default_latency")]
        latency: f64,
    },
    Exec {
        runtime: PathBuf,
        #[serde(default)]
        registry: String,
        network: String,
        #[serde(default = "default_readiness")]
        readiness_timeout: f64,
    },
}

fn default_latency() -> f64 {
    6.0
}

fn default_readiness() -> f64 {
    30.0
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Simulated { latency: default_latency() }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Box<dyn Backend> {
        match self {
            BackendConfig::Simulated { latency } => Box::new(SimulatedBackend::new(*latency)),
            BackendConfig::Exec { runtime, registry, network, readiness_timeout } => {
                Box::new(ExecBackend::new(ExecConfig {
                    runtime: runtime.clone(),
                    registry: registry.clone(),
                    network: network.clone(),
                    readiness_timeout: *readiness_timeout,
                }))
            }
        }
    }
}

/// Model files. Missing entries leave the matching detector without a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub http_xss: Option<PathBuf>,
    pub http_sqli: Option<PathBuf>,
    pub http_osc: Option<PathBuf>,
    pub ddos: Option<PathBuf>,
    pub botnet: Option<PathBuf>,
}

impl ModelPaths {
    pub fn http(&self, label: AttackLabel) -> Option<&Path> {
        match label {
            AttackLabel::Xss => self.http_xss.as_deref(),
            AttackLabel::Sqli => self.http_sqli.as_deref(),
            AttackLabel::Osc => self.http_osc.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorToggles {
    pub http: bool,
    pub ddos: bool,
    pub botnet: bool,
}

impl Default for DetectorToggles {
    fn default() -> Self {
        DetectorToggles { http: true, ddos: true, botnet: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub log: PathBuf,
    pub vault: PathBuf,
    pub backups: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { log: "events.jsonl".into(), vault: "vault".into(), backups: "backups".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub idle_timeout: f64,
    pub deploy_ahead: bool,
    pub mode: Mode,
    /// Seconds between new-file checks on each active decoy.
    pub poll_interval: f64,
    pub pool: PoolConfig,
    /// Replaces the built-in catalog when non-empty.
    pub templates: Vec<TemplateConfig>,
    pub backend: BackendConfig,
    pub models: ModelPaths,
    pub detectors: DetectorToggles,
    pub output: OutputConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            deploy_ahead: true,
            mode: Mode::Dynamic,
            poll_interval: crate::engine::DEFAULT_POLL_INTERVAL,
            pool: PoolConfig::default(),
            templates: Vec::new(),
            backend: BackendConfig::default(),
            models: ModelPaths::default(),
            detectors: DetectorToggles::default(),
            output: OutputConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.idle_timeout.is_finite() && self.idle_timeout > 0.0) {
            return Err(ConfigError::Invalid(format!("idle_timeout must be positive, got {}", self.idle_timeout)));
        }
        if !(self.poll_interval.is_finite() && self.poll_interval > 0.0) {
            return Err(ConfigError::Invalid(format!("poll_interval must be positive, got {}", self.poll_interval)));
        }
        match &self.backend {
            BackendConfig::Simulated { latency } if !(latency.is_finite() && *latency >= 0.0) => {
                return Err(ConfigError::Invalid(format!("backend.latency must be non-negative, got {latency}")));
            }
            BackendConfig::Exec { readiness_timeout, .. }
                if readiness_timeout.is_nan() || *readiness_timeout <= 0.0 =>
            {
                return Err(ConfigError::Invalid("backend.readiness_timeout must be positive".into()));
            }
            _ => {}
        }
        self.pool.build()?;
        self.catalog()?;
        Ok(())
    }

    pub fn catalog(&self) -> Result<Catalog, CatalogError> {
        if self.templates.is_empty() {
            Ok(Catalog::default())
        } else {
            Catalog::new(self.templates.iter().map(HoneypotTemplate::from).collect())
        }
    }

    pub fn settings(&self) -> EngineSettings {
        EngineSettings {
            orchestrator: OrchestratorConfig {
                idle_timeout: self.idle_timeout,
                deploy_ahead: self.deploy_ahead,
                mode: self.mode,
            },
            poll_interval: self.poll_interval,
        }
    }
}
