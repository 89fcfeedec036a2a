use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{HoneypotInstance, ServiceKind};

/// Running intervals per template. `reference` is the template set an
/// always-on deployment would keep up for the whole horizon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UptimeLedger {
    pub intervals: BTreeMap<ServiceKind, Vec<(f64, f64)>>,
    pub reference: Vec<ServiceKind>,
}

impl UptimeLedger {
    pub fn new(reference: Vec<ServiceKind>) -> Self {
        UptimeLedger { intervals: BTreeMap::new(), reference }
    }

    /// Instances still running at `horizon` are cut off there.
    pub fn from_instances<'a>(
        instances: impl IntoIterator<Item = &'a HoneypotInstance>,
        reference: Vec<ServiceKind>,
        horizon: f64,
    ) -> Self {
        let mut ledger = UptimeLedger::new(reference);
        for i in instances {
            let end = i.reaped_at.unwrap_or(horizon).min(horizon);
            ledger.record(i.service, i.deployed_at.min(end), end);
        }
        ledger
    }

    pub fn record(&mut self, service: ServiceKind, start: f64, end: f64) {
        self.intervals.entry(service).or_default().push((start, end.max(start)));
    }

    pub fn uptime(&self, service: ServiceKind) -> f64 {
        self.intervals.get(&service).map_or(0.0, |v| v.iter().fold(0.0, |acc, (a, b)| acc + (b - a)))
    }

    pub fn total(&self) -> f64 {
        self.intervals.keys().fold(0.0, |acc, &s| acc + self.uptime(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateUptime {
    pub service: ServiceKind,
    pub uptime: f64,
    /// Share of the horizon this template was not running, in percent.
    pub saved_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpuSavingReport {
    pub horizon: f64,
    pub dynamic_uptime: f64,
    pub always_on_uptime: f64,
    pub saved_pct: f64,
    pub per_template: Vec<TemplateUptime>,
}

/// Saving of the dynamic ledger against keeping every reference template up
/// for the whole horizon: `1 - dynamic / (templates * horizon)`, in percent.
pub fn cpu_saving_report(ledger: &UptimeLedger, horizon: f64) -> CpuSavingReport {
    let always_on = ledger.reference.len() as f64 * horizon;
    let dynamic = ledger.total();
    let saved_pct = if always_on > 0.0 { 100.0 * (1.0 - dynamic / always_on) } else { 0.0 };
    let mut services: Vec<ServiceKind> = ledger.reference.clone();
    services.extend(ledger.intervals.keys().copied().filter(|s| !ledger.reference.contains(s)));
    let per_template = services
        .into_iter()
        .map(|service| {
            let uptime = ledger.uptime(service);
            let saved_pct = if horizon > 0.0 { 100.0 * (1.0 - uptime / horizon) } else { 0.0 };
            TemplateUptime { service, uptime, saved_pct }
        })
        .collect();
    CpuSavingReport { horizon, dynamic_uptime: dynamic, always_on_uptime: always_on, saved_pct, per_template }
}
