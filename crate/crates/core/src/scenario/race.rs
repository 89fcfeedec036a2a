//! Closed-form check of the deploy-ahead race against a sequential scanner.

use serde::{Deserialize, Serialize};

use super::report::RaceOutcome;
use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaceCheck {
    pub outcome: RaceOutcome,
    /// Seconds between the decoy becoming ready and the scanner arriving.
    pub margin: f64,
}

/// A scanner spending `scan_rate` seconds per host reaches a decoy placed
/// `spacing` hosts ahead after `spacing * scan_rate` seconds. The decoy wins
/// iff that is strictly longer than `deploy_latency`.
pub fn race_check(scan_rate: f64, spacing: f64, deploy_latency: f64) -> Result<RaceCheck, ScenarioError> {
    if !(scan_rate.is_finite() && scan_rate > 0.0) {
        return Err(ScenarioError::Config(format!("scan rate must be positive, got {scan_rate}")));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(ScenarioError::Config(format!("spacing must be positive, got {spacing}")));
    }
    if !(deploy_latency.is_finite() && deploy_latency >= 0.0) {
        return Err(ScenarioError::Config(format!("deploy latency must be non-negative, got {deploy_latency}")));
    }
    let budget = spacing * scan_rate;
    let outcome = if budget > deploy_latency { RaceOutcome::Win } else { RaceOutcome::Lose };
    Ok(RaceCheck { outcome, margin: budget - deploy_latency })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_strict() {
        let r = race_check(1.5, 4.0, 6.0).unwrap();
        assert_eq!(r.outcome, RaceOutcome::Lose);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn zero_latency_always_wins() {
        for s in [1.0, 2.0, 20.0, 250.0] {
            assert_eq!(race_check(0.01, s, 0.0).unwrap().outcome, RaceOutcome::Win);
        }
    }

    #[test]
    fn rejects_non_positive_inputs() {
        assert!(race_check(0.0, 20.0, 6.0).is_err());
        assert!(race_check(1.5, -1.0, 6.0).is_err());
        assert!(race_check(1.5, 20.0, -0.5).is_err());
        assert!(race_check(f64::NAN, 20.0, 6.0).is_err());
    }
}
