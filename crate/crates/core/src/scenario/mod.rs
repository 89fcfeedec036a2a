//! Deterministic attacker simulator, synthetic corpora and run reports.

mod artifacts;
mod corpus;
mod payloads;
mod race;
mod report;
mod script;
mod sim;

use std::sync::OnceLock;

use thiserror::Error;

pub use artifacts::RunArtifacts;
pub use corpus::{
    gen_corpus, ClassSizes, Corpus, CorpusPart, CorpusTask, DetectionTask, LabelledRequest, MIN_CLASS_SIZE,
};
pub use payloads::{attack_payload, http_request, PayloadClass};
pub use race::{race_check, RaceCheck};
pub use report::{
    build_report, top_engagement_table, AttackCounts, DeploymentCount, HoneypotAttacks, RaceOutcome, RaceRecord,
    SampleRow, ScenarioReport,
};
pub use script::{Action, Actor, LingerModel, ProbeKind, ScenarioScript, ScheduledAction, DEFAULT_SCAN_RATE};
pub use sim::{run_scenario, RunMeta, ScenarioOptions, ScenarioRun, CAPTURE_EPOCH_US, MAX_DROP_SIZE};

use crate::config::ConfigError;
use crate::engine::{Detectors, EngineError};
use crate::http_ids::{AttackDetector, AttackLabel, HttpIds, TokenFeatureSpec};
use crate::learners::{class_weights, train_tree, ClassifierModel, LearnError, TreeParams};
use crate::orchestrator::Mode;
use crate::packet::CaptureError;
use crate::storage::StorageError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("script line {line}: {reason}")]
    ScriptValidation { line: usize, reason: String },
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("capture: {0}")]
    Capture(#[from] CaptureError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Scripts shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("ctf_small", include_str!("../../scenarios/ctf_small.scn")),
    ("modbus_only", include_str!("../../scenarios/modbus_only.scn")),
    ("quiet", include_str!("../../scenarios/quiet.scn")),
];

pub fn bundled(name: &str) -> Option<Result<ScenarioScript, ScenarioError>> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| text.parse())
}

/// Rows per class used to train the reference detectors.
pub const REFERENCE_CLASS_SIZE: usize = 1000;
pub const REFERENCE_SEED: u64 = 1;

fn reference_model(corpus: &Corpus, task: DetectionTask) -> Result<ClassifierModel, ScenarioError> {
    let ds = corpus.part(task).ok_or_else(|| ScenarioError::Corpus(format!("corpus lacks {task}")))?;
    Ok(train_tree(ds, class_weights(ds.labels())?, TreeParams::default())?)
}

fn train_reference() -> Result<Detectors, ScenarioError> {
    let sizes = ClassSizes::balanced(REFERENCE_CLASS_SIZE);
    let http = gen_corpus(CorpusTask::Httpids, REFERENCE_SEED, sizes)?;
    let mut ids = HttpIds::new();
    for label in [AttackLabel::Xss, AttackLabel::Sqli, AttackLabel::Osc] {
        let model = reference_model(&http, DetectionTask::Http(label))?;
        let det = AttackDetector::new(TokenFeatureSpec::builtin(label), model)
            .map_err(|e| ScenarioError::Corpus(e.to_string()))?;
        ids.insert(det);
    }
    let ddos = reference_model(&gen_corpus(CorpusTask::Ddos, REFERENCE_SEED, sizes)?, DetectionTask::Ddos)?;
    let botnet = reference_model(&gen_corpus(CorpusTask::Botnet, REFERENCE_SEED, sizes)?, DetectionTask::Botnet)?;
    Ok(Detectors { http: Some(ids), ddos: Some(ddos), botnet: Some(botnet) })
}

/// Decision-tree detectors trained on fixed-seed synthetic corpora. Trained
/// once per process; identical in every process.
pub fn reference_detectors() -> &'static Detectors {
    static CELL: OnceLock<Detectors> = OnceLock::new();
    CELL.get_or_init(|| train_reference().expect("reference corpora are valid by construction"))
}

/// The same script under dynamic and static placement; both runs see the
/// same attacker traffic.
pub fn compare_modes(
    script: &ScenarioScript,
    detectors: &Detectors,
) -> Result<(ScenarioRun, ScenarioRun), ScenarioError> {
    let base = ScenarioOptions::for_script(script, detectors.clone());
    let dynamic = run_scenario(script, &base.clone().mode(Mode::Dynamic))?;
    let fixed = run_scenario(script, &base.mode(Mode::Static))?;
    Ok((dynamic, fixed))
}
