//! Decision-tree and logistic-regression trainers with class weighting,
//! plus the accuracy/precision/recall/F metrics used to score them.

mod dataset;
mod logistic;
mod metrics;
mod model;
mod tree;

use thiserror::Error;

pub use dataset::{Dataset, FeatureKind, FeatureSpec, Schema};
pub use logistic::{encode_row, loss_and_gradient, train_logistic, LogisticParams};
pub use metrics::{evaluate, Confusion, Metrics};
pub use model::{ClassifierModel, Family, ModelParams, MODEL_FORMAT_VERSION};
pub use tree::{train_tree, Split, TreeNode, TreeParams};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("schema mismatch: expected [{expected}], found [{found}]")]
    SchemaMismatch { expected: String, found: String },
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("no trained model loaded")]
    UntrainedModel,
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-class sample weights, indexed by label.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassWeights(pub [f64; 2]);

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights([1.0, 1.0]);

    pub fn of(&self, label: u8) -> f64 {
        self.0[label as usize]
    }
}

/// Balanced weights `N / (2 * count_c)`. Both classes must be present.
pub fn class_weights(labels: &[u8]) -> Result<ClassWeights, LearnError> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(LearnError::SingleClass);
    }
    let n = labels.len() as f64;
    Ok(ClassWeights([n / (2.0 * neg as f64), n / (2.0 * pos as f64)]))
}
