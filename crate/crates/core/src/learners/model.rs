use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::logistic::predict_logistic;
use super::tree::predict_tree;
use super::{ClassWeights, LearnError, Schema, TreeNode};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    DecisionTree,
    LogisticRegression,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::DecisionTree => "DECISION_TREE",
            Family::LogisticRegression => "LOGISTIC_REGRESSION",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Tree {
        nodes: Vec<TreeNode>,
    },
    Logistic {
        /// One weight per encoded column (one-hot expands categoricals).
        weights: Vec<f64>,
        bias: f64,
        mins: Vec<f64>,
        maxs: Vec<f64>,
    },
}

/// A trained binary classifier. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub family: Family,
    pub schema: Schema,
    pub schema_fingerprint: String,
    pub class_weights: ClassWeights,
    pub params: ModelParams,
}

impl ClassifierModel {
    pub(crate) fn new(family: Family, schema: Schema, class_weights: ClassWeights, params: ModelParams) -> Self {
        ClassifierModel {
            format_version: MODEL_FORMAT_VERSION,
            family,
            schema_fingerprint: schema.fingerprint(),
            schema,
            class_weights,
            params,
        }
    }

    pub fn check_schema(&self, schema: &Schema) -> Result<(), LearnError> {
        if schema.fingerprint() == self.schema_fingerprint {
            Ok(())
        } else {
            Err(LearnError::SchemaMismatch { expected: self.schema.names().join(","), found: schema.names().join(",") })
        }
    }

    /// Predict a label for one row laid out in the model's schema.
    pub fn predict(&self, row: &[f64]) -> Result<u8, LearnError> {
        if row.len() != self.schema.len() {
            return Err(LearnError::SchemaMismatch {
                expected: format!("{} features", self.schema.len()),
                found: format!("{} features", row.len()),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> u8 {
        match &self.params {
            ModelParams::Tree { nodes } => predict_tree(nodes, row),
            ModelParams::Logistic { weights, bias, mins, maxs } => {
                predict_logistic(&self.schema, weights, *bias, mins, maxs, row)
            }
        }
    }

    /// Structural checks applied to every deserialized model.
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidModel(m.to_string()));
        if self.format_version != MODEL_FORMAT_VERSION {
            return bad(&format!("unsupported format version {}", self.format_version));
        }
        if self.schema.fingerprint() != self.schema_fingerprint {
            return bad("schema fingerprint does not match schema");
        }
        match &self.params {
            ModelParams::Tree { nodes } => {
                if nodes.is_empty() {
                    return bad("empty tree");
                }
                // Preorder layout: children always come after their parent,
                // which rules out cycles; each node must be reached exactly once.
                let mut seen = vec![false; nodes.len()];
                seen[0] = true;
                for (i, n) in nodes.iter().enumerate() {
                    if n.prediction > 1 {
                        return bad("leaf label out of range");
                    }
                    if let Some(s) = &n.split {
                        if s.feature >= self.schema.len() || !s.threshold.is_finite() {
                            return bad("split references an invalid feature or threshold");
                        }
                        for c in [s.left, s.right] {
                            if c <= i || c >= nodes.len() || seen[c] {
                                return bad("malformed tree links");
                            }
                            seen[c] = true;
                        }
                    }
                }
                if seen.iter().any(|s| !s) {
                    return bad("unreachable tree node");
                }
            }
            ModelParams::Logistic { weights, bias, mins, maxs } => {
                let width: usize = self
                    .schema
                    .features
                    .iter()
                    .map(|f| match &f.kind {
                        super::FeatureKind::Numeric => 1,
                        super::FeatureKind::Categorical { levels } => levels.len(),
                    })
                    .sum();
                if weights.len() != width || mins.len() != self.schema.len() || maxs.len() != self.schema.len() {
                    return bad("parameter dimensions do not match schema");
                }
                if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                    return bad("non-finite weights");
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let m: ClassifierModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
