use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LearnError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Values are stored as level indices.
    Categorical {
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureSpec { name: name.into(), kind: FeatureKind::Numeric }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str]) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical { levels: levels.iter().map(|s| s.to_string()).collect() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Self {
        Schema { features }
    }

    pub fn numeric(names: &[&str]) -> Self {
        Schema::new(names.iter().map(|n| FeatureSpec::numeric(*n)).collect())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON schema.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(json))[..16].to_string()
    }
}

/// Labeled binary-classification data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self, LearnError> {
        if rows.len() != labels.len() {
            return Err(LearnError::InvalidData(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(LearnError::InvalidData(format!(
                    "row {i} has {} values, schema has {}",
                    row.len(),
                    schema.len()
                )));
            }
            for (v, f) in row.iter().zip(&schema.features) {
                let ok = match &f.kind {
                    FeatureKind::Numeric => v.is_finite(),
                    FeatureKind::Categorical { levels } => {
                        v.fract() == 0.0 && *v >= 0.0 && (*v as usize) < levels.len()
                    }
                };
                if !ok {
                    return Err(LearnError::InvalidData(format!("row {i}: bad value {v} for `{}`", f.name)));
                }
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(LearnError::InvalidData(format!("label {bad} is not 0 or 1")));
        }
        Ok(Dataset { schema, rows, labels })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `[negatives, positives]`
    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - pos, pos]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn shuffled_indices(&self, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx
    }

    /// Deterministic shuffled split into `(train, test)`.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let idx = self.shuffled_indices(seed);
        let n_test = ((self.len() as f64) * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test.min(self.len()));
        (self.subset(train), self.subset(test))
    }

    /// `k` deterministic folds as `(train_indices, test_indices)` pairs.
    pub fn k_fold(&self, k: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
        let k = k.max(2);
        let idx = self.shuffled_indices(seed);
        (0..k)
            .map(|fold| {
                let (mut train, mut test) = (Vec::new(), Vec::new());
                for (pos, &i) in idx.iter().enumerate() {
                    if pos % k == fold {
                        test.push(i)
                    } else {
                        train.push(i)
                    }
                }
                (train, test)
            })
            .collect()
    }

    /// CSV with one column per feature plus a trailing `label` column.
    /// Categorical values are written as their level names.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), LearnError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header: Vec<&str> = self.schema.names();
        header.push("label");
        w.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row
                .iter()
                .zip(&self.schema.features)
                .map(|(v, f)| match &f.kind {
                    FeatureKind::Numeric => v.to_string(),
                    FeatureKind::Categorical { levels } => levels[*v as usize].clone(),
                })
                .collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a CSV written by [`Dataset::write_csv`] against a known schema.
    pub fn read_csv<R: Read>(schema: Schema, source: R) -> Result<Dataset, LearnError> {
        let mut r = csv::Reader::from_reader(source);
        let header = r.headers()?.clone();
        let mut expected: Vec<&str> = schema.names();
        expected.push("label");
        let got: Vec<&str> = header.iter().collect();
        if got != expected {
            return Err(LearnError::SchemaMismatch { expected: expected.join(","), found: got.join(",") });
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(schema.len());
            for (field, f) in rec.iter().zip(&schema.features) {
                let v = match &f.kind {
                    FeatureKind::Numeric => field.parse::<f64>().ok(),
                    FeatureKind::Categorical { levels } => levels.iter().position(|l| l == field).map(|i| i as f64),
                };
                row.push(v.ok_or_else(|| {
                    LearnError::InvalidData(format!("line {}: bad value `{field}` for `{}`", line + 2, f.name))
                })?);
            }
            let label = rec
                .get(schema.len())
                .and_then(|l| l.parse::<u8>().ok())
                .ok_or_else(|| LearnError::InvalidData(format!("line {}: bad label", line + 2)))?;
            rows.push(row);
            labels.push(label);
        }
        Dataset::new(schema, rows, labels)
    }
}
