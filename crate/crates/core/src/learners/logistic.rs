use serde::{Deserialize, Serialize};

use super::{ClassWeights, ClassifierModel, Dataset, FeatureKind, LearnError, ModelParams, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { epochs: 500, learning_rate: 1.0 }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Min-max scale numeric features into `[0, 1]` using the stored training
/// range and one-hot encode categorical ones. Constant features map to 0.
pub fn encode_row(schema: &Schema, mins: &[f64], maxs: &[f64], row: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len());
    for (j, f) in schema.features.iter().enumerate() {
        match &f.kind {
            FeatureKind::Numeric => {
                let span = maxs[j] - mins[j];
                out.push(if span > 0.0 { (row[j] - mins[j]) / span } else { 0.0 });
            }
            FeatureKind::Categorical { levels } => {
                out.extend((0..levels.len()).map(|l| f64::from(u8::from(row[j] as usize == l))));
            }
        }
    }
    out
}

/// Weighted mean log-loss and its gradient `(loss, d/dw, d/db)`.
///
/// Each sample contributes `w_i * -ln p(y_i)`; the sum is divided by the total
/// sample weight.
pub fn loss_and_gradient(xs: &[Vec<f64>], ys: &[u8], sample_w: &[f64], w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let mut grad = vec![0.0; w.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    let mut total = 0.0;
    for ((x, &y), &sw) in xs.iter().zip(ys).zip(sample_w) {
        let z = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let p = sigmoid(z);
        loss += sw * if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
        let err = sw * (p - f64::from(y));
        for (g, a) in grad.iter_mut().zip(x) {
            *g += err * a;
        }
        grad_b += err;
        total += sw;
    }
    grad.iter_mut().for_each(|g| *g /= total);
    (loss / total, grad, grad_b / total)
}

/// Full-batch gradient descent on the weighted log-loss.
///
/// The bias starts at the log-odds of the raw class counts, so zero epochs
/// yields a majority-class predictor.
pub fn train_logistic(
    ds: &Dataset,
    weights: ClassWeights,
    params: LogisticParams,
) -> Result<ClassifierModel, LearnError> {
    let counts = ds.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(LearnError::SingleClass);
    }
    let schema = ds.schema();
    let width = schema.len();
    let mut mins = vec![f64::INFINITY; width];
    let mut maxs = vec![f64::NEG_INFINITY; width];
    for row in ds.rows() {
        for j in 0..width {
            mins[j] = mins[j].min(row[j]);
            maxs[j] = maxs[j].max(row[j]);
        }
    }
    let xs: Vec<Vec<f64>> = ds.rows().iter().map(|r| encode_row(schema, &mins, &maxs, r)).collect();
    let ys = ds.labels();
    let sample_w: Vec<f64> = ys.iter().map(|&y| weights.of(y)).collect();

    let mut w = vec![0.0; xs[0].len()];
    let mut b = (counts[1] as f64 / counts[0] as f64).ln();
    for epoch in 0..params.epochs {
        let (loss, gw, gb) = loss_and_gradient(&xs, ys, &sample_w, &w, b);
        if !loss.is_finite() {
            return Err(LearnError::NonFiniteLoss { epoch });
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= params.learning_rate * g;
        }
        b -= params.learning_rate * gb;
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFiniteLoss { epoch });
        }
    }
    if params.epochs > 0 {
        let (loss, _, _) = loss_and_gradient(&xs, ys, &sample_w, &w, b);
        if !loss.is_finite() {
            return Err(LearnError::NonFiniteLoss { epoch: params.epochs });
        }
    }
    Ok(ClassifierModel::new(
        super::Family::LogisticRegression,
        schema.clone(),
        weights,
        ModelParams::Logistic { weights: w, bias: b, mins, maxs },
    ))
}

pub(crate) fn predict_logistic(schema: &Schema, w: &[f64], b: f64, mins: &[f64], maxs: &[f64], row: &[f64]) -> u8 {
    let x = encode_row(schema, mins, maxs, row);
    let z = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
    u8::from(sigmoid(z) > 0.5)
}
