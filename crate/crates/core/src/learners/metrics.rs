use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ClassifierModel, Dataset, LearnError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_pairs(predicted: &[u8], actual: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Percentages derived from a confusion matrix. A ratio with a zero
/// denominator is reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub confusion: Confusion,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (100.0 * num as f64 / den as f64, false)
    }
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let (accuracy, _) = ratio(c.tp + c.tn, c.total());
        let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
        let f_undefined = precision + recall == 0.0;
        let f_score = if f_undefined { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Metrics {
            accuracy,
            precision,
            recall,
            f_score,
            confusion: c,
            precision_undefined,
            recall_undefined,
            f_undefined,
        }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |u: bool| if u { " (undefined)" } else { "" };
        writeln!(f, "accuracy   {:>7.2}", self.accuracy)?;
        writeln!(f, "precision  {:>7.2}{}", self.precision, flag(self.precision_undefined))?;
        writeln!(f, "recall     {:>7.2}{}", self.recall, flag(self.recall_undefined))?;
        writeln!(f, "f-score    {:>7.2}{}", self.f_score, flag(self.f_undefined))?;
        let c = &self.confusion;
        write!(f, "confusion  tp={} fp={} tn={} fn={}", c.tp, c.fp, c.tn, c.fn_)
    }
}

pub fn evaluate(model: &ClassifierModel, ds: &Dataset) -> Result<Metrics, LearnError> {
    model.check_schema(ds.schema())?;
    let predicted: Vec<u8> = ds.rows().iter().map(|r| model.predict_unchecked(r)).collect();
    Ok(Metrics::from_confusion(Confusion::from_pairs(&predicted, ds.labels())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = Metrics::from_confusion(Confusion { tp: 40, fp: 10, fn_: 20, tn: 30 });
        assert!((m.precision - 80.0).abs() < 1e-9);
        assert!((m.recall - 66.666_666_666).abs() < 1e-6);
        assert!((m.accuracy - 70.0).abs() < 1e-9);
        assert!((m.f_score - 72.727_272_727).abs() < 1e-6);
    }

    #[test]
    fn all_negative_predictor_on_positive_set() {
        let m = Metrics::from_confusion(Confusion::from_pairs(&[0; 10], &[1; 10]));
        assert_eq!(m.recall, 0.0);
        assert!(!m.recall_undefined);
        assert_eq!(m.precision, 0.0);
        assert!(m.precision_undefined);
        assert!(m.f_undefined);
    }

    #[test]
    fn perfect_predictions() {
        let y: Vec<u8> = (0..100).map(|i| (i % 3 == 0) as u8).collect();
        let m = Metrics::from_confusion(Confusion::from_pairs(&y, &y));
        assert_eq!((m.accuracy, m.f_score), (100.0, 100.0));
    }
}
