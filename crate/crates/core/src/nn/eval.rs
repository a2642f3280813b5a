use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::network::Prediction;
use super::train::Dataset;
use super::NnError;
use crate::SnoreClass;

/// Anything that turns a feature image into a prediction.
pub trait Classify {
    fn classify(&self, image: &crate::features::FeatureImage) -> Result<Prediction, NnError>;
}

impl Classify for ModelParams {
    fn classify(&self, image: &crate::features::FeatureImage) -> Result<Prediction, NnError> {
        self.predict(image)
    }
}

/// Confusion counts with `snoring` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }

    pub fn record(&mut self, truth: SnoreClass, predicted: SnoreClass) {
        match (truth.is_snoring(), predicted.is_snoring()) {
            (true, true) => self.true_positive += 1,
            (false, false) => self.true_negative += 1,
            (false, true) => self.false_positive += 1,
            (true, false) => self.false_negative += 1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub accuracy: f64,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub confusion: Confusion,
    pub mean_latency_ms: f64,
}

impl EvalReport {
    /// Rates derived from counts. A rate whose denominator is zero is 0.
    pub fn from_confusion(confusion: Confusion, mean_latency_ms: f64) -> Self {
        let c = confusion;
        Self {
            total: c.total(),
            accuracy: ratio(c.true_positive + c.true_negative, c.total()),
            false_positive_rate: ratio(c.false_positive, c.false_positive + c.true_negative),
            false_negative_rate: ratio(c.false_negative, c.false_negative + c.true_positive),
            confusion,
            mean_latency_ms,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "accuracy {:.2}%  FPR {:.1}%  FNR {:.1}%  (n={}, TP={} TN={} FP={} FN={})  mean latency {:.3} ms",
            self.accuracy * 100.0,
            self.false_positive_rate * 100.0,
            self.false_negative_rate * 100.0,
            self.total,
            self.confusion.true_positive,
            self.confusion.true_negative,
            self.confusion.false_positive,
            self.confusion.false_negative,
            self.mean_latency_ms,
        )
    }
}

pub fn evaluate(model: &dyn Classify, data: &Dataset) -> Result<EvalReport, NnError> {
    if data.is_empty() {
        return Err(NnError::Data("cannot evaluate an empty corpus".into()));
    }
    let mut confusion = Confusion::default();
    let mut latency = 0.0;
    for (image, &truth) in data.images.iter().zip(&data.labels) {
        let p = model.classify(image)?;
        confusion.record(truth, p.inferred_class);
        latency += p.latency_ms;
    }
    Ok(EvalReport::from_confusion(confusion, latency / data.len() as f64))
}
