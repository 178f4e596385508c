//! Per-epoch metrics and holdout evaluation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::Classifier;
use crate::data::LabeledDataset;
use crate::dynamic::LabelCorrector;
use crate::error::Result;
use crate::numeric::Matrix;

/// Holdout accuracy of argmax raw logits (no margins, no correction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes absent from the holdout.
    pub per_class: Vec<Option<f64>>,
    pub class_counts: Vec<usize>,
}

pub fn evaluate(classifier: &Classifier, holdout: &LabeledDataset) -> Result<Evaluation> {
    let predictions = classifier.predict(holdout.features())?;
    Ok(accuracy_report(
        &predictions,
        holdout.reference_labels(),
        holdout.num_classes(),
    ))
}

/// Overall and per-class agreement between `predictions` and `labels`.
pub fn accuracy_report(predictions: &[usize], labels: &[usize], num_classes: usize) -> Evaluation {
    let mut hits = vec![0usize; num_classes];
    let mut totals = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    Evaluation {
        accuracy: if labels.is_empty() {
            0.0
        } else {
            correct as f64 / labels.len() as f64
        },
        per_class: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        class_counts: totals,
    }
}

/// Compact summary of the `R x C` corrector table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GDigest {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// First bin with `g < 0.5`, per class.
    pub crossings: Vec<Option<usize>>,
    /// SHA-256 over the little-endian bits of the table, row-major.
    pub sha256: String,
}

impl GDigest {
    pub fn of(corrector: &LabelCorrector) -> Result<Self> {
        let table = corrector.table()?;
        let values = table.data();
        let mut hasher = Sha256::new();
        for v in values {
            hasher.update(v.to_le_bytes());
        }
        let sha256 = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            crossings: corrector.crossings()?,
            sha256,
        })
    }
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: String,
    pub lr: f64,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    pub per_class_acc: Option<Vec<Option<f64>>>,
    pub corrected_label_acc: Option<f64>,
    pub margins: Vec<f64>,
    pub g_digest: Option<GDigest>,
    pub meta_size: Option<usize>,
}

/// Corrector table and margins after one epoch, for weight-curve and margin plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectionRecord {
    pub epoch: usize,
    pub g_table: Matrix,
    pub margins: Vec<f64>,
}

/// Fraction of rows whose argmax equals the label.
pub fn label_accuracy(targets: &Matrix, labels: &[usize]) -> f64 {
    let hits = targets
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / labels.len().max(1) as f64
}
