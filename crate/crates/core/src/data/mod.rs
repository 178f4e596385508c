//! Labeled datasets with ground-truth provenance.

mod corrupt;
mod io;

pub use corrupt::{
    apply_longtail, gen_blobs, inject_asymmetric_noise, inject_distribution_noise,
    inject_symmetric_noise, longtail_sizes, PairMap,
};
pub use io::{load_csv, provenance_path, save_csv};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// One generator or corruption applied to a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceStep {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
}

/// How a dataset was produced, and how noisy its given labels are.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub steps: Vec<ProvenanceStep>,
    /// Measured fraction of samples whose given label differs from the true label.
    pub noisy_fraction: Option<f64>,
}

/// Features with given (possibly corrupted) labels and optional true labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    given_labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    num_classes: usize,
    provenance: Provenance,
}

impl LabeledDataset {
    /// Builds a dataset; the noisy fraction in `provenance` is recomputed from the labels.
    pub fn new(
        features: Matrix,
        given_labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        if given_labels.len() != features.rows() {
            return Err(Error::shape(
                "LabeledDataset",
                format!("{} labels for {} rows", given_labels.len(), features.rows()),
            ));
        }
        check_labels(&given_labels, num_classes)?;
        if let Some(t) = &true_labels {
            if t.len() != given_labels.len() {
                return Err(Error::shape(
                    "LabeledDataset",
                    format!("{} true labels for {} rows", t.len(), given_labels.len()),
                ));
            }
            check_labels(t, num_classes)?;
        }
        let mut data = Self {
            features,
            given_labels,
            true_labels,
            num_classes,
            provenance,
        };
        data.provenance.noisy_fraction = data.measured_noise();
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.given_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.given_labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn given_labels(&self) -> &[usize] {
        &self.given_labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    /// True labels when known, otherwise the given labels.
    pub fn reference_labels(&self) -> &[usize] {
        self.true_labels.as_deref().unwrap_or(&self.given_labels)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Number of samples per given label.
    pub fn class_counts(&self) -> Vec<usize> {
        counts(&self.given_labels, self.num_classes)
    }

    /// Sample indices grouped by given label.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.given_labels.iter().enumerate() {
            groups[y].push(i);
        }
        groups
    }

    /// Disagreement rate between given and true labels.
    pub fn measured_noise(&self) -> Option<f64> {
        let t = self.true_labels.as_ref()?;
        if t.is_empty() {
            return Some(0.0);
        }
        let wrong = t
            .iter()
            .zip(&self.given_labels)
            .filter(|(a, b)| a != b)
            .count();
        Some(wrong as f64 / t.len() as f64)
    }

    /// Copy with the listed rows only, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices)?;
        let given = indices.iter().map(|&i| self.given_labels[i]).collect();
        let truth = self
            .true_labels
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i]).collect());
        Self::new(
            features,
            given,
            truth,
            self.num_classes,
            self.provenance.clone(),
        )
    }

    pub(crate) fn with_labels(&self, given: Vec<usize>, step: ProvenanceStep) -> Result<Self> {
        let mut provenance = self.provenance.clone();
        provenance.steps.push(step);
        Self::new(
            self.features.clone(),
            given,
            self.true_labels.clone(),
            self.num_classes,
            provenance,
        )
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {y} at index {i} is outside [0, {num_classes})"
        )));
    }
    Ok(())
}

pub fn counts(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut c = vec![0; num_classes];
    for &y in labels {
        c[y] += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_labels() {
        let f = Matrix::zeros(2, 2);
        assert!(LabeledDataset::new(f.clone(), vec![0, 2], None, 2, Provenance::default()).is_err());
        assert!(
            LabeledDataset::new(f, vec![0, 1], Some(vec![0, 5]), 2, Provenance::default()).is_err()
        );
    }

    #[test]
    fn noise_fraction_is_measured() {
        let d = LabeledDataset::new(
            Matrix::zeros(4, 1),
            vec![0, 1, 1, 1],
            Some(vec![0, 1, 0, 0]),
            2,
            Provenance {
                noisy_fraction: Some(0.9),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(d.provenance().noisy_fraction, Some(0.5));
        assert_eq!(d.class_counts(), vec![1, 3]);
        assert_eq!(d.class_counts().iter().sum::<usize>(), d.len());
    }
}
