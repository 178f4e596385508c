//! Per-epoch construction of the balanced meta set and its training counterpart.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng::seeded;

/// Disjoint meta/train partition of a dataset for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSplit {
    pub epoch: usize,
    /// Seed of the primary-set draw; `None` for the deterministic naive rule.
    pub seed: Option<u64>,
    /// Meta samples per class.
    pub per_class: usize,
    pub meta_indices: Vec<usize>,
    pub train_indices: Vec<usize>,
}

impl EpochSplit {
    /// Pairwise-disjoint and covering `0..n`.
    pub fn is_partition(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.meta_indices.iter().chain(&self.train_indices) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }

    pub fn meta_counts(&self, labels: &[usize], num_classes: usize) -> Vec<usize> {
        let mut c = vec![0; num_classes];
        for &i in &self.meta_indices {
            c[labels[i]] += 1;
        }
        c
    }
}

fn check_fractions(m0: f64, m1: f64) -> Result<()> {
    if !(m1 > 0.0 && m1 <= m0 && m0 <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling fractions need 0 < m1 <= m0 <= 1, got m0 = {m0}, m1 = {m1}"
        )));
    }
    Ok(())
}

fn by_loss(losses: &[f64]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    |&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b))
}

fn split(
    data: &LabeledDataset,
    losses: &[f64],
    m0: f64,
    m1: f64,
    seed: Option<u64>,
) -> Result<EpochSplit> {
    check_fractions(m0, m1)?;
    if losses.len() != data.len() {
        return Err(Error::shape(
            "sampling",
            format!("{} losses for {} samples", losses.len(), data.len()),
        ));
    }
    let mut rng = seed.map(seeded);
    let mut candidates = Vec::with_capacity(data.num_classes());
    for mut members in data.class_indices() {
        if let Some(rng) = rng.as_mut() {
            members.shuffle(rng);
            members.truncate((m0 * members.len() as f64).floor() as usize);
        }
        members.sort_by(by_loss(losses));
        members.truncate((m1 * members.len() as f64).floor() as usize);
        candidates.push(members);
    }
    let k = candidates.iter().map(Vec::len).min().unwrap_or(0);
    if k == 0 {
        let sizes: Vec<usize> = candidates.iter().map(Vec::len).collect();
        return Err(Error::Sampling(format!(
            "some class contributes no meta samples (candidate sizes {sizes:?}); \
             increase m1_frac/m0_frac or reduce the imbalance ratio"
        )));
    }
    let mut in_meta = vec![false; data.len()];
    for c in &candidates {
        for &i in &c[..k] {
            in_meta[i] = true;
        }
    }
    let (meta, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| in_meta[i]);
    Ok(EpochSplit {
        epoch: 0,
        seed,
        per_class: k,
        meta_indices: meta,
        train_indices: train,
    })
}

/// Random primary subset (fraction `m0` per class), then its lowest-loss fraction
/// `m1`, balanced to the smallest class contribution.
pub fn hierarchical_sample(
    data: &LabeledDataset,
    losses: &[f64],
    m0_frac: f64,
    m1_frac: f64,
    seed: u64,
) -> Result<EpochSplit> {
    split(data, losses, m0_frac, m1_frac, Some(seed))
}

/// Lowest-loss fraction `m1` of every class, balanced; deterministic in `losses`.
pub fn naive_sample(data: &LabeledDataset, losses: &[f64], m1_frac: f64) -> Result<EpochSplit> {
    split(data, losses, 1.0, m1_frac, None)
}

/// Mean pairwise Euclidean distance among points.
pub fn mean_pairwise_distance(points: &[&[f64]]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += points[i]
                .iter()
                .zip(points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Mean over classes of the within-class mean pairwise distance of the selected rows.
pub fn dispersion(features: &Matrix, labels: &[usize], indices: &[usize]) -> Result<f64> {
    let num_classes = indices.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); num_classes];
    for &i in indices {
        groups[labels[i]].push(features.row(i));
    }
    let groups: Vec<_> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    if groups.is_empty() {
        return Err(Error::InvalidArgument("dispersion of an empty selection".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "dispersion needs >= 2 samples per class, found a class with {}",
            g.len()
        )));
    }
    Ok(groups.iter().map(|g| mean_pairwise_distance(g)).sum::<f64>() / groups.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, Provenance};

    fn counts_dataset(counts: &[usize]) -> LabeledDataset {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let n = labels.len();
        LabeledDataset::new(
            Matrix::zeros(n, 2),
            labels,
            None,
            counts.len(),
            Provenance::default(),
        )
        .unwrap()
    }

    #[test]
    fn direct_simulation_of_rule() {
        let d = counts_dataset(&[40, 8]);
        let losses: Vec<f64> = (0..48).map(|i| ((i * 37) % 48) as f64).collect();
        let s = hierarchical_sample(&d, &losses, 0.5, 0.25, 3).unwrap();
        assert_eq!(s.per_class, 1);
        assert_eq!(s.meta_counts(d.given_labels(), 2), vec![1, 1]);
        assert_eq!(s.train_indices.len(), 46);
        assert!(s.is_partition(48));
    }

    #[test]
    fn full_fractions_take_everything() {
        let d = counts_dataset(&[5, 5]);
        let s = hierarchical_sample(&d, &[0.0; 10], 1.0, 1.0, 0).unwrap();
        assert_eq!(s.meta_indices.len(), 10);
        assert!(s.train_indices.is_empty());
    }

    #[test]
    fn naive_selects_lowest_losses() {
        let d = counts_dataset(&[12, 12]);
        let losses: Vec<f64> = (0..24).map(|i| ((i * 5) % 24) as f64 * 0.1).collect();
        let a = naive_sample(&d, &losses, 0.25).unwrap();
        assert_eq!(a, naive_sample(&d, &losses, 0.25).unwrap());
        for class in 0..2 {
            let meta_max = a
                .meta_indices
                .iter()
                .filter(|&&i| d.given_labels()[i] == class)
                .map(|&i| losses[i])
                .fold(f64::MIN, f64::max);
            let rest_min = a
                .train_indices
                .iter()
                .filter(|&&i| d.given_labels()[i] == class)
                .map(|&i| losses[i])
                .fold(f64::MAX, f64::min);
            assert!(meta_max <= rest_min);
        }
    }

    #[test]
    fn m0_of_one_matches_naive() {
        let d = counts_dataset(&[10, 20]);
        let losses = vec![0.5; 30];
        assert_eq!(
            hierarchical_sample(&d, &losses, 1.0, 0.3, 77).unwrap().meta_indices,
            naive_sample(&d, &losses, 0.3).unwrap().meta_indices
        );
    }

    #[test]
    fn errors() {
        let d = counts_dataset(&[40, 2]);
        assert!(matches!(
            hierarchical_sample(&d, &[0.0; 42], 0.5, 0.25, 0),
            Err(Error::Sampling(_))
        ));
        assert!(hierarchical_sample(&d, &[0.0; 42], 0.2, 0.5, 0).is_err());
        assert!(naive_sample(&d, &[0.0; 3], 0.5).is_err());
    }

    #[test]
    fn dispersion_basics() {
        let f = Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(dispersion(&f, &[0, 0, 1, 1], &[0, 1]).unwrap(), 5.0);
        assert_eq!(dispersion(&f, &[0, 0, 1, 1], &[2, 3]).unwrap(), 0.0);
        assert_eq!(dispersion(&f, &[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap(), 2.5);
        assert!(dispersion(&f, &[0, 0, 1, 1], &[0, 1, 2]).is_err());
    }

    #[test]
    fn low_loss_quartile_is_tighter() {
        let d = gen_blobs(3, 80, 4, 6.0, 5).unwrap();
        // distance to the class centroid as a stand-in loss
        let mut losses = vec![0.0; d.len()];
        for members in d.class_indices() {
            let mut centroid = vec![0.0; d.dims()];
            for &i in &members {
                for (c, v) in centroid.iter_mut().zip(d.features().row(i)) {
                    *c += v / members.len() as f64;
                }
            }
            for &i in &members {
                losses[i] = d
                    .features()
                    .row(i)
                    .iter()
                    .zip(&centroid)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        }
        let quartile = naive_sample(&d, &losses, 0.25).unwrap();
        let all: Vec<usize> = (0..d.len()).collect();
        let full = dispersion(d.features(), d.given_labels(), &all).unwrap();
        let low = dispersion(d.features(), d.given_labels(), &quartile.meta_indices).unwrap();
        assert!(full >= low);
    }
}
