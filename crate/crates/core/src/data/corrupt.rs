//! Synthetic blobs, exponential long-tail subsampling and label-noise injection.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde_json::json;

use super::{LabeledDataset, Provenance, ProvenanceStep};
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng::seeded;

/// Source class -> target class for asymmetric (pair) noise.
pub type PairMap = BTreeMap<usize, usize>;

/// Class means at pairwise distance at least `separation`.
///
/// With `C <= D` the means sit on a scaled simplex (`sep/√2 · e_c`, all
/// pairwise distances exactly `sep`); otherwise on a regular `C`-gon in the
/// first two coordinates with neighbouring means `sep` apart.
fn blob_means(classes: usize, dims: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut m = vec![0.0; dims];
            if classes <= dims {
                m[c] = separation / 2f64.sqrt();
            } else {
                let radius = separation / (2.0 * (PI / classes as f64).sin());
                let angle = 2.0 * PI * c as f64 / classes as f64;
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
            }
            m
        })
        .collect()
}

/// `C` isotropic unit-variance Gaussian clusters with `n` samples each.
///
/// Means depend only on `(C, D, separation)`, so datasets drawn with different
/// seeds share the same clusters (train and holdout splits).
pub fn gen_blobs(
    num_classes: usize,
    per_class: usize,
    dims: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 || per_class < 1 || dims < 2 || !separation.is_finite() || separation <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gen_blobs needs C >= 2, n >= 1, D >= 2, separation > 0 \
             (got C={num_classes}, n={per_class}, D={dims}, sep={separation})"
        )));
    }
    let means = blob_means(num_classes, dims, separation);
    let mut rng = seeded(seed);
    let mut data = Vec::with_capacity(num_classes * per_class * dims);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in mean {
                let z: f64 = rng.sample(StandardNormal);
                data.push(mu + z);
            }
            labels.push(c);
        }
    }
    let features = Matrix::new(labels.len(), dims, data)?;
    let provenance = Provenance {
        steps: vec![ProvenanceStep {
            generator: "blobs".into(),
            params: json!({
                "num_classes": num_classes,
                "per_class": per_class,
                "dims": dims,
                "separation": separation,
            }),
            seed: Some(seed),
        }],
        noisy_fraction: None,
    };
    LabeledDataset::new(features, labels.clone(), Some(labels), num_classes, provenance)
}

/// `floor(n · μ^i)` with `μ = ρ^(-1/(C-1))`.
pub fn longtail_sizes(per_class: usize, num_classes: usize, imbalance_ratio: f64) -> Vec<usize> {
    (0..num_classes)
        .map(|i| {
            let exponent = if num_classes > 1 {
                -(i as f64) / (num_classes - 1) as f64
            } else {
                0.0
            };
            let exact = per_class as f64 * imbalance_ratio.powf(exponent);
            // absorb representation error at exact integers such as n/ρ
            (exact + 1e-9).floor() as usize
        })
        .collect()
}

/// Subsamples a balanced dataset to the exponential profile with ratio `ρ`.
pub fn apply_longtail(data: &LabeledDataset, imbalance_ratio: f64, seed: u64) -> Result<LabeledDataset> {
    if !imbalance_ratio.is_finite() || imbalance_ratio < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio must be >= 1, got {imbalance_ratio}"
        )));
    }
    let counts = data.class_counts();
    let n = counts[0];
    if counts.iter().any(|&c| c != n) {
        return Err(Error::InvalidArgument(format!(
            "long-tail subsampling needs a balanced dataset, got class counts {counts:?}"
        )));
    }
    let sizes = longtail_sizes(n, data.num_classes(), imbalance_ratio);
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio {imbalance_ratio} leaves class {c} with no samples (n = {n})"
        )));
    }
    let mut rng = seeded(seed);
    let mut keep = Vec::new();
    for (mut members, &size) in data.class_indices().into_iter().zip(&sizes) {
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..size]);
    }
    keep.sort_unstable();
    let mut out = data.subset(&keep)?;
    out.provenance.steps.push(ProvenanceStep {
        generator: "longtail".into(),
        params: json!({ "imbalance_ratio": imbalance_ratio, "sizes": sizes }),
        seed: Some(seed),
    });
    Ok(out)
}

fn check_rate(rate: f64, allow_one: bool) -> Result<()> {
    let ok = rate >= 0.0 && (rate < 1.0 || (allow_one && rate == 1.0));
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "noise rate {rate} outside [0, 1{}",
            if allow_one { "]" } else { ")" }
        )));
    }
    Ok(())
}

/// With probability `rate`, resample each label uniformly over all `C` classes.
pub fn inject_symmetric_noise(data: &LabeledDataset, rate: f64, seed: u64) -> Result<LabeledDataset> {
    check_rate(rate, false)?;
    let c = data.num_classes();
    let mut rng = seeded(seed);
    let given = data
        .given_labels()
        .iter()
        .map(|&y| {
            if rng.random::<f64>() < rate {
                rng.random_range(0..c)
            } else {
                y
            }
        })
        .collect();
    data.with_labels(
        given,
        ProvenanceStep {
            generator: "symmetric_noise".into(),
            params: json!({ "rate": rate }),
            seed: Some(seed),
        },
    )
}

/// With probability `rate`, flip samples of each mapped class to its target.
pub fn inject_asymmetric_noise(
    data: &LabeledDataset,
    rate: f64,
    pairs: &PairMap,
    seed: u64,
) -> Result<LabeledDataset> {
    check_rate(rate, true)?;
    let c = data.num_classes();
    if let Some((s, t)) = pairs.iter().find(|(&s, &t)| s >= c || t >= c) {
        return Err(Error::InvalidArgument(format!(
            "pair {s}->{t} is outside [0, {c})"
        )));
    }
    let mut rng = seeded(seed);
    let given = data
        .given_labels()
        .iter()
        .map(|&y| match pairs.get(&y) {
            // draw only for mapped classes so unmapped ones never consume randomness
            Some(&target) if rng.random::<f64>() < rate => target,
            _ => y,
        })
        .collect();
    let pair_list: Vec<[usize; 2]> = pairs.iter().map(|(&s, &t)| [s, t]).collect();
    data.with_labels(
        given,
        ProvenanceStep {
            generator: "asymmetric_noise".into(),
            params: json!({ "rate": rate, "pairs": pair_list }),
            seed: Some(seed),
        },
    )
}

/// With probability `(N_j / N) · rate`, reassign each sample to class `j`.
pub fn inject_distribution_noise(data: &LabeledDataset, rate: f64, seed: u64) -> Result<LabeledDataset> {
    check_rate(rate, false)?;
    let counts = data.class_counts();
    let total = data.len();
    let mut rng = seeded(seed);
    let given = data
        .given_labels()
        .iter()
        .map(|&y| {
            if rng.random::<f64>() >= rate {
                return y;
            }
            let mut pick = rng.random_range(0..total);
            for (j, &n) in counts.iter().enumerate() {
                if pick < n {
                    return j;
                }
                pick -= n;
            }
            unreachable!("pick < total")
        })
        .collect();
    data.with_labels(
        given,
        ProvenanceStep {
            generator: "distribution_noise".into(),
            params: json!({ "rate": rate, "class_counts": counts }),
            seed: Some(seed),
        },
    )
}
