//! The learnable classifier and softmax cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numeric::{logsumexp, Graph, Matrix, Var};
use crate::rng::seeded;

pub const DEFAULT_HIDDEN: usize = 64;
pub const CHECKPOINT_VERSION: u32 = 1;

/// Fixed per-feature affine map `(x - mean) * scale` applied before the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dims: usize) -> Self {
        Self {
            mean: vec![0.0; dims],
            scale: vec![1.0; dims],
        }
    }

    /// Zero mean and unit variance per column; constant columns are only centred.
    pub fn fit(features: &Matrix) -> Self {
        let (n, d) = features.shape();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(features.row(r)) {
                *m += v / n as f64;
            }
        }
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        let scale = var
            .iter()
            .map(|&v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape(
                "Standardizer::apply",
                format!("{} features, expected {}", x.cols(), self.mean.len()),
            ));
        }
        let d = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) * self.scale[i % d])
            .collect();
        Matrix::new(x.rows(), d, data)
    }
}

/// Two-hidden-layer rectifier perceptron `D -> H -> H -> C` producing logits
/// from standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    net: Mlp,
    input: Standardizer,
    seed: u64,
}

impl Classifier {
    pub fn new(dims: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a classifier needs at least 2 classes, got {classes}"
            )));
        }
        let net = Mlp::glorot(&[dims, hidden, hidden, classes], &mut seeded(seed))?;
        Ok(Self {
            input: Standardizer::identity(dims),
            net,
            seed,
        })
    }

    pub fn from_net(net: Mlp, seed: u64) -> Self {
        Self {
            input: Standardizer::identity(net.input_dim()),
            net,
            seed,
        }
    }

    pub fn with_standardizer(mut self, input: Standardizer) -> Result<Self> {
        if input.mean.len() != self.dims() || input.scale.len() != self.dims() {
            return Err(Error::shape(
                "Classifier::with_standardizer",
                format!("standardizer for {} features, network takes {}", input.mean.len(), self.dims()),
            ));
        }
        self.input = input;
        Ok(self)
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.input
    }

    /// Standardized network input for raw features `x`.
    pub fn prepare(&self, x: &Matrix) -> Result<Matrix> {
        self.input.apply(x)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> usize {
        self.net.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn params(&self) -> &[Matrix] {
        self.net.params()
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.net.forward(&self.prepare(x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }

    pub fn to_checkpoint(&self) -> ClassifierCheckpoint {
        ClassifierCheckpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            widths: self.net.widths().to_vec(),
            params: self.net.params().to_vec(),
            input: self.input.clone(),
        }
    }

    pub fn from_checkpoint(ck: ClassifierCheckpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported classifier checkpoint version {}",
                ck.version
            )));
        }
        Self::from_net(Mlp::from_params(&ck.widths, ck.params)?, ck.seed).with_standardizer(ck.input)
    }
}

/// Versioned on-disk form of a [`Classifier`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub widths: Vec<usize>,
    pub params: Vec<Matrix>,
    pub input: Standardizer,
}

/// Checks that every row is a probability vector (sum 1 within 1e-9).
pub fn check_stochastic(targets: &Matrix) -> Result<()> {
    for r in 0..targets.rows() {
        let row = targets.row(r);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "target row {r} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

fn check_same_shape(op: &'static str, logits: &Matrix, targets: &Matrix) -> Result<()> {
    if logits.shape() != targets.shape() {
        return Err(Error::shape(
            op,
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    Ok(())
}

/// Per-sample `-Σ_c t_c log softmax(z)_c`.
pub fn soft_cross_entropy_per_sample(logits: &Matrix, targets: &Matrix) -> Result<Vec<f64>> {
    check_same_shape("soft_cross_entropy", logits, targets)?;
    check_stochastic(targets)?;
    Ok((0..logits.rows())
        .map(|r| {
            let z = logits.row(r);
            let lse = logsumexp(z);
            z.iter()
                .zip(targets.row(r))
                .map(|(&zc, &tc)| tc * (lse - zc))
                .sum()
        })
        .collect())
}

/// Batch mean of [`soft_cross_entropy_per_sample`].
pub fn soft_cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<f64> {
    let per = soft_cross_entropy_per_sample(logits, targets)?;
    if per.is_empty() {
        return Err(Error::shape("soft_cross_entropy", "empty batch"));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Per-sample cross-entropy against integer labels.
pub fn cross_entropy_per_sample(logits: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for {} rows", labels.len(), logits.rows()),
        ));
    }
    labels
        .iter()
        .enumerate()
        .map(|(r, &y)| {
            let z = logits.row(r);
            if y >= z.len() {
                return Err(Error::InvalidArgument(format!("label {y} out of range")));
            }
            Ok(logsumexp(z) - z[y])
        })
        .collect()
}

/// Recorded batch-mean soft cross-entropy; `targets` may itself be a recorded node.
pub fn soft_cross_entropy_graph(g: &mut Graph, logits: Var, targets: Var) -> Result<Var> {
    if g.shape(logits) != g.shape(targets) {
        return Err(Error::shape(
            "soft_cross_entropy_graph",
            format!("logits {:?} vs targets {:?}", g.shape(logits), g.shape(targets)),
        ));
    }
    let n = g.shape(logits).0;
    if n == 0 {
        return Err(Error::shape("soft_cross_entropy_graph", "empty batch"));
    }
    let log_p = g.log_softmax_rows(logits)?;
    let weighted = g.mul(targets, log_p)?;
    let total = g.sum(weighted)?;
    g.scale(total, -1.0 / n as f64)
}
