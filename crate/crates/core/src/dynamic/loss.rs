//! Margin-adjusted softmax cross-entropy: `-Σ_c t_c log softmax(z + q)_c`.

use crate::classifier::{soft_cross_entropy, soft_cross_entropy_graph};
use crate::error::{Error, Result};
use crate::numeric::{Graph, Matrix, Var};

fn shifted(logits: &Matrix, margins: &[f64]) -> Result<Matrix> {
    if margins.len() != logits.cols() {
        return Err(Error::shape(
            "margin_softmax_loss",
            format!("{} margins for {} classes", margins.len(), logits.cols()),
        ));
    }
    logits.add_row(&Matrix::row_vector(margins)?)
}

/// Soft cross-entropy of `logits + q` against row-stochastic `targets`.
pub fn margin_softmax_loss(logits: &Matrix, margins: &[f64], targets: &Matrix) -> Result<f64> {
    soft_cross_entropy(&shifted(logits, margins)?, targets)
}

/// Recorded form of [`margin_softmax_loss`]; `margins` is a `1 x C` node.
pub fn margin_softmax_loss_graph(g: &mut Graph, logits: Var, margins: Var, targets: Var) -> Result<Var> {
    if g.shape(margins) != (1, g.shape(logits).1) {
        return Err(Error::shape(
            "margin_softmax_loss_graph",
            format!("margins {:?} for logits {:?}", g.shape(margins), g.shape(logits)),
        ));
    }
    let z = g.add_row(logits, margins)?;
    soft_cross_entropy_graph(g, z, targets)
}

/// Balanced-Softmax margins `q_j = ln n_j`.
pub fn balanced_margins(class_counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(j) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!(
            "class {j} has zero samples; Balanced-Softmax needs counts >= 1"
        )));
    }
    Ok(class_counts.iter().map(|&n| (n as f64).ln()).collect())
}

pub fn balanced_softmax_loss(logits: &Matrix, class_counts: &[usize], targets: &Matrix) -> Result<f64> {
    margin_softmax_loss(logits, &balanced_margins(class_counts)?, targets)
}
