//! Shared fixtures for the benchmarks.

use dynloss::data::{gen_blobs, inject_symmetric_noise};
use dynloss::{LabeledDataset, Matrix};

/// Deterministic dense matrix with entries in [-1, 1].
pub fn dense(rows: usize, cols: usize, salt: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|i| ((i as f64 + 1.0) * 0.618_033_988_7 + salt).sin())
        .collect();
    Matrix::new(rows, cols, data).expect("sized to fit")
}

/// Noisy blobs of the size used by the desk-scale experiments.
pub fn noisy_blobs(classes: usize, per_class: usize, dims: usize) -> LabeledDataset {
    let clean = gen_blobs(classes, per_class, dims, 8.0, 1).expect("valid blob parameters");
    inject_symmetric_noise(&clean, 0.4, 2).expect("valid rate")
}
