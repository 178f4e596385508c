//! Label corrector `g(r | y)` and the soft relabeling `y* = y·g + y'·(1 - g)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numeric::{Graph, Matrix, Var};
use crate::rng::seeded;

pub const CORRECTOR_HIDDEN: usize = 32;
/// Output bias at initialization; `sigmoid(3) ≈ 0.95` trusts given labels early on.
pub const CORRECTOR_INIT_BIAS: f64 = 3.0;

/// Class-conditioned weighting network over `[one_hot(y) ‖ r / R]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelCorrector {
    net: Mlp,
    num_classes: usize,
    num_bins: usize,
}

impl LabelCorrector {
    pub fn new(num_classes: usize, num_bins: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if num_bins == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument(
                "label corrector needs at least one class and one bin".into(),
            ));
        }
        let mut widths = vec![num_classes + 1];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut net = Mlp::glorot(&widths, &mut seeded(seed))?;
        let last = net.params().len() - 1;
        net.params_mut()[last] = Matrix::scalar(CORRECTOR_INIT_BIAS);
        Ok(Self {
            net,
            num_classes,
            num_bins,
        })
    }

    pub fn from_net(net: Mlp, num_classes: usize, num_bins: usize) -> Result<Self> {
        if net.input_dim() != num_classes + 1 || net.output_dim() != 1 {
            return Err(Error::shape(
                "LabelCorrector",
                format!("network widths {:?} for {num_classes} classes", net.widths()),
            ));
        }
        Ok(Self {
            net,
            num_classes,
            num_bins,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    /// Rows `[one_hot(y_i) ‖ r_i / R]`.
    pub fn encode(&self, labels: &[usize], bins: &[usize]) -> Result<Matrix> {
        if labels.len() != bins.len() {
            return Err(Error::shape(
                "LabelCorrector::encode",
                format!("{} labels for {} bins", labels.len(), bins.len()),
            ));
        }
        let width = self.num_classes + 1;
        let mut data = vec![0.0; labels.len() * width];
        for (i, (&y, &r)) in labels.iter().zip(bins).enumerate() {
            if y >= self.num_classes || r >= self.num_bins {
                return Err(Error::InvalidArgument(format!(
                    "sample {i}: class {y} / bin {r} outside {} classes x {} bins",
                    self.num_classes, self.num_bins
                )));
            }
            data[i * width + y] = 1.0;
            data[i * width + self.num_classes] = r as f64 / self.num_bins as f64;
        }
        Matrix::new(labels.len(), width, data)
    }

    /// `g(r_i | y_i)` for each sample.
    pub fn weights(&self, labels: &[usize], bins: &[usize]) -> Result<Vec<f64>> {
        let x = self.encode(labels, bins)?;
        Ok(self.net.forward(&x)?.sigmoid().into_data())
    }

    /// Records `g` as an `n x 1` node given encoded inputs.
    pub fn weights_graph(g: &mut Graph, params: &[Var], encoded: Var) -> Result<Var> {
        let raw = Mlp::forward_graph(g, params, encoded)?;
        g.sigmoid(raw)
    }

    /// Full `R x C` table of `g(r | y)`.
    pub fn table(&self) -> Result<Matrix> {
        let (c, r) = (self.num_classes, self.num_bins);
        let mut labels = Vec::with_capacity(r * c);
        let mut bins = Vec::with_capacity(r * c);
        for bin in 0..r {
            for class in 0..c {
                labels.push(class);
                bins.push(bin);
            }
        }
        Matrix::new(r, c, self.weights(&labels, &bins)?)
    }

    /// Relabels a batch: `given` one-hot, `predicted` row-stochastic.
    pub fn correct(&self, given: &Matrix, predicted: &Matrix, bins: &[usize]) -> Result<Matrix> {
        let labels = given.argmax_rows();
        let w = self.weights(&labels, bins)?;
        mix_labels(given, predicted, &w)
    }

    /// First bin where `g(r | y)` falls below 0.5, per class.
    pub fn crossings(&self) -> Result<Vec<Option<usize>>> {
        let table = self.table()?;
        Ok((0..self.num_classes)
            .map(|c| (0..self.num_bins).find(|&r| table.get(r, c) < 0.5))
            .collect())
    }
}

/// `y*_i = y_i · w_i + y'_i · (1 - w_i)`.
pub fn mix_labels(given: &Matrix, predicted: &Matrix, weights: &[f64]) -> Result<Matrix> {
    if given.shape() != predicted.shape() || weights.len() != given.rows() {
        return Err(Error::shape(
            "mix_labels",
            format!(
                "given {:?}, predicted {:?}, {} weights",
                given.shape(),
                predicted.shape(),
                weights.len()
            ),
        ));
    }
    let c = given.cols();
    let data = given
        .data()
        .iter()
        .zip(predicted.data())
        .enumerate()
        .map(|(k, (&y, &p))| {
            let w = weights[k / c];
            y * w + p * (1.0 - w)
        })
        .collect();
    Matrix::new(given.rows(), c, data)
}
