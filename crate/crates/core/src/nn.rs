//! Fully connected rectifier networks shared by the classifier and the meta networks.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Graph, Matrix, Var};
use crate::rng::Rng;

/// A stack of affine layers with rectifiers between them and an identity output.
///
/// Parameters are stored as `[W_0, b_0, W_1, b_1, ...]` with `W_k` of shape
/// `widths[k] x widths[k+1]` and `b_k` of shape `1 x widths[k+1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<Matrix>,
}

impl Mlp {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::check_widths(widths)?;
        let mut params = Vec::with_capacity(2 * (widths.len() - 1));
        for w in widths.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.push(uniform(w[0], w[1], limit, rng));
            params.push(Matrix::zeros(1, w[1]));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn from_params(widths: &[usize], params: Vec<Matrix>) -> Result<Self> {
        Self::check_widths(widths)?;
        Self::check_params(widths, &params)?;
        Ok(Self {
            widths: widths.to_vec(),
            params,
        })
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths {widths:?} need at least two positive entries"
            )));
        }
        Ok(())
    }

    fn check_params(widths: &[usize], params: &[Matrix]) -> Result<()> {
        if params.len() != 2 * (widths.len() - 1) {
            return Err(Error::shape(
                "Mlp",
                format!("{} parameter matrices for widths {widths:?}", params.len()),
            ));
        }
        for (k, w) in widths.windows(2).enumerate() {
            if params[2 * k].shape() != (w[0], w[1]) || params[2 * k + 1].shape() != (1, w[1]) {
                return Err(Error::shape(
                    "Mlp",
                    format!(
                        "layer {k} has {:?}/{:?}, expected ({}, {})/(1, {})",
                        params[2 * k].shape(),
                        params[2 * k + 1].shape(),
                        w[0],
                        w[1],
                        w[1]
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Matrix>) -> Result<()> {
        Self::check_params(&self.widths, &params)?;
        self.params = params;
        Ok(())
    }

    /// `Σ (in + 1) · out` over layers.
    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "Mlp::forward",
                format!("input has {} features, network expects {}", x.cols(), self.input_dim()),
            ));
        }
        let layers = self.params.len() / 2;
        let mut h = x.clone();
        for k in 0..layers {
            h = h.matmul(&self.params[2 * k])?.add_row(&self.params[2 * k + 1])?;
            if k + 1 < layers {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Records the same computation as [`Mlp::forward`] with parameters `params`.
    pub fn forward_graph(g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        if params.is_empty() || !params.len().is_multiple_of(2) {
            return Err(Error::shape(
                "Mlp::forward_graph",
                format!("{} parameter nodes", params.len()),
            ));
        }
        let layers = params.len() / 2;
        let mut h = x;
        for k in 0..layers {
            h = g.matmul(h, params[2 * k])?;
            h = g.add_row(h, params[2 * k + 1])?;
            if k + 1 < layers {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Adds the parameters to `g` as inputs.
    pub fn inputs(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.input(p.clone())).collect()
    }
}

pub(crate) fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::new(rows, cols, data).expect("uniform samples are finite")
}
