//! Margin generator `q = G(1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{uniform, Mlp};
use crate::numeric::{Graph, Matrix, Var};
use crate::rng::seeded;

/// Half-width of the uniform weight initialization; keeps the initial `q` near zero.
pub const MARGIN_INIT_SCALE: f64 = 1e-2;

/// Perceptron `C -> 2C -> C` fed with the all-ones vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginGenerator {
    net: Mlp,
}

impl MarginGenerator {
    pub fn new(num_classes: usize, seed: u64) -> Result<Self> {
        let widths = [num_classes, 2 * num_classes, num_classes];
        let mut rng = seeded(seed);
        let mut params = Vec::new();
        for w in widths.windows(2) {
            params.push(uniform(w[0], w[1], MARGIN_INIT_SCALE, &mut rng));
            params.push(Matrix::zeros(1, w[1]));
        }
        Ok(Self {
            net: Mlp::from_params(&widths, params)?,
        })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.input_dim() != net.output_dim() {
            return Err(Error::shape(
                "MarginGenerator",
                format!("network widths {:?}", net.widths()),
            ));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    /// The margin vector `q` as a `1 x C` row.
    pub fn margins_row(&self) -> Result<Matrix> {
        self.net.forward(&Matrix::ones(1, self.num_classes()))
    }

    pub fn margins(&self) -> Result<Vec<f64>> {
        Ok(self.margins_row()?.into_data())
    }

    /// Records `q` (a `1 x C` node) with parameters `params`.
    pub fn margins_graph(g: &mut Graph, params: &[Var], num_classes: usize) -> Result<Var> {
        let ones = g.constant(Matrix::ones(1, num_classes));
        Mlp::forward_graph(g, params, ones)
    }
}
