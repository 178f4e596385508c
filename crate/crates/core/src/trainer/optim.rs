use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// `base · ½ (1 + cos(π t / T))`.
pub fn cosine_lr(base: f64, t: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * 0.5 * (1.0 + (PI * t as f64 / total as f64).cos())
}

fn zeros_like(params: &[Matrix]) -> Vec<Matrix> {
    params
        .iter()
        .map(|p| Matrix::zeros(p.rows(), p.cols()))
        .collect()
}

fn check(op: &'static str, params: &[Matrix], grads: &[Matrix], buffers: &[Matrix]) -> Result<()> {
    let ok = params.len() == grads.len()
        && params.len() == buffers.len()
        && params
            .iter()
            .zip(grads)
            .zip(buffers)
            .all(|((p, g), b)| p.shape() == g.shape() && p.shape() == b.shape());
    if ok {
        Ok(())
    } else {
        Err(Error::shape(op, "parameter, gradient and state shapes differ"))
    }
}

/// SGD with heavy-ball momentum and L2 weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdMomentum {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<Matrix>,
}

impl SgdMomentum {
    pub fn new(params: &[Matrix], momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: zeros_like(params),
        }
    }

    pub fn buffers(&self) -> &[Matrix] {
        &self.buffers
    }

    /// `d = g + λ p; b = μ b + d; p -= lr · b`.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        check("SgdMomentum::step", params, grads, &self.buffers)?;
        for ((p, g), b) in params.iter_mut().zip(grads).zip(&mut self.buffers) {
            let d = g.add(&p.scale(self.weight_decay)?)?;
            *b = b.scale(self.momentum)?.add(&d)?;
            *p = p.sub(&b.scale(lr)?)?;
        }
        Ok(())
    }
}

/// Adam without weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &[Matrix], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros_like(params),
            second: zeros_like(params),
        }
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.first, &self.second)
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        check("Adam::step", params, grads, &self.first)?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = m.scale(self.beta1)?.add(&g.scale(1.0 - self.beta1)?)?;
            *v = v.scale(self.beta2)?.add(&g.hadamard(g)?.scale(1.0 - self.beta2)?)?;
            let data = p
                .data()
                .iter()
                .zip(m.data())
                .zip(v.data())
                .map(|((&p, &m), &v)| p - self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps))
                .collect();
            *p = Matrix::new(p.rows(), p.cols(), data)?;
        }
        Ok(())
    }
}
