//! Meta-gradients through a single virtual gradient-descent step.

use crate::error::{Error, Result};
use crate::numeric::{Graph, Matrix, Var};

/// Result of differentiating a meta loss through one virtual step.
#[derive(Clone, Debug)]
pub struct MetaGradient {
    /// `∂ meta_loss(ω̂(θ)) / ∂θ`, one entry per meta parameter.
    pub theta_grads: Vec<Matrix>,
    /// Value of the training loss at `(ω, θ)`.
    pub train_loss: f64,
    /// Value of the meta loss at the virtual parameters.
    pub meta_loss: f64,
    /// The virtual parameters `ω̂ = ω - α ∇_ω L_train`.
    pub virtual_omega: Vec<Matrix>,
}

/// Gradient with respect to `theta` of `meta_loss(ω - alpha ∇_ω train_loss(ω, θ))`.
///
/// `train_loss` receives the graph, the ω nodes and the θ nodes and must
/// return a scalar node; `meta_loss` receives the virtual ω̂ nodes. The virtual
/// step is plain gradient descent and never touches the caller's `omega`.
pub fn meta_gradient<F, G>(
    omega: &[Matrix],
    theta: &[Matrix],
    alpha: f64,
    train_loss: F,
    meta_loss: G,
) -> Result<MetaGradient>
where
    F: FnOnce(&mut Graph, &[Var], &[Var]) -> Result<Var>,
    G: FnOnce(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "virtual step size must be positive, got {alpha}"
        )));
    }
    let mut g = Graph::new();
    let omega_vars: Vec<Var> = omega.iter().map(|m| g.input(m.clone())).collect();
    let theta_vars: Vec<Var> = theta.iter().map(|m| g.input(m.clone())).collect();

    let train = train_loss(&mut g, &omega_vars, &theta_vars)?;
    let grads = g.gradient(train, &omega_vars)?;
    let mut virtual_vars = Vec::with_capacity(omega_vars.len());
    for (&w, &dw) in omega_vars.iter().zip(&grads) {
        let step = g.scale(dw, alpha)?;
        virtual_vars.push(g.sub(w, step)?);
    }

    let meta = meta_loss(&mut g, &virtual_vars)?;
    let theta_grads = g.gradient(meta, &theta_vars)?;

    Ok(MetaGradient {
        theta_grads: theta_grads.iter().map(|&v| g.value(v).clone()).collect(),
        train_loss: g.value(train).item()?,
        meta_loss: g.value(meta).item()?,
        virtual_omega: virtual_vars.iter().map(|&v| g.value(v).clone()).collect(),
    })
}
