//! Nesterov-momentum SGD in the Caffe formulation.

use crate::arch::ModelGraph;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::TrainConfig;

/// One velocity buffer per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub velocities: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(g: &ModelGraph<T>) -> Self {
        OptimizerState {
            velocities: g.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// Updates one tensor in place:
/// `g' = g + wd·w`, `v' = μ·v − lr·g'`, `w' = w + (1+μ)·v' − μ·v`.
pub fn nesterov_update<T: Scalar>(
    w: &mut Tensor<T>,
    g: &Tensor<T>,
    v: &mut Tensor<T>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if w.shape() != g.shape() || w.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "sgd_nesterov_step",
            left: w.shape(),
            right: if w.shape() != g.shape() { g.shape() } else { v.shape() },
        });
    }
    let (lr, mu, wd) = (
        T::from_f64_lossy(lr),
        T::from_f64_lossy(momentum),
        T::from_f64_lossy(weight_decay),
    );
    let one_mu = T::one() + mu;
    for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
        let grad = gi + wd * *wi;
        let v_new = mu * *vi - lr * grad;
        *wi = *wi + one_mu * v_new - mu * *vi;
        *vi = v_new;
    }
    Ok(())
}

/// Applies one step to every trainable tensor of `g`. Gradients follow [`ModelGraph::param_infos`] order.
pub fn sgd_nesterov_step<T: Scalar>(
    g: &mut ModelGraph<T>,
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let infos = g.param_infos();
    if grads.len() != infos.len() || state.velocities.len() != infos.len() {
        return Err(Error::invalid(
            "sgd_nesterov_step",
            format!(
                "{} parameters, {} gradients, {} velocity buffers",
                infos.len(),
                grads.len(),
                state.velocities.len()
            ),
        ));
    }
    // check everything before touching any parameter
    for (info, grad) in infos.iter().zip(grads) {
        if let Some(pos) = grad.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {} at element {pos}",
                info.name
            )));
        }
    }
    for (((info, w), grad), v) in infos.iter().zip(g.params_mut()).zip(grads).zip(&mut state.velocities) {
        let wd = if cfg.exempt_bn_decay && info.kind.is_batch_norm() {
            0.0
        } else {
            cfg.weight_decay
        };
        nesterov_update(w, grad, v, lr, cfg.momentum, wd)?;
    }
    Ok(())
}
