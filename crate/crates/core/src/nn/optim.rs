use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimState<S: Scalar = f32> {
    #[serde(skip)]
    pub m: Vec<Tensor<S>>,
    #[serde(skip)]
    pub v: Vec<Tensor<S>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub base_lr: f64,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(params: &[&Tensor<S>], base_lr: f64) -> Self {
        OptimState {
            m: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            base_lr,
        }
    }
}

/// One bias-corrected Adam update at learning rate `lr`.
pub fn adam_step<S: Scalar>(
    state: &mut OptimState<S>,
    params: &mut [&mut Tensor<S>],
    grads: &[Tensor<S>],
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        g.ensure_dims(p.dims(), "adam grad")?;
        m.ensure_dims(p.dims(), "adam moment")?;
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let pd = p.data_mut();
        for i in 0..pd.len() {
            let gi = g.data()[i].as_f64();
            let mi = b1 * m.data()[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v.data()[i].as_f64() + (1.0 - b2) * gi * gi;
            m.data_mut()[i] = S::from_f64(mi);
            v.data_mut()[i] = S::from_f64(vi);
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + state.eps);
            pd[i] = S::from_f64(pd[i].as_f64() - update);
        }
    }
    Ok(())
}
