//! Central finite-difference gradient checks in 64-bit.
//!
//! The scalar probe is `L = Σ r·y` for a fixed random `r`, so its gradient
//! with respect to the output is `r`. Errors are reported relative to the
//! largest gradient magnitude: per input, and jointly over all parameters
//! of a layer.

use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::Graph;
use super::layer::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-3;

/// `max |a − n| / max(|a|, |n|)` over a block.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let err = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

fn probe(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub fn random_tensor<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.sample::<f64, _>(StandardNormal))
}

/// Worst relative errors of a layer check.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerCheck {
    pub inputs: f64,
    pub params: f64,
}

impl LayerCheck {
    pub fn worst(&self) -> f64 {
        self.inputs.max(self.params)
    }
}

/// Check every input and parameter entry of `layer`.
pub fn check_layer<R: Rng + ?Sized>(
    layer: &Layer<f64>,
    inputs: &[Tensor<f64>],
    mode: Mode,
    rng: &mut R,
) -> Result<LayerCheck> {
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let (y, cache) = layer.forward_many(&refs, mode)?;
    let r = random_tensor(y.dims(), rng);
    let (gin, gparams) = layer.backward(&cache, &r)?;
    let eval = |l: &Layer<f64>, xs: &[Tensor<f64>]| -> Result<f64> {
        let refs: Vec<&Tensor<f64>> = xs.iter().collect();
        Ok(probe(&l.apply(&refs, mode)?, &r))
    };
    let mut report = LayerCheck::default();
    for (i, g) in gin.iter().enumerate() {
        let mut xs = inputs.to_vec();
        let mut numeric = Vec::with_capacity(g.len());
        for j in 0..g.len() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + FD_STEP;
            let up = eval(layer, &xs)?;
            xs[i].data_mut()[j] = orig - FD_STEP;
            let down = eval(layer, &xs)?;
            xs[i].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        report.inputs = report.inputs.max(max_rel_error(g.data(), &numeric));
    }
    let mut analytic_all = Vec::new();
    let mut numeric_all = Vec::new();
    for (k, g) in gparams.iter().enumerate() {
        let mut l = layer.clone();
        let mut numeric = Vec::with_capacity(g.len());
        for j in 0..g.len() {
            let orig = l.params()[k].data()[j];
            l.params_mut()[k].data_mut()[j] = orig + FD_STEP;
            let up = eval(&l, inputs)?;
            l.params_mut()[k].data_mut()[j] = orig - FD_STEP;
            let down = eval(&l, inputs)?;
            l.params_mut()[k].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        analytic_all.extend_from_slice(g.data());
        numeric_all.extend(numeric);
    }
    report.params = max_rel_error(&analytic_all, &numeric_all);
    Ok(report)
}

/// Spot-check `samples` random parameter entries of a whole graph.
///
/// The error is the worst deviation normalised by the largest gradient
/// magnitude among the sampled entries. An entry whose central differences
/// at `FD_STEP` and `FD_STEP / 2` disagree lies within a step of a ReLU kink
/// somewhere in the network; it is redrawn, up to `20 × samples` draws.
pub fn check_graph_params<R: Rng + ?Sized>(
    graph: &Graph<f64>,
    input: &Tensor<f64>,
    mode: Mode,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let (y, trace) = graph.forward(input, mode)?;
    let r = random_tensor(y.dims(), rng);
    let (_, grads) = graph.backward(&trace, &r)?;
    let flat = Graph::flatten_grads(grads);
    let sizes: Vec<usize> = flat.iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let mut analytic = Vec::with_capacity(samples);
    let mut numeric = Vec::with_capacity(samples);
    let mut g = graph.clone();
    let central = |g: &mut Graph<f64>, k: usize, idx: usize, h: f64| -> Result<f64> {
        let orig = g.params()[k].data()[idx];
        g.params_mut()[k].data_mut()[idx] = orig + h;
        let up = probe(&g.forward(input, mode)?.0, &r);
        g.params_mut()[k].data_mut()[idx] = orig - h;
        let down = probe(&g.forward(input, mode)?.0, &r);
        g.params_mut()[k].data_mut()[idx] = orig;
        Ok((up - down) / (2.0 * h))
    };
    let mut draws = 0;
    while analytic.len() < samples {
        if draws == 20 * samples {
            return Err(Error::NonFinite(format!(
                "only {} of {samples} sampled entries were away from ReLU kinks",
                analytic.len()
            )));
        }
        draws += 1;
        let mut idx = rng.random_range(0..total);
        let mut k = 0;
        while idx >= sizes[k] {
            idx -= sizes[k];
            k += 1;
        }
        let full = central(&mut g, k, idx, FD_STEP)?;
        let half = central(&mut g, k, idx, FD_STEP / 2.0)?;
        if (full - half).abs() > 1e-6 * full.abs().max(half.abs()).max(1e-8) {
            continue;
        }
        analytic.push(flat[k].data()[idx]);
        numeric.push(full);
    }
    Ok(max_rel_error(&analytic, &numeric))
}
