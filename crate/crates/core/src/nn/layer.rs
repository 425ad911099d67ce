//! Layer inventory: hyperparameters, parameters and per-layer forward/backward.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{self, BnStats, ConvGeom};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "eval" => Ok(Mode::Eval),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Square kernel over `(W, H)`, applied independently per time step.
    Conv2dSpatial {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Kernel over `T`, applied independently per spatial site.
    Conv1dTemporal {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Spatial conv, optional batch norm, ReLU, temporal conv.
    Conv21dBlock {
        in_channels: usize,
        mid_channels: usize,
        out_channels: usize,
        spatial_kernel: usize,
        spatial_stride: usize,
        spatial_padding: usize,
        temporal_kernel: usize,
        temporal_stride: usize,
        temporal_padding: usize,
        batch_norm: bool,
    },
    /// Weight layout `(Cin, Cout, kt, kw, kh)`.
    TransposedConv3d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    },
    UpsampleNearest {
        factor: [usize; 3],
    },
    Conv3d1x1 {
        in_channels: usize,
        out_channels: usize,
        stride: [usize; 3],
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    Sigmoid,
    GlobalAvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    /// Elementwise sum of two or more inputs.
    Add,
}

/// Mid-channel count that matches the parameter budget of a full
/// `t×k×k` 3D kernel, at least 1.
pub fn conv21d_mid_channels(c_in: usize, c_out: usize, k: usize, t: usize) -> usize {
    let full = t * k * k * c_in * c_out;
    let per_mid = k * k * c_in + t * c_out;
    (full / per_mid).max(1)
}

fn check_padding(kernel: usize, padding: usize, what: &str) -> Result<()> {
    if kernel == 0 || padding >= kernel {
        return Err(shape_err(format!(
            "{what}: kernel {kernel} with padding {padding} is inconsistent"
        )));
    }
    Ok(())
}

impl LayerSpec {
    pub fn conv21d(
        c_in: usize,
        c_out: usize,
        spatial_stride: usize,
        temporal_stride: usize,
        batch_norm: bool,
    ) -> Self {
        let (temporal_kernel, temporal_padding) = if temporal_stride == 2 { (4, 1) } else { (3, 1) };
        LayerSpec::Conv21dBlock {
            in_channels: c_in,
            mid_channels: conv21d_mid_channels(c_in, c_out, 3, 3),
            out_channels: c_out,
            spatial_kernel: 3,
            spatial_stride,
            spatial_padding: 1,
            temporal_kernel,
            temporal_stride,
            temporal_padding,
            batch_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(shape_err(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Conv2dSpatial {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            }
            | LayerSpec::Conv1dTemporal {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                positive(in_channels, "in_channels")?;
                positive(out_channels, "out_channels")?;
                positive(stride, "stride")?;
                check_padding(kernel, padding, "conv")
            }
            LayerSpec::Conv21dBlock {
                in_channels,
                mid_channels,
                out_channels,
                spatial_kernel,
                spatial_stride,
                spatial_padding,
                temporal_kernel,
                temporal_stride,
                temporal_padding,
                ..
            } => {
                positive(in_channels, "in_channels")?;
                positive(mid_channels, "mid_channels")?;
                positive(out_channels, "out_channels")?;
                positive(spatial_stride, "spatial_stride")?;
                positive(temporal_stride, "temporal_stride")?;
                check_padding(spatial_kernel, spatial_padding, "spatial conv")?;
                check_padding(temporal_kernel, temporal_padding, "temporal conv")
            }
            LayerSpec::TransposedConv3d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                positive(in_channels, "in_channels")?;
                positive(out_channels, "out_channels")?;
                for a in 0..3 {
                    positive(stride[a], "stride")?;
                    check_padding(kernel[a], padding[a], "transposed conv")?;
                }
                Ok(())
            }
            LayerSpec::UpsampleNearest { factor } => {
                factor.iter().try_for_each(|&f| positive(f, "upsample factor"))
            }
            LayerSpec::Conv3d1x1 {
                in_channels,
                out_channels,
                stride,
            } => {
                positive(in_channels, "in_channels")?;
                positive(out_channels, "out_channels")?;
                stride.iter().try_for_each(|&s| positive(s, "stride"))
            }
            LayerSpec::BatchNorm { channels } => positive(channels, "channels"),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                positive(in_features, "in_features")?;
                positive(out_features, "out_features")
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::GlobalAvgPool | LayerSpec::Add => Ok(()),
        }
    }

    /// Names and shapes of trainable parameters, in storage order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2dSpatial {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels, 1, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::Conv1dTemporal {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels, kernel, 1, 1]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::Conv21dBlock {
                in_channels,
                mid_channels,
                out_channels,
                spatial_kernel,
                temporal_kernel,
                batch_norm,
                ..
            } => {
                let mut v = vec![
                    (
                        "spatial.weight",
                        vec![mid_channels, in_channels, 1, spatial_kernel, spatial_kernel],
                    ),
                    ("spatial.bias", vec![mid_channels]),
                ];
                if batch_norm {
                    v.push(("bn.gamma", vec![mid_channels]));
                    v.push(("bn.beta", vec![mid_channels]));
                }
                v.push((
                    "temporal.weight",
                    vec![out_channels, mid_channels, temporal_kernel, 1, 1],
                ));
                v.push(("temporal.bias", vec![out_channels]));
                v
            }
            LayerSpec::TransposedConv3d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                (
                    "weight",
                    vec![in_channels, out_channels, kernel[0], kernel[1], kernel[2]],
                ),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::Conv3d1x1 {
                in_channels,
                out_channels,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels, 1, 1, 1]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::BatchNorm { channels } => {
                vec![("gamma", vec![channels]), ("beta", vec![channels])]
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => vec![
                ("weight", vec![out_features, in_features]),
                ("bias", vec![out_features]),
            ],
            LayerSpec::UpsampleNearest { .. }
            | LayerSpec::Relu
            | LayerSpec::Sigmoid
            | LayerSpec::GlobalAvgPool
            | LayerSpec::Add => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::BatchNorm { channels } => vec![
                ("running_mean", vec![channels]),
                ("running_var", vec![channels]),
            ],
            LayerSpec::Conv21dBlock {
                mid_channels,
                batch_norm: true,
                ..
            } => vec![
                ("bn.running_mean", vec![mid_channels]),
                ("bn.running_var", vec![mid_channels]),
            ],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, d)| d.iter().product::<usize>())
            .sum()
    }

    fn spatial_geom(kernel: usize, stride: usize, padding: usize) -> ConvGeom {
        ConvGeom::new([1, kernel, kernel], [1, stride, stride], [0, padding, padding])
    }

    fn temporal_geom(kernel: usize, stride: usize, padding: usize) -> ConvGeom {
        ConvGeom::new([kernel, 1, 1], [stride, 1, 1], [padding, 0, 0])
    }
}

/// Values an op keeps from its forward pass.
#[derive(Clone, Debug)]
pub struct Cache<S: Scalar> {
    inputs: Vec<Tensor<S>>,
    saved: Vec<Tensor<S>>,
    stats: Option<BnStats>,
    mode: Mode,
}

impl<S: Scalar> Cache<S> {
    pub fn batch_stats(&self) -> Option<&BnStats> {
        self.stats.as_ref()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<S: Scalar = f32> {
    spec: LayerSpec,
    params: Vec<Tensor<S>>,
    buffers: Vec<Tensor<S>>,
}

fn dims_tensor<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    Tensor::from_fn(&[x.rank()], |i| S::from_f64(x.dims()[i] as f64))
}

fn init_buffer<S: Scalar>(name: &str, dims: &[usize]) -> Tensor<S> {
    if name.ends_with("running_var") {
        Tensor::filled(dims, S::one())
    } else {
        Tensor::zeros(dims)
    }
}

impl<S: Scalar> Layer<S> {
    /// He fan-in normal weights, zero biases, unit gamma, zero beta.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .param_shapes()
            .into_iter()
            .map(|(name, dims)| {
                if name.ends_with("bias") || name.ends_with("beta") {
                    Tensor::zeros(&dims)
                } else if name.ends_with("gamma") {
                    Tensor::filled(&dims, S::one())
                } else {
                    // Axis 0 is the output side for convs and linear; the
                    // transposed conv stores Cin there, so axis 1 onward is
                    // the fan seen by each output site in both layouts.
                    let fan_in = dims[1..].iter().product::<usize>();
                    let std = (2.0 / fan_in as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("positive std");
                    Tensor::from_fn(&dims, |_| S::from_f64(normal.sample(rng)))
                }
            })
            .collect();
        let buffers = spec
            .buffer_shapes()
            .into_iter()
            .map(|(name, dims)| init_buffer(name, &dims))
            .collect();
        Ok(Layer {
            spec,
            params,
            buffers,
        })
    }

    pub fn from_parts(spec: LayerSpec, params: Vec<Tensor<S>>, buffers: Vec<Tensor<S>>) -> Result<Self> {
        spec.validate()?;
        let ps = spec.param_shapes();
        let bs = spec.buffer_shapes();
        if ps.len() != params.len() || bs.len() != buffers.len() {
            return Err(shape_err("parameter count does not match layer spec"));
        }
        for ((name, dims), t) in ps.iter().zip(&params).chain(bs.iter().zip(&buffers)) {
            t.ensure_dims(dims, name)?;
        }
        Ok(Layer {
            spec,
            params,
            buffers,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Tensor<S>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.buffers
    }

    pub fn cast<T: Scalar>(&self) -> Layer<T> {
        Layer {
            spec: self.spec.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            buffers: self.buffers.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn forward(&self, input: &Tensor<S>, mode: Mode) -> Result<(Tensor<S>, Cache<S>)> {
        self.forward_many(&[input], mode)
    }

    /// Forward over one input, or several for [`LayerSpec::Add`].
    pub fn forward_many(&self, inputs: &[&Tensor<S>], mode: Mode) -> Result<(Tensor<S>, Cache<S>)> {
        let (out, cache) = self.run(inputs, mode, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    /// Forward without retaining anything for backward.
    pub fn apply(&self, inputs: &[&Tensor<S>], mode: Mode) -> Result<Tensor<S>> {
        Ok(self.run(inputs, mode, false)?.0)
    }

    fn single<'a>(&self, inputs: &[&'a Tensor<S>]) -> Result<&'a Tensor<S>> {
        match inputs {
            [x] => Ok(x),
            _ => Err(shape_err(format!(
                "{:?} expects one input, got {}",
                self.spec,
                inputs.len()
            ))),
        }
    }

    fn run(&self, inputs: &[&Tensor<S>], mode: Mode, keep: bool) -> Result<(Tensor<S>, Option<Cache<S>>)> {
        let p = &self.params;
        let mut saved = Vec::new();
        let mut stats = None;
        let mut keep_input = keep;
        let out = match self.spec {
            LayerSpec::Add => {
                keep_input = false;
                let (first, rest) = inputs
                    .split_first()
                    .ok_or_else(|| shape_err("add needs at least one input"))?;
                let mut acc = (*first).clone();
                for t in rest {
                    acc.add_assign(t)?;
                }
                acc
            }
            LayerSpec::Conv2dSpatial {
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = LayerSpec::spatial_geom(kernel, stride, padding);
                ops::conv3d_forward(self.single(inputs)?, &p[0], &p[1], &g)?
            }
            LayerSpec::Conv1dTemporal {
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = LayerSpec::temporal_geom(kernel, stride, padding);
                ops::conv3d_forward(self.single(inputs)?, &p[0], &p[1], &g)?
            }
            LayerSpec::Conv3d1x1 { stride, .. } => {
                let g = ConvGeom::new([1, 1, 1], stride, [0, 0, 0]);
                ops::conv3d_forward(self.single(inputs)?, &p[0], &p[1], &g)?
            }
            LayerSpec::TransposedConv3d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(kernel, stride, padding);
                ops::conv_transpose3d_forward(self.single(inputs)?, &p[0], &p[1], &g)?
            }
            LayerSpec::Conv21dBlock {
                spatial_kernel,
                spatial_stride,
                spatial_padding,
                temporal_kernel,
                temporal_stride,
                temporal_padding,
                batch_norm,
                ..
            } => {
                let x = self.single(inputs)?;
                let gs = LayerSpec::spatial_geom(spatial_kernel, spatial_stride, spatial_padding);
                let gt = LayerSpec::temporal_geom(temporal_kernel, temporal_stride, temporal_padding);
                let z = ops::conv3d_forward(x, &p[0], &p[1], &gs)?;
                let (normed, wi) = if batch_norm {
                    match mode {
                        Mode::Train => {
                            let (y, xhat, st) = ops::batch_norm_train(&z, &p[2], &p[3], BN_EPS)?;
                            saved.push(xhat);
                            stats = Some(st);
                            (y, 4)
                        }
                        Mode::Eval => {
                            let y = ops::batch_norm_eval(
                                &z,
                                &p[2],
                                &p[3],
                                &self.buffers[0],
                                &self.buffers[1],
                                BN_EPS,
                            )?;
                            saved.push(z);
                            (y, 4)
                        }
                    }
                } else {
                    (z, 2)
                };
                let r = ops::relu(&normed);
                let out = ops::conv3d_forward(&r, &p[wi], &p[wi + 1], &gt)?;
                saved.push(r);
                out
            }
            LayerSpec::UpsampleNearest { factor } => {
                keep_input = false;
                let x = self.single(inputs)?;
                saved.push(dims_tensor(x));
                ops::upsample_nearest(x, factor)?
            }
            LayerSpec::BatchNorm { .. } => {
                let x = self.single(inputs)?;
                match mode {
                    Mode::Train => {
                        keep_input = false;
                        let (y, xhat, st) = ops::batch_norm_train(x, &p[0], &p[1], BN_EPS)?;
                        saved.push(xhat);
                        stats = Some(st);
                        y
                    }
                    Mode::Eval => ops::batch_norm_eval(
                        x,
                        &p[0],
                        &p[1],
                        &self.buffers[0],
                        &self.buffers[1],
                        BN_EPS,
                    )?,
                }
            }
            LayerSpec::Relu => ops::relu(self.single(inputs)?),
            LayerSpec::Sigmoid => {
                keep_input = false;
                let y = ops::sigmoid(self.single(inputs)?);
                if keep {
                    saved.push(y.clone());
                }
                y
            }
            LayerSpec::GlobalAvgPool => {
                keep_input = false;
                let x = self.single(inputs)?;
                saved.push(dims_tensor(x));
                ops::global_avg_pool(x)?
            }
            LayerSpec::Linear { .. } => ops::linear(self.single(inputs)?, &p[0], &p[1])?,
        };
        if !keep {
            return Ok((out, None));
        }
        let inputs = if keep_input {
            inputs.iter().map(|t| (*t).clone()).collect()
        } else {
            vec![Tensor::zeros(&[0]); inputs.len()]
        };
        Ok((
            out,
            Some(Cache {
                inputs,
                saved,
                stats,
                mode,
            }),
        ))
    }

    /// Returns `(grad per input, grad per parameter)`.
    pub fn backward(&self, cache: &Cache<S>, grad: &Tensor<S>) -> Result<(Vec<Tensor<S>>, Vec<Tensor<S>>)> {
        let p = &self.params;
        let x = || cache.inputs.first().ok_or_else(|| shape_err("empty cache"));
        let saved_dims = |i: usize| -> Vec<usize> {
            cache.saved[i].data().iter().map(|v| v.as_f64() as usize).collect()
        };
        Ok(match self.spec {
            LayerSpec::Add => (vec![grad.clone(); cache.inputs.len()], Vec::new()),
            LayerSpec::Conv2dSpatial {
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = LayerSpec::spatial_geom(kernel, stride, padding);
                let (dx, dw, db) = ops::conv3d_backward(x()?, &p[0], &g, grad)?;
                (vec![dx], vec![dw, db])
            }
            LayerSpec::Conv1dTemporal {
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = LayerSpec::temporal_geom(kernel, stride, padding);
                let (dx, dw, db) = ops::conv3d_backward(x()?, &p[0], &g, grad)?;
                (vec![dx], vec![dw, db])
            }
            LayerSpec::Conv3d1x1 { stride, .. } => {
                let g = ConvGeom::new([1, 1, 1], stride, [0, 0, 0]);
                let (dx, dw, db) = ops::conv3d_backward(x()?, &p[0], &g, grad)?;
                (vec![dx], vec![dw, db])
            }
            LayerSpec::TransposedConv3d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(kernel, stride, padding);
                let (dx, dw, db) = ops::conv_transpose3d_backward(x()?, &p[0], &g, grad)?;
                (vec![dx], vec![dw, db])
            }
            LayerSpec::Conv21dBlock {
                spatial_kernel,
                spatial_stride,
                spatial_padding,
                temporal_kernel,
                temporal_stride,
                temporal_padding,
                batch_norm,
                ..
            } => {
                let gs = LayerSpec::spatial_geom(spatial_kernel, spatial_stride, spatial_padding);
                let gt = LayerSpec::temporal_geom(temporal_kernel, temporal_stride, temporal_padding);
                let r = cache.saved.last().ok_or_else(|| shape_err("empty cache"))?;
                let wi = if batch_norm { 4 } else { 2 };
                let (dr, dwt, dbt) = ops::conv3d_backward(r, &p[wi], &gt, grad)?;
                let dn = ops::relu_backward(r, &dr);
                let mut grads = Vec::with_capacity(6);
                let dz = if batch_norm {
                    let (dz, dg, dbeta) = match cache.mode {
                        Mode::Train => ops::batch_norm_train_backward(
                            &cache.saved[0],
                            &p[2],
                            cache.stats.as_ref().ok_or_else(|| shape_err("missing batch stats"))?,
                            BN_EPS,
                            &dn,
                        )?,
                        Mode::Eval => ops::batch_norm_eval_backward(
                            &cache.saved[0],
                            &p[2],
                            &self.buffers[0],
                            &self.buffers[1],
                            BN_EPS,
                            &dn,
                        )?,
                    };
                    grads.push(dg);
                    grads.push(dbeta);
                    dz
                } else {
                    dn
                };
                let (dx, dws, dbs) = ops::conv3d_backward(x()?, &p[0], &gs, &dz)?;
                let mut all = vec![dws, dbs];
                all.extend(grads);
                all.push(dwt);
                all.push(dbt);
                (vec![dx], all)
            }
            LayerSpec::UpsampleNearest { factor } => {
                let dx = ops::upsample_nearest_backward(&saved_dims(0), factor, grad)?;
                (vec![dx], Vec::new())
            }
            LayerSpec::BatchNorm { .. } => {
                let (dx, dg, db) = match cache.mode {
                    Mode::Train => ops::batch_norm_train_backward(
                        &cache.saved[0],
                        &p[0],
                        cache.stats.as_ref().ok_or_else(|| shape_err("missing batch stats"))?,
                        BN_EPS,
                        grad,
                    )?,
                    Mode::Eval => ops::batch_norm_eval_backward(
                        x()?,
                        &p[0],
                        &self.buffers[0],
                        &self.buffers[1],
                        BN_EPS,
                        grad,
                    )?,
                };
                (vec![dx], vec![dg, db])
            }
            LayerSpec::Relu => {
                let x = x()?;
                grad.ensure_same_dims(x, "relu grad")?;
                (vec![ops::relu_backward(x, grad)], Vec::new())
            }
            LayerSpec::Sigmoid => {
                let y = &cache.saved[0];
                grad.ensure_same_dims(y, "sigmoid grad")?;
                (vec![ops::sigmoid_backward(y, grad)], Vec::new())
            }
            LayerSpec::GlobalAvgPool => {
                let dx = ops::global_avg_pool_backward(&saved_dims(0), grad)?;
                (vec![dx], Vec::new())
            }
            LayerSpec::Linear { .. } => {
                let (dx, dw, db) = ops::linear_backward(x()?, &p[0], grad)?;
                (vec![dx], vec![dw, db])
            }
        })
    }

    /// Fold the batch statistics of a train-mode forward into the running
    /// estimates (unbiased variance).
    pub fn update_running_stats(&mut self, cache: &Cache<S>, momentum: f64) {
        let Some(stats) = cache.stats.as_ref() else {
            return;
        };
        if self.buffers.len() != 2 {
            return;
        }
        let unbias = if stats.count > 1 {
            stats.count as f64 / (stats.count - 1) as f64
        } else {
            1.0
        };
        let (rm, rv) = self.buffers.split_at_mut(1);
        for (ch, (m, v)) in rm[0].data_mut().iter_mut().zip(rv[0].data_mut()).enumerate() {
            *m = S::from_f64((1.0 - momentum) * m.as_f64() + momentum * stats.mean[ch]);
            *v = S::from_f64((1.0 - momentum) * v.as_f64() + momentum * stats.var[ch] * unbias);
        }
    }
}
