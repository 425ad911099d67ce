//! Kernels for the layer inventory. Spatiotemporal tensors use the 5-axis
//! layout `(N, C, T, W, H)`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::{matmul, Scalar, Tensor};

/// Kernel, stride and zero padding along `(T, W, H)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeom {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        ConvGeom {
            kernel,
            stride,
            padding,
        }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.padding == [0, 0, 0]
    }

    /// Output extent of a convolution over `input`.
    pub fn conv_out(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel[a] || self.stride[a] == 0 {
                return Err(shape_err(format!(
                    "kernel {:?} does not fit input {input:?} with padding {:?}",
                    self.kernel, self.padding
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    /// Output extent of a transposed convolution over `input`.
    pub fn transposed_out(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let full = (input[a] - 1) * self.stride[a] + self.kernel[a];
            if full <= 2 * self.padding[a] {
                return Err(shape_err(format!(
                    "transposed kernel {:?} with padding {:?} collapses input {input:?}",
                    self.kernel, self.padding
                )));
            }
            out[a] = full - 2 * self.padding[a];
        }
        Ok(out)
    }
}

fn dims5(x: &[usize], what: &str) -> Result<[usize; 5]> {
    if x.len() != 5 {
        return Err(shape_err(format!("{what}: expected (N, C, T, W, H), got {x:?}")));
    }
    Ok([x[0], x[1], x[2], x[3], x[4]])
}

/// Unfold one sample `(C, T, W, H)` into a `(C·kt·kw·kh) × (To·Wo·Ho)` matrix.
fn im2col<S: Scalar>(
    x: &[S],
    channels: usize,
    input: [usize; 3],
    out: [usize; 3],
    g: &ConvGeom,
    cols: &mut [S],
) {
    let [t_in, w_in, h_in] = input;
    let [t_out, w_out, h_out] = out;
    let [kt, kw, kh] = g.kernel;
    let [st, sw, sh] = g.stride;
    let [pt, pw, ph] = g.padding;
    let p_out = t_out * w_out * h_out;
    let mut row = 0;
    for c in 0..channels {
        let xc = &x[c * t_in * w_in * h_in..];
        for dt in 0..kt {
            for dw in 0..kw {
                for dh in 0..kh {
                    let dst = &mut cols[row * p_out..(row + 1) * p_out];
                    let mut o = 0;
                    for to in 0..t_out {
                        let ti = (to * st + dt) as isize - pt as isize;
                        if ti < 0 || ti >= t_in as isize {
                            dst[o..o + w_out * h_out].iter_mut().for_each(|v| *v = S::zero());
                            o += w_out * h_out;
                            continue;
                        }
                        for wo in 0..w_out {
                            let wi = (wo * sw + dw) as isize - pw as isize;
                            if wi < 0 || wi >= w_in as isize {
                                dst[o..o + h_out].iter_mut().for_each(|v| *v = S::zero());
                                o += h_out;
                                continue;
                            }
                            let base = (ti as usize * w_in + wi as usize) * h_in;
                            for ho in 0..h_out {
                                let hi = (ho * sh + dh) as isize - ph as isize;
                                dst[o] = if hi < 0 || hi >= h_in as isize {
                                    S::zero()
                                } else {
                                    xc[base + hi as usize]
                                };
                                o += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `(C, T, W, H)`.
fn col2im<S: Scalar>(
    cols: &[S],
    channels: usize,
    input: [usize; 3],
    out: [usize; 3],
    g: &ConvGeom,
    x: &mut [S],
) {
    let [t_in, w_in, h_in] = input;
    let [t_out, w_out, h_out] = out;
    let [kt, kw, kh] = g.kernel;
    let [st, sw, sh] = g.stride;
    let [pt, pw, ph] = g.padding;
    let p_out = t_out * w_out * h_out;
    let mut row = 0;
    for c in 0..channels {
        let xc = &mut x[c * t_in * w_in * h_in..(c + 1) * t_in * w_in * h_in];
        for dt in 0..kt {
            for dw in 0..kw {
                for dh in 0..kh {
                    let src = &cols[row * p_out..(row + 1) * p_out];
                    let mut o = 0;
                    for to in 0..t_out {
                        let ti = (to * st + dt) as isize - pt as isize;
                        if ti < 0 || ti >= t_in as isize {
                            o += w_out * h_out;
                            continue;
                        }
                        for wo in 0..w_out {
                            let wi = (wo * sw + dw) as isize - pw as isize;
                            if wi < 0 || wi >= w_in as isize {
                                o += h_out;
                                continue;
                            }
                            let base = (ti as usize * w_in + wi as usize) * h_in;
                            for ho in 0..h_out {
                                let hi = (ho * sh + dh) as isize - ph as isize;
                                if hi >= 0 && hi < h_in as isize {
                                    xc[base + hi as usize] += src[o];
                                }
                                o += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// 3D convolution. `w` is `(Cout, Cin, kt, kw, kh)`, `b` is `(Cout)`.
pub fn conv3d_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    g: &ConvGeom,
) -> Result<Tensor<S>> {
    let [n, c_in, t, wd, h] = dims5(x.dims(), "conv3d input")?;
    let c_out = w.dims()[0];
    w.ensure_dims(&[c_out, c_in, g.kernel[0], g.kernel[1], g.kernel[2]], "conv3d weight")?;
    b.ensure_dims(&[c_out], "conv3d bias")?;
    let out = g.conv_out([t, wd, h])?;
    let p_in = t * wd * h;
    let p_out: usize = out.iter().product();
    let k = c_in * g.kernel_volume();
    let mut y = Tensor::zeros(&[n, c_out, out[0], out[1], out[2]]);
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![S::zero(); k * p_out] };
    for s in 0..n {
        let xs = &x.data()[s * c_in * p_in..(s + 1) * c_in * p_in];
        let cols_ref: &[S] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, c_in, [t, wd, h], out, g, &mut cols);
            &cols
        };
        let ys = &mut y.data_mut()[s * c_out * p_out..(s + 1) * c_out * p_out];
        for (co, chunk) in ys.chunks_mut(p_out).enumerate() {
            let bias = b.data()[co];
            chunk.iter_mut().for_each(|v| *v = bias);
        }
        matmul(w.data(), false, cols_ref, false, ys, c_out, k, p_out, true);
    }
    Ok(y)
}

/// Gradients `(dx, dw, db)` of [`conv3d_forward`].
pub fn conv3d_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    g: &ConvGeom,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let [n, c_in, t, wd, h] = dims5(x.dims(), "conv3d input")?;
    let c_out = w.dims()[0];
    let out = g.conv_out([t, wd, h])?;
    dy.ensure_dims(&[n, c_out, out[0], out[1], out[2]], "conv3d grad")?;
    let p_in = t * wd * h;
    let p_out: usize = out.iter().product();
    let k = c_in * g.kernel_volume();
    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(w.dims());
    let mut db = Tensor::zeros(&[c_out]);
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![S::zero(); k * p_out] };
    let mut dcols = vec![S::zero(); k * p_out];
    for s in 0..n {
        let xs = &x.data()[s * c_in * p_in..(s + 1) * c_in * p_in];
        let dys = &dy.data()[s * c_out * p_out..(s + 1) * c_out * p_out];
        for (co, chunk) in dys.chunks(p_out).enumerate() {
            db.data_mut()[co] += chunk.iter().copied().sum();
        }
        let cols_ref: &[S] = if pointwise {
            xs
        } else {
            im2col(xs, c_in, [t, wd, h], out, g, &mut cols);
            &cols
        };
        // dW (Cout×K) += dY (Cout×P) · colsᵀ (P×K)
        matmul(dys, false, cols_ref, true, dw.data_mut(), c_out, p_out, k, true);
        let dxs = &mut dx.data_mut()[s * c_in * p_in..(s + 1) * c_in * p_in];
        if pointwise {
            matmul(w.data(), true, dys, false, dxs, k, c_out, p_out, false);
        } else {
            matmul(w.data(), true, dys, false, &mut dcols, k, c_out, p_out, false);
            col2im(&dcols, c_in, [t, wd, h], out, g, dxs);
        }
    }
    Ok((dx, dw, db))
}

/// Transposed 3D convolution. `w` is `(Cin, Cout, kt, kw, kh)`.
pub fn conv_transpose3d_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    g: &ConvGeom,
) -> Result<Tensor<S>> {
    let [n, c_in, t, wd, h] = dims5(x.dims(), "transposed conv input")?;
    let c_out = w.dims()[1];
    w.ensure_dims(&[c_in, c_out, g.kernel[0], g.kernel[1], g.kernel[2]], "transposed conv weight")?;
    b.ensure_dims(&[c_out], "transposed conv bias")?;
    let out = g.transposed_out([t, wd, h])?;
    let p_in = t * wd * h;
    let p_out: usize = out.iter().product();
    let k = c_out * g.kernel_volume();
    let mut y = Tensor::zeros(&[n, c_out, out[0], out[1], out[2]]);
    let mut cols = vec![S::zero(); k * p_in];
    for s in 0..n {
        let xs = &x.data()[s * c_in * p_in..(s + 1) * c_in * p_in];
        // cols (K×P_in) = Wᵀ (K×Cin) · X (Cin×P_in)
        matmul(w.data(), true, xs, false, &mut cols, k, c_in, p_in, false);
        let ys = &mut y.data_mut()[s * c_out * p_out..(s + 1) * c_out * p_out];
        col2im(&cols, c_out, out, [t, wd, h], g, ys);
        for (co, chunk) in ys.chunks_mut(p_out).enumerate() {
            let bias = b.data()[co];
            chunk.iter_mut().for_each(|v| *v += bias);
        }
    }
    Ok(y)
}

pub fn conv_transpose3d_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    g: &ConvGeom,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let [n, c_in, t, wd, h] = dims5(x.dims(), "transposed conv input")?;
    let c_out = w.dims()[1];
    let out = g.transposed_out([t, wd, h])?;
    dy.ensure_dims(&[n, c_out, out[0], out[1], out[2]], "transposed conv grad")?;
    let p_in = t * wd * h;
    let p_out: usize = out.iter().product();
    let k = c_out * g.kernel_volume();
    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(w.dims());
    let mut db = Tensor::zeros(&[c_out]);
    let mut dcols = vec![S::zero(); k * p_in];
    for s in 0..n {
        let xs = &x.data()[s * c_in * p_in..(s + 1) * c_in * p_in];
        let dys = &dy.data()[s * c_out * p_out..(s + 1) * c_out * p_out];
        for (co, chunk) in dys.chunks(p_out).enumerate() {
            db.data_mut()[co] += chunk.iter().copied().sum();
        }
        im2col(dys, c_out, out, [t, wd, h], g, &mut dcols);
        let dxs = &mut dx.data_mut()[s * c_in * p_in..(s + 1) * c_in * p_in];
        // dX (Cin×P_in) = W (Cin×K) · dcols (K×P_in)
        matmul(w.data(), false, &dcols, false, dxs, c_in, k, p_in, false);
        // dW (Cin×K) += X (Cin×P_in) · dcolsᵀ (P_in×K)
        matmul(xs, false, &dcols, true, dw.data_mut(), c_in, p_in, k, true);
    }
    Ok((dx, dw, db))
}

/// Per-channel statistics saved by a train-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

fn channel_layout(dims: &[usize]) -> Result<(usize, usize, usize)> {
    if dims.len() < 2 {
        return Err(shape_err(format!("batch norm needs (N, C, ...), got {dims:?}")));
    }
    Ok((dims[0], dims[1], dims[2..].iter().product()))
}

/// Train-mode batch norm; returns output, normalised input and batch stats.
pub fn batch_norm_train<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    eps: f64,
) -> Result<(Tensor<S>, Tensor<S>, BnStats)> {
    let (n, c, inner) = channel_layout(x.dims())?;
    gamma.ensure_dims(&[c], "batch norm gamma")?;
    beta.ensure_dims(&[c], "batch norm beta")?;
    let count = n * inner;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    let xd = x.data();
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            s += xd[(b * c + ch) * inner..(b * c + ch + 1) * inner]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
        let m = s / count as f64;
        let mut ss = 0.0;
        for b in 0..n {
            ss += xd[(b * c + ch) * inner..(b * c + ch + 1) * inner]
                .iter()
                .map(|v| (v.as_f64() - m).powi(2))
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = ss / count as f64;
    }
    let mut xhat = Tensor::zeros(x.dims());
    let mut y = Tensor::zeros(x.dims());
    for b in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + eps).sqrt();
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            for i in r {
                let xh = S::from_f64((xd[i].as_f64() - mean[ch]) * inv);
                xhat.data_mut()[i] = xh;
                y.data_mut()[i] = g * xh + bt;
            }
        }
    }
    Ok((y, xhat, BnStats { mean, var, count }))
}

pub fn batch_norm_eval<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running_mean: &Tensor<S>,
    running_var: &Tensor<S>,
    eps: f64,
) -> Result<Tensor<S>> {
    let (n, c, inner) = channel_layout(x.dims())?;
    for (t, what) in [(gamma, "gamma"), (beta, "beta"), (running_mean, "running mean"), (running_var, "running var")] {
        t.ensure_dims(&[c], what)?;
    }
    let mut y = Tensor::zeros(x.dims());
    for ch in 0..c {
        let inv = 1.0 / (running_var.data()[ch].as_f64() + eps).sqrt();
        let scale = S::from_f64(gamma.data()[ch].as_f64() * inv);
        let shift = S::from_f64(beta.data()[ch].as_f64() - running_mean.data()[ch].as_f64() * gamma.data()[ch].as_f64() * inv);
        for b in 0..n {
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            for i in r {
                y.data_mut()[i] = x.data()[i] * scale + shift;
            }
        }
    }
    Ok(y)
}

/// Gradients `(dx, dgamma, dbeta)` of train-mode batch norm.
pub fn batch_norm_train_backward<S: Scalar>(
    xhat: &Tensor<S>,
    gamma: &Tensor<S>,
    stats: &BnStats,
    eps: f64,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (n, c, inner) = channel_layout(dy.dims())?;
    dy.ensure_same_dims(xhat, "batch norm grad")?;
    let m = stats.count as f64;
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    let mut dx = Tensor::zeros(dy.dims());
    for ch in 0..c {
        let (mut sdy, mut sdyx) = (0.0, 0.0);
        for b in 0..n {
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            for i in r {
                let g = dy.data()[i].as_f64();
                sdy += g;
                sdyx += g * xhat.data()[i].as_f64();
            }
        }
        dgamma.data_mut()[ch] = S::from_f64(sdyx);
        dbeta.data_mut()[ch] = S::from_f64(sdy);
        let inv = 1.0 / (stats.var[ch] + eps).sqrt();
        let k = gamma.data()[ch].as_f64() * inv / m;
        for b in 0..n {
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            for i in r {
                let v = k * (m * dy.data()[i].as_f64() - sdy - xhat.data()[i].as_f64() * sdyx);
                dx.data_mut()[i] = S::from_f64(v);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Gradients of eval-mode batch norm (running statistics are constants).
pub fn batch_norm_eval_backward<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    running_mean: &Tensor<S>,
    running_var: &Tensor<S>,
    eps: f64,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (n, c, inner) = channel_layout(dy.dims())?;
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    let mut dx = Tensor::zeros(dy.dims());
    for ch in 0..c {
        let inv = 1.0 / (running_var.data()[ch].as_f64() + eps).sqrt();
        let mu = running_mean.data()[ch].as_f64();
        let scale = S::from_f64(gamma.data()[ch].as_f64() * inv);
        let (mut sg, mut sb) = (0.0, 0.0);
        for b in 0..n {
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            for i in r {
                let g = dy.data()[i];
                sb += g.as_f64();
                sg += g.as_f64() * (x.data()[i].as_f64() - mu) * inv;
                dx.data_mut()[i] = g * scale;
            }
        }
        dgamma.data_mut()[ch] = S::from_f64(sg);
        dbeta.data_mut()[ch] = S::from_f64(sb);
    }
    Ok((dx, dgamma, dbeta))
}

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

pub fn relu_backward<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > S::zero() { g } else { S::zero() })
        .collect();
    Tensor::new(x.dims().to_vec(), data).expect("same dims")
}

pub fn sigmoid<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| S::one() / (S::one() + (-v).exp()))
}

pub fn sigmoid_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&s, &g)| g * s * (S::one() - s))
        .collect();
    Tensor::new(y.dims().to_vec(), data).expect("same dims")
}

/// Nearest-neighbour upsampling of `(N, C, T, W, H)` by integer factors.
pub fn upsample_nearest<S: Scalar>(x: &Tensor<S>, factor: [usize; 3]) -> Result<Tensor<S>> {
    let [n, c, t, w, h] = dims5(x.dims(), "upsample input")?;
    let [ft, fw, fh] = factor;
    let (to, wo, ho) = (t * ft, w * fw, h * fh);
    let mut y = Tensor::zeros(&[n, c, to, wo, ho]);
    let xd = x.data();
    let yd = y.data_mut();
    for plane in 0..n * c {
        let src = &xd[plane * t * w * h..];
        let dst = &mut yd[plane * to * wo * ho..(plane + 1) * to * wo * ho];
        let mut o = 0;
        for i in 0..to {
            for j in 0..wo {
                let row = ((i / ft) * w + j / fw) * h;
                for k in 0..ho {
                    dst[o] = src[row + k / fh];
                    o += 1;
                }
            }
        }
    }
    Ok(y)
}

pub fn upsample_nearest_backward<S: Scalar>(
    input_dims: &[usize],
    factor: [usize; 3],
    dy: &Tensor<S>,
) -> Result<Tensor<S>> {
    let [n, c, t, w, h] = dims5(input_dims, "upsample input")?;
    let [ft, fw, fh] = factor;
    let (to, wo, ho) = (t * ft, w * fw, h * fh);
    dy.ensure_dims(&[n, c, to, wo, ho], "upsample grad")?;
    let mut dx = Tensor::zeros(input_dims);
    let dyd = dy.data();
    let dxd = dx.data_mut();
    for plane in 0..n * c {
        let src = &dyd[plane * to * wo * ho..(plane + 1) * to * wo * ho];
        let dst = &mut dxd[plane * t * w * h..(plane + 1) * t * w * h];
        let mut o = 0;
        for i in 0..to {
            for j in 0..wo {
                let row = ((i / ft) * w + j / fw) * h;
                for k in 0..ho {
                    dst[row + k / fh] += src[o];
                    o += 1;
                }
            }
        }
    }
    Ok(dx)
}

/// Mean over all axes after the channel axis: `(N, C, ...) -> (N, C)`.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, c, inner) = channel_layout(x.dims())?;
    let scale = S::from_f64(1.0 / inner as f64);
    let data = x
        .data()
        .chunks(inner)
        .map(|ch| ch.iter().copied().sum::<S>() * scale)
        .collect();
    Tensor::new(vec![n, c], data)
}

pub fn global_avg_pool_backward<S: Scalar>(input_dims: &[usize], dy: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, c, inner) = channel_layout(input_dims)?;
    dy.ensure_dims(&[n, c], "pool grad")?;
    let scale = S::from_f64(1.0 / inner as f64);
    let mut dx = Tensor::zeros(input_dims);
    for (chunk, &g) in dx.data_mut().chunks_mut(inner).zip(dy.data()) {
        chunk.iter_mut().for_each(|v| *v = g * scale);
    }
    Ok(dx)
}

/// `(N, Cin) -> (N, Cout)` with `w` of shape `(Cout, Cin)`.
pub fn linear<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    if x.rank() != 2 {
        return Err(shape_err(format!("linear expects (N, C), got {:?}", x.dims())));
    }
    let (n, c_in) = (x.dims()[0], x.dims()[1]);
    let c_out = w.dims()[0];
    w.ensure_dims(&[c_out, c_in], "linear weight")?;
    b.ensure_dims(&[c_out], "linear bias")?;
    let mut y = Tensor::zeros(&[n, c_out]);
    for row in y.data_mut().chunks_mut(c_out) {
        row.copy_from_slice(b.data());
    }
    matmul(x.data(), false, w.data(), true, y.data_mut(), n, c_in, c_out, true);
    Ok(y)
}

pub fn linear_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (n, c_in) = (x.dims()[0], x.dims()[1]);
    let c_out = w.dims()[0];
    dy.ensure_dims(&[n, c_out], "linear grad")?;
    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(w.dims());
    let mut db = Tensor::zeros(&[c_out]);
    matmul(dy.data(), false, w.data(), false, dx.data_mut(), n, c_out, c_in, false);
    matmul(dy.data(), true, x.data(), false, dw.data_mut(), c_out, n, c_in, false);
    for row in dy.data().chunks(c_out) {
        for (acc, &g) in db.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok((dx, dw, db))
}
