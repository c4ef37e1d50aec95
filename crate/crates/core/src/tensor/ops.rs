//! Differentiable operations. Each op computes its output eagerly and
//! registers a backward closure that scatters the upstream gradient into its
//! parents. Shapes follow the [N, C, D, H, W] convention for volumetric
//! feature maps.

use super::Tensor;
use crate::error::{CoreError, Result};

/// Spatial padding for convolution. `Same` zero-pads by (k-1)/2 per axis
/// (odd kernels only); `Valid` applies no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Same,
    Valid,
}

fn check_same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CoreError::Shape(format!(
            "{op}: operand shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        check_same_shape(self, other, "add")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                if pa.is_grad_tracked() {
                    pa.accumulate_grad(g);
                }
                if pb.is_grad_tracked() {
                    pb.accumulate_grad(g);
                }
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        check_same_shape(self, other, "sub")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                if pa.is_grad_tracked() {
                    pa.accumulate_grad(g);
                }
                if pb.is_grad_tracked() {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    pb.accumulate_grad(&neg);
                }
            }),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        check_same_shape(self, other, "mul")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                if pa.is_grad_tracked() {
                    let contrib: Vec<f64> =
                        g.iter().zip(pb.data().iter()).map(|(gi, b)| gi * b).collect();
                    pa.accumulate_grad(&contrib);
                }
                if pb.is_grad_tracked() {
                    let contrib: Vec<f64> =
                        g.iter().zip(pa.data().iter()).map(|(gi, a)| gi * a).collect();
                    pb.accumulate_grad(&contrib);
                }
            }),
        ))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|a| a * c).collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let contrib: Vec<f64> = g.iter().map(|gi| gi * c).collect();
                p.accumulate_grad(&contrib);
            }),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|a| a + c).collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| p.accumulate_grad(g)),
        )
    }

    pub fn relu(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|a| a.max(0.0)).collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let contrib: Vec<f64> = g
                    .iter()
                    .zip(p.data().iter())
                    .map(|(gi, x)| if *x > 0.0 { *gi } else { 0.0 })
                    .collect();
                p.accumulate_grad(&contrib);
            }),
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let data: Vec<f64> = self
            .data()
            .iter()
            .map(|a| if *a > 0.0 { *a } else { slope * a })
            .collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let contrib: Vec<f64> = g
                    .iter()
                    .zip(p.data().iter())
                    .map(|(gi, x)| if *x > 0.0 { *gi } else { slope * gi })
                    .collect();
                p.accumulate_grad(&contrib);
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| stable_sigmoid(x)).collect();
        let saved = data.clone();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let contrib: Vec<f64> = g
                    .iter()
                    .zip(saved.iter())
                    .map(|(gi, s)| gi * s * (1.0 - s))
                    .collect();
                p.accumulate_grad(&contrib);
            }),
        )
    }

    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.numel();
        let p = self.clone();
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| {
                p.accumulate_grad(&vec![g[0]; n]);
            }),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let total: f64 = self.data().iter().sum();
        let p = self.clone();
        Tensor::from_op(
            vec![1],
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(move |g| {
                p.accumulate_grad(&vec![g[0] / n as f64; n]);
            }),
        )
    }

    /// Mean absolute value. Subgradient 0 at exact zeros.
    pub fn l1_mean(&self) -> Tensor {
        let n = self.numel();
        let total: f64 = self.data().iter().map(|a| a.abs()).sum();
        let p = self.clone();
        Tensor::from_op(
            vec![1],
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(move |g| {
                let s = g[0] / n as f64;
                let contrib: Vec<f64> = p
                    .data()
                    .iter()
                    .map(|x| {
                        if *x > 0.0 {
                            s
                        } else if *x < 0.0 {
                            -s
                        } else {
                            0.0
                        }
                    })
                    .collect();
                p.accumulate_grad(&contrib);
            }),
        )
    }

    /// Mean of squares.
    pub fn sq_mean(&self) -> Tensor {
        let n = self.numel();
        let total: f64 = self.data().iter().map(|a| a * a).sum();
        let p = self.clone();
        Tensor::from_op(
            vec![1],
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(move |g| {
                let s = 2.0 * g[0] / n as f64;
                let contrib: Vec<f64> = p.data().iter().map(|x| s * x).collect();
                p.accumulate_grad(&contrib);
            }),
        )
    }

    /// 3D cross-correlation over [N, C_in, D, H, W] with a
    /// [C_out, C_in, kd, kh, kw] kernel, stride 1. The PSF kernels this
    /// toolkit produces are symmetric, so physical convolution is realized by
    /// flipping the kernel once at construction where orientation matters.
    pub fn conv3(&self, kernel: &Tensor, pad: PadMode) -> Result<Tensor> {
        self.conv3_strided(kernel, pad, 1)
    }

    /// `conv3` with a spatial stride (used by the patch discriminators).
    pub fn conv3_strided(&self, kernel: &Tensor, pad: PadMode, stride: usize) -> Result<Tensor> {
        conv3_impl(self, kernel, pad, stride)
    }

    /// Per-(sample, channel) standardization over the spatial extent with a
    /// trainable per-channel affine map applied afterward.
    pub fn instance_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        instance_norm_impl(self, gamma, beta, eps)
    }

    /// 2x2x2 average pooling (extents must be even).
    pub fn avg_pool2(&self) -> Result<Tensor> {
        avg_pool2_impl(self)
    }

    /// Nearest-neighbor x2 spatial upsampling.
    pub fn upsample2(&self) -> Result<Tensor> {
        upsample2_impl(self)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        concat_channels_impl(self, other)
    }

    /// Add a per-channel bias to an [N, C, spatial...] tensor.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        add_channel_bias_impl(self, bias)
    }
}

fn add_channel_bias_impl(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(CoreError::Shape(format!(
            "add_channel_bias expects [N,C,...], got {:?}",
            s
        )));
    }
    let (n, c) = (s[0], s[1]);
    let m: usize = s[2..].iter().product();
    if bias.shape() != [c] {
        return Err(CoreError::Shape(format!(
            "add_channel_bias: bias must have shape [{c}], got {:?}",
            bias.shape()
        )));
    }
    let b = bias.data();
    let mut out = x.to_vec();
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * m;
            let bv = b[ci];
            for v in &mut out[base..base + m] {
                *v += bv;
            }
        }
    }
    drop(b);
    let (px, pb) = (x.clone(), bias.clone());
    Ok(Tensor::from_op(
        s.to_vec(),
        out,
        vec![x.clone(), bias.clone()],
        Box::new(move |g| {
            if px.is_grad_tracked() {
                px.accumulate_grad(g);
            }
            if pb.is_grad_tracked() {
                let mut db = vec![0.0f64; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * m;
                        db[ci] += g[base..base + m].iter().sum::<f64>();
                    }
                }
                pb.accumulate_grad(&db);
            }
        }),
    ))
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dims5(t: &Tensor, what: &str) -> Result<[usize; 5]> {
    let s = t.shape();
    if s.len() != 5 {
        return Err(CoreError::Shape(format!(
            "{what} must be 5-dimensional [N,C,D,H,W], got {:?}",
            s
        )));
    }
    Ok([s[0], s[1], s[2], s[3], s[4]])
}

/// Output index range [lo, hi) such that `o*stride + k_off - pad` stays
/// inside [0, in_extent).
fn out_range(in_extent: usize, out_extent: usize, k_off: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo_num = pad as i64 - k_off as i64;
    let lo = if lo_num <= 0 {
        0
    } else {
        ((lo_num as usize) + stride - 1) / stride
    };
    let hi_num = in_extent as i64 - 1 + pad as i64 - k_off as i64;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = ((hi_num as usize) / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

fn conv_out_extent(in_extent: usize, k: usize, pad: usize, stride: usize) -> Result<usize> {
    let padded = in_extent + 2 * pad;
    if padded < k {
        return Err(CoreError::Shape(format!(
            "kernel extent {k} exceeds padded input extent {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

struct ConvGeom {
    n: usize,
    cin: usize,
    cout: usize,
    ind: [usize; 3],
    kd: [usize; 3],
    outd: [usize; 3],
    pad: [usize; 3],
    stride: usize,
}

fn conv3_impl(input: &Tensor, kernel: &Tensor, pad: PadMode, stride: usize) -> Result<Tensor> {
    let [n, cin, d, h, w] = dims5(input, "conv3 input")?;
    let [cout, kcin, kd, kh, kw] = dims5(kernel, "conv3 kernel")?;
    if kcin != cin {
        return Err(CoreError::Shape(format!(
            "conv3: input has {cin} channels but kernel expects {kcin}"
        )));
    }
    if stride == 0 {
        return Err(CoreError::Config("conv3: stride must be positive".into()));
    }
    let pads = match pad {
        PadMode::Same => {
            if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
                return Err(CoreError::Config(format!(
                    "conv3: 'same' padding requires odd kernel extents, got {kd}x{kh}x{kw}"
                )));
            }
            [(kd - 1) / 2, (kh - 1) / 2, (kw - 1) / 2]
        }
        PadMode::Valid => [0, 0, 0],
    };
    let geom = ConvGeom {
        n,
        cin,
        cout,
        ind: [d, h, w],
        kd: [kd, kh, kw],
        outd: [
            conv_out_extent(d, kd, pads[0], stride)?,
            conv_out_extent(h, kh, pads[1], stride)?,
            conv_out_extent(w, kw, pads[2], stride)?,
        ],
        pad: pads,
        stride,
    };

    let out = conv3_forward(&input.data(), &kernel.data(), &geom);
    let out_shape = vec![n, cout, geom.outd[0], geom.outd[1], geom.outd[2]];

    let (pi, pk) = (input.clone(), kernel.clone());
    Ok(Tensor::from_op(
        out_shape,
        out,
        vec![input.clone(), kernel.clone()],
        Box::new(move |g| {
            if pi.is_grad_tracked() {
                let din = conv3_backward_input(g, &pk.data(), &geom);
                pi.accumulate_grad(&din);
            }
            if pk.is_grad_tracked() {
                let dk = conv3_backward_kernel(g, &pi.data(), &geom);
                pk.accumulate_grad(&dk);
            }
        }),
    ))
}

fn conv3_forward(input: &[f64], kernel: &[f64], geom: &ConvGeom) -> Vec<f64> {
    let [d, h, w] = geom.ind;
    let [kd, kh, kw] = geom.kd;
    let [od, oh, ow] = geom.outd;
    let [pd, ph, pw] = geom.pad;
    let s = geom.stride;
    let mut out = vec![0.0f64; geom.n * geom.cout * od * oh * ow];

    for ni in 0..geom.n {
        for co in 0..geom.cout {
            let out_base = (ni * geom.cout + co) * od * oh * ow;
            for ci in 0..geom.cin {
                let in_base = (ni * geom.cin + ci) * d * h * w;
                for zk in 0..kd {
                    let (zlo, zhi) = out_range(d, od, zk, pd, s);
                    for yk in 0..kh {
                        let (ylo, yhi) = out_range(h, oh, yk, ph, s);
                        for xk in 0..kw {
                            let a = kernel[(((co * geom.cin + ci) * kd + zk) * kh + yk) * kw + xk];
                            if a == 0.0 {
                                continue;
                            }
                            let (xlo, xhi) = out_range(w, ow, xk, pw, s);
                            let x_off = xk as i64 - pw as i64;
                            for oz in zlo..zhi {
                                let iz = oz * s + zk - pd;
                                for oy in ylo..yhi {
                                    let iy = oy * s + yk - ph;
                                    let orow = out_base + (oz * oh + oy) * ow;
                                    let irow = in_base + (iz * h + iy) * w;
                                    if s == 1 {
                                        let ix0 = (xlo as i64 + x_off) as usize;
                                        let src = &input[irow + ix0..irow + ix0 + (xhi - xlo)];
                                        let dst = &mut out[orow + xlo..orow + xhi];
                                        for (o, i) in dst.iter_mut().zip(src) {
                                            *o += a * i;
                                        }
                                    } else {
                                        for ox in xlo..xhi {
                                            let ix = (ox * s) as i64 + x_off;
                                            out[orow + ox] += a * input[irow + ix as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv3_backward_input(dout: &[f64], kernel: &[f64], geom: &ConvGeom) -> Vec<f64> {
    let [d, h, w] = geom.ind;
    let [kd, kh, kw] = geom.kd;
    let [od, oh, ow] = geom.outd;
    let [pd, ph, pw] = geom.pad;
    let s = geom.stride;
    let mut din = vec![0.0f64; geom.n * geom.cin * d * h * w];

    for ni in 0..geom.n {
        for co in 0..geom.cout {
            let out_base = (ni * geom.cout + co) * od * oh * ow;
            for ci in 0..geom.cin {
                let in_base = (ni * geom.cin + ci) * d * h * w;
                for zk in 0..kd {
                    let (zlo, zhi) = out_range(d, od, zk, pd, s);
                    for yk in 0..kh {
                        let (ylo, yhi) = out_range(h, oh, yk, ph, s);
                        for xk in 0..kw {
                            let a = kernel[(((co * geom.cin + ci) * kd + zk) * kh + yk) * kw + xk];
                            if a == 0.0 {
                                continue;
                            }
                            let (xlo, xhi) = out_range(w, ow, xk, pw, s);
                            let x_off = xk as i64 - pw as i64;
                            for oz in zlo..zhi {
                                let iz = oz * s + zk - pd;
                                for oy in ylo..yhi {
                                    let iy = oy * s + yk - ph;
                                    let orow = out_base + (oz * oh + oy) * ow;
                                    let irow = in_base + (iz * h + iy) * w;
                                    if s == 1 {
                                        let ix0 = (xlo as i64 + x_off) as usize;
                                        let src = &dout[orow + xlo..orow + xhi];
                                        let dst = &mut din[irow + ix0..irow + ix0 + (xhi - xlo)];
                                        for (di, g) in dst.iter_mut().zip(src) {
                                            *di += a * g;
                                        }
                                    } else {
                                        for ox in xlo..xhi {
                                            let ix = (ox * s) as i64 + x_off;
                                            din[irow + ix as usize] += a * dout[orow + ox];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

fn conv3_backward_kernel(dout: &[f64], input: &[f64], geom: &ConvGeom) -> Vec<f64> {
    let [d, h, w] = geom.ind;
    let [kd, kh, kw] = geom.kd;
    let [od, oh, ow] = geom.outd;
    let [pd, ph, pw] = geom.pad;
    let s = geom.stride;
    let mut dk = vec![0.0f64; geom.cout * geom.cin * kd * kh * kw];

    for ni in 0..geom.n {
        for co in 0..geom.cout {
            let out_base = (ni * geom.cout + co) * od * oh * ow;
            for ci in 0..geom.cin {
                let in_base = (ni * geom.cin + ci) * d * h * w;
                for zk in 0..kd {
                    let (zlo, zhi) = out_range(d, od, zk, pd, s);
                    for yk in 0..kh {
                        let (ylo, yhi) = out_range(h, oh, yk, ph, s);
                        for xk in 0..kw {
                            let (xlo, xhi) = out_range(w, ow, xk, pw, s);
                            let x_off = xk as i64 - pw as i64;
                            let mut acc = 0.0f64;
                            for oz in zlo..zhi {
                                let iz = oz * s + zk - pd;
                                for oy in ylo..yhi {
                                    let iy = oy * s + yk - ph;
                                    let orow = out_base + (oz * oh + oy) * ow;
                                    let irow = in_base + (iz * h + iy) * w;
                                    if s == 1 {
                                        let ix0 = (xlo as i64 + x_off) as usize;
                                        let src = &input[irow + ix0..irow + ix0 + (xhi - xlo)];
                                        let gsl = &dout[orow + xlo..orow + xhi];
                                        for (i, g) in src.iter().zip(gsl) {
                                            acc += i * g;
                                        }
                                    } else {
                                        for ox in xlo..xhi {
                                            let ix = (ox * s) as i64 + x_off;
                                            acc += input[irow + ix as usize] * dout[orow + ox];
                                        }
                                    }
                                }
                            }
                            dk[(((co * geom.cin + ci) * kd + zk) * kh + yk) * kw + xk] += acc;
                        }
                    }
                }
            }
        }
    }
    dk
}

fn instance_norm_impl(input: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let s = input.shape();
    if s.len() < 3 {
        return Err(CoreError::Shape(format!(
            "instance_norm expects [N,C,spatial...], got {:?}",
            s
        )));
    }
    let (n, c) = (s[0], s[1]);
    let m: usize = s[2..].iter().product();
    if m == 0 {
        return Err(CoreError::Shape("instance_norm: empty spatial extent".into()));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(CoreError::Shape(format!(
            "instance_norm: affine parameters must have shape [{c}], got {:?} and {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }

    let x = input.data();
    let gam = gamma.data();
    let bet = beta.data();
    let mut out = vec![0.0f64; x.len()];
    let mut xhat = vec![0.0f64; x.len()];
    let mut inv_std = vec![0.0f64; n * c];

    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * m;
            let slice = &x[base..base + m];
            let mean = slice.iter().sum::<f64>() / m as f64;
            let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[ni * c + ci] = inv;
            let (g, b) = (gam[ci], bet[ci]);
            for i in 0..m {
                let xh = (slice[i] - mean) * inv;
                xhat[base + i] = xh;
                out[base + i] = g * xh + b;
            }
        }
    }
    drop(x);
    drop(gam);
    drop(bet);

    let (pi, pg, pb) = (input.clone(), gamma.clone(), beta.clone());
    let shape = s.to_vec();
    Ok(Tensor::from_op(
        shape,
        out,
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let gam = pg.data().clone();
            let mut dgamma = vec![0.0f64; c];
            let mut dbeta = vec![0.0f64; c];
            let mut dx = if pi.is_grad_tracked() {
                vec![0.0f64; n * c * m]
            } else {
                Vec::new()
            };
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * m;
                    let go = &g[base..base + m];
                    let xh = &xhat[base..base + m];
                    let mut sum_g = 0.0f64;
                    let mut sum_gx = 0.0f64;
                    for i in 0..m {
                        sum_g += go[i];
                        sum_gx += go[i] * xh[i];
                    }
                    dbeta[ci] += sum_g;
                    dgamma[ci] += sum_gx;
                    if pi.is_grad_tracked() {
                        let inv = inv_std[ni * c + ci];
                        let ga = gam[ci];
                        let mg = sum_g / m as f64;
                        let mgx = sum_gx / m as f64;
                        for i in 0..m {
                            dx[base + i] = ga * inv * (go[i] - mg - xh[i] * mgx);
                        }
                    }
                }
            }
            if pi.is_grad_tracked() {
                pi.accumulate_grad(&dx);
            }
            if pg.is_grad_tracked() {
                pg.accumulate_grad(&dgamma);
            }
            if pb.is_grad_tracked() {
                pb.accumulate_grad(&dbeta);
            }
        }),
    ))
}

fn avg_pool2_impl(input: &Tensor) -> Result<Tensor> {
    let [n, c, d, h, w] = dims5(input, "avg_pool2 input")?;
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(CoreError::Shape(format!(
            "avg_pool2 requires even spatial extents, got {d}x{h}x{w}"
        )));
    }
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0f64; n * c * od * oh * ow];
    for nc in 0..n * c {
        let ib = nc * d * h * w;
        let ob = nc * od * oh * ow;
        for z in 0..od {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = 0.0;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            let row = ib + ((2 * z + dz) * h + 2 * y + dy) * w + 2 * xo;
                            acc += x[row] + x[row + 1];
                        }
                    }
                    out[ob + (z * oh + y) * ow + xo] = acc / 8.0;
                }
            }
        }
    }
    drop(x);
    let p = input.clone();
    Ok(Tensor::from_op(
        vec![n, c, od, oh, ow],
        out,
        vec![input.clone()],
        Box::new(move |g| {
            let mut din = vec![0.0f64; n * c * d * h * w];
            for nc in 0..n * c {
                let ib = nc * d * h * w;
                let ob = nc * od * oh * ow;
                for z in 0..od {
                    for y in 0..oh {
                        for xo in 0..ow {
                            let gv = g[ob + (z * oh + y) * ow + xo] / 8.0;
                            for dz in 0..2 {
                                for dy in 0..2 {
                                    let row = ib + ((2 * z + dz) * h + 2 * y + dy) * w + 2 * xo;
                                    din[row] += gv;
                                    din[row + 1] += gv;
                                }
                            }
                        }
                    }
                }
            }
            p.accumulate_grad(&din);
        }),
    ))
}

fn upsample2_impl(input: &Tensor) -> Result<Tensor> {
    let [n, c, d, h, w] = dims5(input, "upsample2 input")?;
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let x = input.data();
    let mut out = vec![0.0f64; n * c * od * oh * ow];
    for nc in 0..n * c {
        let ib = nc * d * h * w;
        let ob = nc * od * oh * ow;
        for z in 0..od {
            for y in 0..oh {
                let irow = ib + ((z / 2) * h + y / 2) * w;
                let orow = ob + (z * oh + y) * ow;
                for xo in 0..ow {
                    out[orow + xo] = x[irow + xo / 2];
                }
            }
        }
    }
    drop(x);
    let p = input.clone();
    Ok(Tensor::from_op(
        vec![n, c, od, oh, ow],
        out,
        vec![input.clone()],
        Box::new(move |g| {
            let mut din = vec![0.0f64; n * c * d * h * w];
            for nc in 0..n * c {
                let ib = nc * d * h * w;
                let ob = nc * od * oh * ow;
                for z in 0..od {
                    for y in 0..oh {
                        let irow = ib + ((z / 2) * h + y / 2) * w;
                        let orow = ob + (z * oh + y) * ow;
                        for xo in 0..ow {
                            din[irow + xo / 2] += g[orow + xo];
                        }
                    }
                }
            }
            p.accumulate_grad(&din);
        }),
    ))
}

fn concat_channels_impl(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [na, ca, da, ha, wa] = dims5(a, "concat lhs")?;
    let [nb, cb, db, hb, wb] = dims5(b, "concat rhs")?;
    if na != nb || [da, ha, wa] != [db, hb, wb] {
        return Err(CoreError::Shape(format!(
            "concat_channels: incompatible shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let m = da * ha * wa;
    let xa = a.data();
    let xb = b.data();
    let mut out = vec![0.0f64; na * (ca + cb) * m];
    for ni in 0..na {
        let oa = ni * (ca + cb) * m;
        out[oa..oa + ca * m].copy_from_slice(&xa[ni * ca * m..(ni + 1) * ca * m]);
        out[oa + ca * m..oa + (ca + cb) * m].copy_from_slice(&xb[ni * cb * m..(ni + 1) * cb * m]);
    }
    drop(xa);
    drop(xb);
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        vec![na, ca + cb, da, ha, wa],
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if pa.is_grad_tracked() {
                let mut da_ = vec![0.0f64; na * ca * m];
                for ni in 0..na {
                    let oa = ni * (ca + cb) * m;
                    da_[ni * ca * m..(ni + 1) * ca * m].copy_from_slice(&g[oa..oa + ca * m]);
                }
                pa.accumulate_grad(&da_);
            }
            if pb.is_grad_tracked() {
                let mut db_ = vec![0.0f64; na * cb * m];
                for ni in 0..na {
                    let oa = ni * (ca + cb) * m;
                    db_[ni * cb * m..(ni + 1) * cb * m]
                        .copy_from_slice(&g[oa + ca * m..oa + (ca + cb) * m]);
                }
                pb.accumulate_grad(&db_);
            }
        }),
    ))
}
