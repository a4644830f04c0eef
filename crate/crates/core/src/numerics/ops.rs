//! Dense layer primitives with hand-written forward and backward passes.

use super::gemm::{gemm_acc, transpose};
use super::Tensor;
use crate::error::{Error, Result};


#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y[m] = W · x[m] + b` for `x: M×Din`, `W: Dout×Din`, `b: Dout`.
///
/// Each output is accumulated in input-index order starting from zero, with
/// the bias added last; a 1×1 convolution uses the same order, so the two
/// agree bit for bit.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_linear(x, w, b)?;
    let (m, din) = (x.dim(0), x.dim(1));
    let dout = w.dim(0);
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut y = Tensor::zeros(&[m, dout]);
    let yd = y.data_mut();
    for row in 0..m {
        let xr = &xd[row * din..(row + 1) * din];
        let yr = &mut yd[row * dout..(row + 1) * dout];
        // four independent sequential accumulators keep the pipeline busy
        let mut o = 0;
        while o + 4 <= dout {
            let w0 = &wd[o * din..(o + 1) * din];
            let w1 = &wd[(o + 1) * din..(o + 2) * din];
            let w2 = &wd[(o + 2) * din..(o + 3) * din];
            let w3 = &wd[(o + 3) * din..(o + 4) * din];
            let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..din {
                let xi = xr[i];
                a0 += w0[i] * xi;
                a1 += w1[i] * xi;
                a2 += w2[i] * xi;
                a3 += w3[i] * xi;
            }
            yr[o] = a0 + bd[o];
            yr[o + 1] = a1 + bd[o + 1];
            yr[o + 2] = a2 + bd[o + 2];
            yr[o + 3] = a3 + bd[o + 3];
            o += 4;
        }
        while o < dout {
            let wr = &wd[o * din..(o + 1) * din];
            let mut acc = 0.0;
            for i in 0..din {
                acc += wr[i] * xr[i];
            }
            yr[o] = acc + bd[o];
            o += 1;
        }
    }
    Ok(y)
}

fn check_linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<()> {
    x.expect_ndim("linear", 2)?;
    w.expect_ndim("linear", 2)?;
    if x.dim(1) != w.dim(1) {
        return Err(Error::ShapeMismatch {
            op: "linear",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    if b.shape() != [w.dim(0)] {
        return Err(Error::ShapeMismatch {
            op: "linear bias",
            left: w.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<LinearGrads> {
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[w.dim(0)]);
    let dx = linear_backward_acc(x, w, dy, &mut dw, &mut db)?;
    Ok(LinearGrads { dx, dw, db })
}

/// Like [`linear_backward`] but adds the weight and bias gradients into
/// existing buffers, row by row. Returns `dx`.
pub fn linear_backward_acc(x: &Tensor, w: &Tensor, dy: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Result<Tensor> {
    x.expect_ndim("linear_backward", 2)?;
    w.expect_ndim("linear_backward", 2)?;
    let (m, din) = (x.dim(0), x.dim(1));
    let dout = w.dim(0);
    if w.dim(1) != din {
        return Err(Error::ShapeMismatch {
            op: "linear_backward",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    dy.expect_shape("linear_backward dy", &[m, dout])?;
    dw.expect_shape("linear_backward dw", w.shape())?;
    db.expect_shape("linear_backward db", &[dout])?;
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());
    let mut dx = Tensor::zeros(&[m, din]);
    for row in 0..m {
        let xr = &xd[row * din..(row + 1) * din];
        let dyr = &dyd[row * dout..(row + 1) * dout];
        let dxr = &mut dx.data_mut()[row * din..(row + 1) * din];
        for o in 0..dout {
            let g = dyr[o];
            if g != 0.0 {
                axpy(g, &wd[o * din..(o + 1) * din], dxr);
            }
        }
        let dwd = dw.data_mut();
        for o in 0..dout {
            let g = dyr[o];
            if g != 0.0 {
                axpy(g, xr, &mut dwd[o * din..(o + 1) * din]);
            }
        }
        for (acc, g) in db.data_mut().iter_mut().zip(dyr) {
            *acc += g;
        }
    }
    Ok(dx)
}

/// Output spatial size of a zero-padded convolution with `pad = k / 2`.
pub fn conv_output_size(input: usize, k: usize, stride: usize) -> usize {
    (input + 2 * (k / 2) - k) / stride + 1
}

fn check_conv(x: &Tensor, kernel: &Tensor, stride: usize) -> Result<(usize, usize, usize, usize, usize)> {
    x.expect_ndim("conv2d", 3)?;
    kernel.expect_ndim("conv2d kernel", 4)?;
    let k = kernel.dim(2);
    if kernel.dim(3) != k || (k != 1 && k != 3) {
        return Err(Error::UnsupportedKernel(kernel.dim(2).max(kernel.dim(3))));
    }
    if stride != 1 && stride != 2 {
        return Err(Error::invalid(format!("conv2d: unsupported stride {stride}")));
    }
    if kernel.dim(1) != x.dim(0) {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: x.shape().to_vec(),
            right: kernel.shape().to_vec(),
        });
    }
    Ok((x.dim(0), x.dim(1), x.dim(2), kernel.dim(0), k))
}

/// Unrolls `x: C×H×W` into a `(C·k·k) × (Ho·Wo)` patch matrix.
fn im2col(x: &Tensor, k: usize, stride: usize) -> (Vec<f64>, usize, usize) {
    let (c, h, w) = (x.dim(0), x.dim(1), x.dim(2));
    let pad = (k / 2) as isize;
    let ho = conv_output_size(h, k, stride);
    let wo = conv_output_size(w, k, stride);
    let p = ho * wo;
    let mut cols = vec![0.0; c * k * k * p];
    let xd = x.data();
    for ch in 0..c {
        let plane = &xd[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * stride) as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride) as isize + kx as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (cols, ho, wo)
}

fn col2im(cols: &[f64], shape: &[usize], k: usize, stride: usize) -> Tensor {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let pad = (k / 2) as isize;
    let ho = conv_output_size(h, k, stride);
    let wo = conv_output_size(w, k, stride);
    let p = ho * wo;
    let mut x = Tensor::zeros(shape);
    let xd = x.data_mut();
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * stride) as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = ch * h * w + iy as usize * w;
                    for ox in 0..wo {
                        let ix = (ox * stride) as isize + kx as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            xd[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Zero-padded cross-correlation `x: C×H×W`, `kernel: Cout×C×k×k`, `k ∈ {1, 3}`,
/// stride 1 or 2. With stride 1 the output keeps the input's spatial size.
pub fn conv2d_forward(x: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let (c, _, _, cout, k) = check_conv(x, kernel, stride)?;
    bias.expect_shape("conv2d bias", &[cout])?;
    let (cols, ho, wo) = im2col(x, k, stride);
    let p = ho * wo;
    let mut y = Tensor::zeros(&[cout, ho, wo]);
    gemm_acc(cout, c * k * k, p, kernel.data(), &cols, y.data_mut());
    for (yr, &bv) in y.data_mut().chunks_exact_mut(p).zip(bias.data()) {
        yr.iter_mut().for_each(|v| *v += bv);
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    /// `None` when the input gradient was not requested.
    pub dx: Option<Tensor>,
    pub dk: Tensor,
    pub db: Tensor,
}

pub fn conv2d_backward(
    x: &Tensor,
    kernel: &Tensor,
    stride: usize,
    dy: &Tensor,
    need_dx: bool,
) -> Result<ConvGrads> {
    let (c, _, _, cout, k) = check_conv(x, kernel, stride)?;
    let (cols, ho, wo) = im2col(x, k, stride);
    dy.expect_shape("conv2d_backward dy", &[cout, ho, wo])?;
    let p = ho * wo;
    let ckk = c * k * k;
    let mut dk = Tensor::zeros(kernel.shape());
    gemm_acc(cout, p, ckk, dy.data(), &transpose(ckk, p, &cols), dk.data_mut());
    let db: Vec<f64> = dy.data().chunks_exact(p).map(|r| r.iter().sum()).collect();
    let db = Tensor::from_vec(&[cout], db)?;
    let dx = if need_dx {
        let mut dcols = vec![0.0; ckk * p];
        gemm_acc(ckk, cout, p, &transpose(cout, ckk, kernel.data()), dy.data(), &mut dcols);
        Some(col2im(&dcols, x.shape(), k, stride))
    } else {
        None
    };
    Ok(ConvGrads { dx, dk, db })
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Passes `dy` where the forward input was strictly positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.expect_shape("relu_backward", x.shape())?;
    let mut dx = dy.clone();
    for (g, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(dx)
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    y
}

/// Backward of [`sigmoid`] given its output `y`.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.expect_shape("sigmoid_backward", y.shape())?;
    let mut dx = dy.clone();
    for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (1.0 - s);
    }
    Ok(dx)
}

/// Row-wise softmax of an `M×C` tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    logits.expect_ndim("softmax", 2)?;
    let c = logits.dim(1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

/// Mean cross-entropy of `M×C` logits against integer labels, with the
/// gradient `(softmax − onehot) / M` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    logits.expect_ndim("softmax_cross_entropy", 2)?;
    let (m, c) = (logits.dim(0), logits.dim(1));
    if m == 0 {
        return Err(Error::invalid("softmax_cross_entropy: empty batch"));
    }
    if labels.len() != m {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            left: logits.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= c) {
        return Err(Error::InvalidLabel { index, label });
    }
    let mut grad = Tensor::zeros(&[m, c]);
    let mut total = 0.0;
    let inv_m = 1.0 / m as f64;
    for (i, (row, g)) in logits
        .data()
        .chunks_exact(c)
        .zip(grad.data_mut().chunks_exact_mut(c))
        .enumerate()
    {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + z.ln();
        let t = labels[i] as usize;
        total += lse - row[t];
        for (j, (gj, &l)) in g.iter_mut().zip(row).enumerate() {
            let p = (l - lse).exp();
            *gj = (p - if j == t { 1.0 } else { 0.0 }) * inv_m;
        }
    }
    Ok((total * inv_m, grad))
}

/// Mean binary cross-entropy on logits against targets in `[0, 1]`, with the
/// gradient `(σ(z) − t) / n`.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    targets.expect_shape("bce_with_logits", logits.shape())?;
    let n = logits.len();
    if n == 0 {
        return Err(Error::invalid("bce_with_logits: empty input"));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    for ((g, &z), &t) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets.data()) {
        // log(1 + e^z) − t·z, stable for both signs
        total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        *g = (sigmoid_scalar(z) - t) * inv_n;
    }
    Ok((total * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn linear_examples() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let zero_b = Tensor::zeros(&[2]);
        let y = linear_forward(&t(&[1, 2], &[1.0, 2.0]), &eye, &zero_b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);

        let y = linear_forward(&Tensor::zeros(&[1, 2]), &eye, &t(&[2], &[5.0, 6.0])).unwrap();
        assert_eq!(y.data(), &[5.0, 6.0]);

        let w = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let y = linear_forward(&t(&[1, 2], &[1.0, 1.0]), &w, &zero_b).unwrap();
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let err = linear_forward(&Tensor::zeros(&[1, 3]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("[1, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let x = Tensor::from_vec(&[1, 3, 3], (0..9).map(|v| v as f64 * 0.5 - 1.0).collect()).unwrap();
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_all_ones_counts_taps() {
        let x = Tensor::full(&[1, 4, 4], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1).unwrap();
        #[rustfmt::skip]
        let expected = [
            4.0, 6.0, 6.0, 4.0,
            6.0, 9.0, 9.0, 6.0,
            6.0, 9.0, 9.0, 6.0,
            4.0, 6.0, 6.0, 4.0,
        ];
        assert_eq!(y.data(), &expected);
    }

    #[test]
    fn conv_rejects_unsupported_kernel() {
        let x = Tensor::zeros(&[1, 4, 4]);
        let k = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(matches!(
            conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1),
            Err(Error::UnsupportedKernel(5))
        ));
    }

    #[test]
    fn stride_two_halves_resolution() {
        let x = Tensor::full(&[2, 8, 8], 1.0);
        let k = Tensor::full(&[3, 2, 3, 3], 1.0);
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[3]), 2).unwrap();
        assert_eq!(y.shape(), &[3, 4, 4]);
        // top-left output sees a 2×2 valid window per channel
        assert_eq!(y.data()[0], 8.0);
        assert_eq!(y.data()[5], 18.0);
    }

    #[test]
    fn relu_examples() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = t(&[2], &[0.5, 3.0]);
        assert_eq!(relu(&pos), pos);
        let g = relu_backward(&t(&[2], &[-1.0, 2.0]), &t(&[2], &[1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0]);
        let g0 = relu_backward(&t(&[1], &[0.0]), &t(&[1], &[1.0])).unwrap();
        assert_eq!(g0.data(), &[0.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, _) = softmax_cross_entropy(&t(&[1, 2], &[0.0, 0.0]), &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = softmax_cross_entropy(&t(&[1, 2], &[100.0, 0.0]), &[0]).unwrap();
        assert!(l < 1e-40);
        let (l, _) = softmax_cross_entropy(&t(&[1, 2], &[0.0, 3f64.ln()]), &[0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let err = softmax_cross_entropy(&t(&[2, 2], &[0.0; 4]), &[0, 2]).unwrap_err();
        assert!(matches!(err, Error::InvalidLabel { index: 1, label: 2 }));
    }

    #[test]
    fn cross_entropy_gradient_formula() {
        let logits = t(&[2, 2], &[0.3, -0.2, 1.0, 2.0]);
        let (_, g) = softmax_cross_entropy(&logits, &[1, 0]).unwrap();
        let p = softmax(&logits).unwrap();
        let expected = [p.data()[0] / 2.0, (p.data()[1] - 1.0) / 2.0, (p.data()[2] - 1.0) / 2.0, p.data()[3] / 2.0];
        for (a, b) in g.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid(&Tensor::zeros(&[3])).data(), &[0.5, 0.5, 0.5]);
        assert!(sigmoid_scalar(-800.0) >= 0.0 && sigmoid_scalar(800.0) <= 1.0);
    }
}
