//! Differentiable layer primitives.
//!
//! Every op takes and returns [`Tensor`] values, validates shapes eagerly,
//! and has a hand-written backward pass. Convolutions are 3x3, stride 1,
//! zero padded by one pixel on each side, so spatial dims are preserved.
//! Pooling is 2x2 non-overlapping max with ties resolved to the first cell
//! in row-major window order.

use crate::error::{Error, Result};
use crate::nn::kernels::{axpy, dot, sum};
use crate::nn::tensor::Tensor;

fn conv_shapes(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize, usize)> {
    let is = input.shape();
    if is.len() != 3 {
        return Err(Error::ShapeMismatch {
            expected: "rank-3 input [channels, height, width]".into(),
            actual: format!("{is:?}"),
        });
    }
    let (c_in, h, w) = (is[0], is[1], is[2]);
    let ws = weights.shape();
    if ws.len() != 4 || ws[1] != c_in || ws[2] != 3 || ws[3] != 3 {
        return Err(Error::ShapeMismatch {
            expected: format!("weights [c_out, {c_in}, 3, 3]"),
            actual: format!("{ws:?}"),
        });
    }
    let c_out = ws[0];
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::ShapeMismatch {
                expected: format!("bias [{c_out}]"),
                actual: format!("{:?}", b.shape()),
            });
        }
    }
    Ok((c_in, c_out, h, w))
}

/// Row span of valid output positions for a kernel offset `d` in {-1, 0, 1},
/// such that the matching input position stays in [0, extent).
fn valid_span(extent: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { 1 } else { 0 };
    let hi = if d > 0 { extent - 1 } else { extent };
    (lo, hi)
}

/// 3x3 same-size convolution (cross-correlation, no kernel flip).
pub fn conv3x3_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, c_out, h, w) = conv_shapes(input, weights, Some(bias))?;
    let mut out = Tensor::zeros(&[c_out, h, w]);
    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let plane = h * w;
    for co in 0..c_out {
        let out_plane = &mut out.data_mut()[co * plane..(co + 1) * plane];
        out_plane.fill(b[co]);
        for ci in 0..c_in {
            let in_plane = &x[ci * plane..(ci + 1) * plane];
            for kr in 0..3usize {
                let dr = kr as isize - 1;
                let (r_lo, r_hi) = valid_span(h, dr);
                for kc in 0..3usize {
                    let dc = kc as isize - 1;
                    let (c_lo, c_hi) = valid_span(w, dc);
                    let wv = wt[((co * c_in + ci) * 3 + kr) * 3 + kc];
                    if wv == 0.0 {
                        continue;
                    }
                    for r in r_lo..r_hi {
                        let src_row = (r as isize + dr) as usize;
                        let src = &in_plane
                            [(src_row * w) as usize + (c_lo as isize + dc) as usize
                                ..(src_row * w) as usize + (c_hi as isize + dc) as usize];
                        let dst = &mut out_plane[r * w + c_lo..r * w + c_hi];
                        axpy(dst, wv, src);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of the 3x3 convolution. Returns (d_weights, d_bias, d_input);
/// `want_dx` lets the first layer of a network skip the input gradient.
pub(crate) fn conv3x3_backward_impl(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
    want_dx: bool,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, c_out, h, w) = conv_shapes(input, weights, None)?;
    if upstream.shape() != [c_out, h, w] {
        return Err(Error::ShapeMismatch {
            expected: format!("upstream [{c_out}, {h}, {w}]"),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let x = input.data();
    let wt = weights.data();
    let dy = upstream.data();
    let plane = h * w;

    let mut d_w = Tensor::zeros(weights.shape());
    let mut d_b = Tensor::zeros(&[c_out]);
    let mut d_x = Tensor::zeros(input.shape());

    for co in 0..c_out {
        let dy_plane = &dy[co * plane..(co + 1) * plane];
        d_b.data_mut()[co] = sum(dy_plane);
        for ci in 0..c_in {
            let in_plane = &x[ci * plane..(ci + 1) * plane];
            for kr in 0..3usize {
                let dr = kr as isize - 1;
                let (r_lo, r_hi) = valid_span(h, dr);
                for kc in 0..3usize {
                    let dc = kc as isize - 1;
                    let (c_lo, c_hi) = valid_span(w, dc);
                    let mut acc = 0.0f32;
                    for r in r_lo..r_hi {
                        let src_row = (r as isize + dr) as usize;
                        let src = &in_plane
                            [src_row * w + (c_lo as isize + dc) as usize
                                ..src_row * w + (c_hi as isize + dc) as usize];
                        acc += dot(&dy_plane[r * w + c_lo..r * w + c_hi], src);
                    }
                    let widx = ((co * c_in + ci) * 3 + kr) * 3 + kc;
                    d_w.data_mut()[widx] = acc;
                    if want_dx {
                        let wv = wt[widx];
                        if wv == 0.0 {
                            continue;
                        }
                        let dx_plane = &mut d_x.data_mut()[ci * plane..(ci + 1) * plane];
                        for r in r_lo..r_hi {
                            let src_row = (r as isize + dr) as usize;
                            let dst = &mut dx_plane
                                [src_row * w + (c_lo as isize + dc) as usize
                                    ..src_row * w + (c_hi as isize + dc) as usize];
                            axpy(dst, wv, &dy_plane[r * w + c_lo..r * w + c_hi]);
                        }
                    }
                }
            }
        }
    }
    Ok((d_w, d_b, d_x))
}

pub fn conv3x3_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    conv3x3_backward_impl(input, weights, upstream, true)
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor plus one code
/// per output cell in 0..4 (row-major offset inside the window) naming which
/// input the max came from; ties go to the earliest cell in that order.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, Vec<u8>)> {
    let is = input.shape();
    if is.len() != 3 {
        return Err(Error::ShapeMismatch {
            expected: "rank-3 input [channels, height, width]".into(),
            actual: format!("{is:?}"),
        });
    }
    let (c_n, h, w) = (is[0], is[1], is[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "maxpool2x2 requires even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c_n, oh, ow]);
    let mut codes = vec![0u8; c_n * oh * ow];
    let x = input.data();
    let o = out.data_mut();
    for c in 0..c_n {
        for r in 0..oh {
            for col in 0..ow {
                let base = c * h * w + (2 * r) * w + 2 * col;
                let window = [x[base], x[base + 1], x[base + w], x[base + w + 1]];
                let mut best = 0usize;
                for k in 1..4 {
                    if window[k] > window[best] {
                        best = k;
                    }
                }
                let oi = c * oh * ow + r * ow + col;
                o[oi] = window[best];
                codes[oi] = best as u8;
            }
        }
    }
    Ok((out, codes))
}

/// Scatter the upstream gradient back to the argmax positions recorded by
/// the forward pass. `in_h`/`in_w` are the pre-pool spatial dims.
pub fn maxpool2x2_backward(
    codes: &[u8],
    upstream: &Tensor,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor> {
    let us = upstream.shape();
    if us.len() != 3 || us[1] != in_h / 2 || us[2] != in_w / 2 {
        return Err(Error::ShapeMismatch {
            expected: format!("upstream [_, {}, {}]", in_h / 2, in_w / 2),
            actual: format!("{us:?}"),
        });
    }
    let c_n = us[0];
    if codes.len() != upstream.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} argmax codes", upstream.len()),
            actual: format!("{}", codes.len()),
        });
    }
    let (oh, ow) = (us[1], us[2]);
    let mut d_x = Tensor::zeros(&[c_n, in_h, in_w]);
    let dy = upstream.data();
    let dx = d_x.data_mut();
    for c in 0..c_n {
        for r in 0..oh {
            for col in 0..ow {
                let oi = c * oh * ow + r * ow + col;
                let code = codes[oi] as usize;
                let base = c * in_h * in_w + (2 * r + code / 2) * in_w + 2 * col + code % 2;
                dx[base] += dy[oi];
            }
        }
    }
    Ok(d_x)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient passes where the pre-activation was strictly positive; the
/// subgradient at exactly zero is zero.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if input.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", input.shape()),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let mut out = upstream.clone();
    for (g, x) in out.data_mut().iter_mut().zip(input.data()) {
        if *x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

fn linear_shapes(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize)> {
    let is = input.shape();
    let ws = weights.shape();
    if is.len() != 1 || ws.len() != 2 || ws[1] != is[0] {
        return Err(Error::ShapeMismatch {
            expected: "input [n_in] with weights [n_out, n_in]".into(),
            actual: format!("input {is:?}, weights {ws:?}"),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [ws[0]] {
            return Err(Error::ShapeMismatch {
                expected: format!("bias [{}]", ws[0]),
                actual: format!("{:?}", b.shape()),
            });
        }
    }
    Ok((is[0], ws[0]))
}

/// y = W x + b with W stored row-major [n_out, n_in].
pub fn linear_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n_in, n_out) = linear_shapes(input, weights, Some(bias))?;
    let mut out = Tensor::zeros(&[n_out]);
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    for (o, y) in out.data_mut().iter_mut().enumerate() {
        *y = dot(&w[o * n_in..(o + 1) * n_in], x) + b[o];
    }
    Ok(out)
}

/// Returns (d_weights, d_bias, d_input).
pub fn linear_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n_in, n_out) = linear_shapes(input, weights, None)?;
    if upstream.shape() != [n_out] {
        return Err(Error::ShapeMismatch {
            expected: format!("upstream [{n_out}]"),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let x = input.data();
    let w = weights.data();
    let dy = upstream.data();
    let mut d_w = Tensor::zeros(weights.shape());
    let mut d_x = Tensor::zeros(input.shape());
    for o in 0..n_out {
        axpy(&mut d_w.data_mut()[o * n_in..(o + 1) * n_in], dy[o], x);
        axpy(d_x.data_mut(), dy[o], &w[o * n_in..(o + 1) * n_in]);
    }
    let d_b = upstream.clone();
    Ok((d_w, d_b, d_x))
}

/// Numerically stabilized softmax + cross-entropy against an integer label.
/// Returns (loss, probabilities, d_logits) where d_logits = probs - onehot.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f32, Tensor, Tensor)> {
    let k = logits.len();
    if logits.shape().len() != 1 || k == 0 {
        return Err(Error::ShapeMismatch {
            expected: "rank-1 logits with at least one class".into(),
            actual: format!("{:?}", logits.shape()),
        });
    }
    if label >= k {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    if !logits.all_finite() {
        return Err(Error::ContractViolation("non-finite logits".into()));
    }
    let l = logits.data();
    let m = l.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut probs = Tensor::zeros(&[k]);
    let mut z = 0.0f32;
    for (p, &v) in probs.data_mut().iter_mut().zip(l) {
        let e = (v - m).exp();
        *p = e;
        z += e;
    }
    let inv = 1.0 / z;
    for p in probs.data_mut() {
        *p *= inv;
    }
    let loss = z.ln() - (l[label] - m);
    let mut d_logits = probs.clone();
    d_logits.data_mut()[label] -= 1.0;
    Ok((loss, probs, d_logits))
}
