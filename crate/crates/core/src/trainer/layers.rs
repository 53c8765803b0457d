//! Single-sample layer kernels on planar `CHW` buffers, generic over the
//! float type so the same code runs in `f32` for training and `f64` for
//! gradient checks.
//!
//! Backward functions accumulate into their gradient outputs.

use num_traits::Float;

/// 3x3 convolution, stride 1, zero padding 1. `weight` is laid out
/// `[out][in][ky][kx]`.
pub fn conv3x3_forward<T: Float>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    debug_assert_eq!(input.len(), c_in * h * w);
    debug_assert_eq!(weight.len(), c_out * c_in * 9);
    let padded = pad1(input, c_in, h, w);
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let mut out = vec![T::zero(); c_out * h * w];
    for o in 0..c_out {
        let dst = &mut out[o * h * w..(o + 1) * h * w];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..c_in {
            let src = &padded[i * plane..(i + 1) * plane];
            let k = &weight[(o * c_in + i) * 9..(o * c_in + i) * 9 + 9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = k[ky * 3 + kx];
                    for y in 0..h {
                        let row = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let drow = &mut dst[y * w..(y + 1) * w];
                        for (d, &s) in drow.iter_mut().zip(row) {
                            *d = *d + wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv3x3_forward`]. `d_input` is skipped when `None`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Float>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    c_out: usize,
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    d_input: Option<&mut [T]>,
) {
    let padded = pad1(input, c_in, h, w);
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let mut d_padded = d_input.as_ref().map(|_| vec![T::zero(); c_in * plane]);
    for o in 0..c_out {
        let g = &d_out[o * h * w..(o + 1) * h * w];
        d_bias[o] = d_bias[o] + g.iter().fold(T::zero(), |a, &v| a + v);
        for i in 0..c_in {
            let src = &padded[i * plane..(i + 1) * plane];
            let base = (o * c_in + i) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = T::zero();
                    for y in 0..h {
                        let row = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        for (&gv, &s) in g[y * w..(y + 1) * w].iter().zip(row) {
                            acc = acc + gv * s;
                        }
                    }
                    d_weight[base + ky * 3 + kx] = d_weight[base + ky * 3 + kx] + acc;
                    if let Some(dp) = d_padded.as_mut() {
                        let wv = weight[base + ky * 3 + kx];
                        let dst = &mut dp[i * plane..(i + 1) * plane];
                        for y in 0..h {
                            let drow = &mut dst[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                            for (d, &gv) in drow.iter_mut().zip(&g[y * w..(y + 1) * w]) {
                                *d = *d + wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    if let (Some(d_input), Some(dp)) = (d_input, d_padded) {
        for i in 0..c_in {
            for y in 0..h {
                let src = &dp[i * plane + (y + 1) * pw + 1..i * plane + (y + 1) * pw + 1 + w];
                let dst = &mut d_input[(i * h + y) * w..(i * h + y + 1) * w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + s;
                }
            }
        }
    }
}

fn pad1<T: Float>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let mut out = vec![T::zero(); c * plane];
    for i in 0..c {
        for y in 0..h {
            let dst = i * plane + (y + 1) * pw + 1;
            out[dst..dst + w].copy_from_slice(&input[(i * h + y) * w..(i * h + y + 1) * w]);
        }
    }
    out
}

pub fn relu_forward<T: Float>(input: &[T]) -> Vec<T> {
    input.iter().map(|&v| v.max(T::zero())).collect()
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward<T: Float>(input: &[T], d_out: &[T], d_input: &mut [T]) {
    for ((d, &x), &g) in d_input.iter_mut().zip(input).zip(d_out) {
        if x > T::zero() {
            *d = *d + g;
        }
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Returns the pooled buffer and the flat input index of each maximum
/// (first one in raster order on ties).
pub fn maxpool2_forward<T: Float>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for i in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = (i * h + 2 * y) * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (i * h + 2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward<T: Float>(argmax: &[usize], d_out: &[T], d_input: &mut [T]) {
    for (&idx, &g) in argmax.iter().zip(d_out) {
        d_input[idx] = d_input[idx] + g;
    }
}

/// Mean of each channel plane.
pub fn global_avg_pool_forward<T: Float>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let n = T::from(h * w).unwrap();
    input
        .chunks(h * w)
        .take(c)
        .map(|plane| plane.iter().fold(T::zero(), |a, &v| a + v) / n)
        .collect()
}

pub fn global_avg_pool_backward<T: Float>(h: usize, w: usize, d_out: &[T], d_input: &mut [T]) {
    let n = T::from(h * w).unwrap();
    for (plane, &g) in d_input.chunks_mut(h * w).zip(d_out) {
        let share = g / n;
        plane.iter_mut().for_each(|d| *d = *d + share);
    }
}

/// `y = W x + b` with `weight` laid out `[out][in]`.
pub fn linear_forward<T: Float>(input: &[T], weight: &[T], bias: &[T], outputs: usize) -> Vec<T> {
    let n = input.len();
    (0..outputs)
        .map(|o| {
            weight[o * n..(o + 1) * n]
                .iter()
                .zip(input)
                .fold(bias[o], |a, (&wv, &x)| a + wv * x)
        })
        .collect()
}

pub fn linear_backward<T: Float>(
    input: &[T],
    weight: &[T],
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    d_input: Option<&mut [T]>,
) {
    let n = input.len();
    for (o, &g) in d_out.iter().enumerate() {
        d_bias[o] = d_bias[o] + g;
        for (dw, &x) in d_weight[o * n..(o + 1) * n].iter_mut().zip(input) {
            *dw = *dw + g * x;
        }
    }
    if let Some(d_input) = d_input {
        for (o, &g) in d_out.iter().enumerate() {
            for (d, &wv) in d_input.iter_mut().zip(&weight[o * n..(o + 1) * n]) {
                *d = *d + g * wv;
            }
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax<T: Float>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let lse = m + logits.iter().fold(T::zero(), |a, &v| a + (v - m).exp()).ln();
    logits.iter().map(|&v| v - lse).collect()
}

/// Cross-entropy `-sum t_k log softmax(z)_k` of one row and its gradient
/// `softmax(z) * sum(t) - t` with respect to the logits.
pub fn soft_cross_entropy_row<T: Float>(logits: &[T], target: &[T]) -> (T, Vec<T>) {
    let ls = log_softmax(logits);
    let mass = target.iter().fold(T::zero(), |a, &t| a + t);
    let loss = ls.iter().zip(target).fold(T::zero(), |a, (&l, &t)| a - t * l);
    let grad = ls.iter().zip(target).map(|(&l, &t)| l.exp() * mass - t).collect();
    (loss, grad)
}
