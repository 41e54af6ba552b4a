//! Forward and backward kernels for the supported layer types.
//!
//! The kernels are generic over the scalar so the same code path can be
//! exercised at f64 in tests, where finite-difference gradient checks reach
//! 1e-5 relative error instead of the f32 noise floor.

use num_traits::Float;

pub trait Scalar: Float + std::fmt::Debug + 'static {
    fn c(v: f64) -> Self {
        Self::from(v).expect("constant conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// 3x3 convolution, stride 1, zero padding 1. Weight layout is
/// [out_ch][in_ch][3][3]; activations are [ch][h][w] row-major.
pub fn conv3x3_forward<S: Scalar>(
    input: &[S],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[S],
    bias: &[S],
    out_ch: usize,
    output: &mut [S],
) {
    debug_assert_eq!(input.len(), in_ch * h * w);
    debug_assert_eq!(weight.len(), out_ch * in_ch * 9);
    debug_assert_eq!(output.len(), out_ch * h * w);
    for oc in 0..out_ch {
        let out_plane = &mut output[oc * h * w..(oc + 1) * h * w];
        for v in out_plane.iter_mut() {
            *v = bias[oc];
        }
        for ic in 0..in_ch {
            let in_plane = &input[ic * h * w..(ic + 1) * h * w];
            let k = &weight[(oc * in_ch + ic) * 9..(oc * in_ch + ic) * 9 + 9];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = S::zero();
                    for ky in 0..3usize {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = iy as usize * w;
                        for kx in 0..3usize {
                            let ix = x as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc = acc + k[ky * 3 + kx] * in_plane[row + ix as usize];
                        }
                    }
                    out_plane[y * w + x] = out_plane[y * w + x] + acc;
                }
            }
        }
    }
}

/// Backward pass of the 3x3 convolution. Accumulates into the gradient
/// buffers so batch items can share them.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<S: Scalar>(
    input: &[S],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[S],
    out_ch: usize,
    grad_output: &[S],
    grad_weight: &mut [S],
    grad_bias: &mut [S],
    grad_input: &mut [S],
) {
    debug_assert_eq!(grad_input.len(), in_ch * h * w);
    for oc in 0..out_ch {
        let go_plane = &grad_output[oc * h * w..(oc + 1) * h * w];
        let mut gb = S::zero();
        for &g in go_plane {
            gb = gb + g;
        }
        grad_bias[oc] = grad_bias[oc] + gb;
        for ic in 0..in_ch {
            let in_plane = &input[ic * h * w..(ic + 1) * h * w];
            let k = &weight[(oc * in_ch + ic) * 9..(oc * in_ch + ic) * 9 + 9];
            let gk = &mut grad_weight[(oc * in_ch + ic) * 9..(oc * in_ch + ic) * 9 + 9];
            let gi_plane = &mut grad_input[ic * h * w..(ic + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let g = go_plane[y * w + x];
                    for ky in 0..3usize {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = iy as usize * w;
                        for kx in 0..3usize {
                            let ix = x as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = row + ix as usize;
                            gk[ky * 3 + kx] = gk[ky * 3 + kx] + g * in_plane[idx];
                            gi_plane[idx] = gi_plane[idx] + g * k[ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

/// Fully connected layer on the flattened input. Weight layout [out][in].
pub fn dense_forward<S: Scalar>(
    input: &[S],
    weight: &[S],
    bias: &[S],
    output: &mut [S],
) {
    let n = input.len();
    for (o, out_v) in output.iter_mut().enumerate() {
        let row = &weight[o * n..(o + 1) * n];
        let mut acc = bias[o];
        for (wv, iv) in row.iter().zip(input) {
            acc = acc + *wv * *iv;
        }
        *out_v = acc;
    }
}

pub fn dense_backward<S: Scalar>(
    input: &[S],
    weight: &[S],
    grad_output: &[S],
    grad_weight: &mut [S],
    grad_bias: &mut [S],
    grad_input: &mut [S],
) {
    let n = input.len();
    for (o, &g) in grad_output.iter().enumerate() {
        grad_bias[o] = grad_bias[o] + g;
        let row = &weight[o * n..(o + 1) * n];
        let grow = &mut grad_weight[o * n..(o + 1) * n];
        for i in 0..n {
            grow[i] = grow[i] + g * input[i];
            grad_input[i] = grad_input[i] + g * row[i];
        }
    }
}

pub fn relu_forward<S: Scalar>(input: &[S], output: &mut [S]) {
    for (o, &i) in output.iter_mut().zip(input) {
        *o = if i > S::zero() { i } else { S::zero() };
    }
}

pub fn relu_backward<S: Scalar>(input: &[S], grad_output: &[S], grad_input: &mut [S]) {
    for ((gi, &i), &g) in grad_input.iter_mut().zip(input).zip(grad_output) {
        *gi = *gi + if i > S::zero() { g } else { S::zero() };
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

pub fn silu_forward<S: Scalar>(input: &[S], output: &mut [S]) {
    for (o, &i) in output.iter_mut().zip(input) {
        *o = i * sigmoid(i);
    }
}

pub fn silu_backward<S: Scalar>(input: &[S], grad_output: &[S], grad_input: &mut [S]) {
    for ((gi, &i), &g) in grad_input.iter_mut().zip(input).zip(grad_output) {
        let s = sigmoid(i);
        let d = s * (S::one() + i * (S::one() - s));
        *gi = *gi + g * d;
    }
}
