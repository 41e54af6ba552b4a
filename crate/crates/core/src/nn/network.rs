//! The denoiser network: a DnCNN-style convolution stack over the
//! channel-concatenated (input, condition) pair, with a small dense noise
//! embedding broadcast-added after the first layer.
//!
//! Parameters live in one flat f32 vector with per-layer offsets, so the
//! optimizer and checkpoints treat the whole network as a single tensor.

use crate::error::{Error, Result};
use crate::nn::kernels::{
    conv3x3_backward, conv3x3_forward, dense_backward, dense_forward, relu_backward, relu_forward,
    silu_backward, silu_forward, Scalar,
};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv3x3 { in_ch: usize, out_ch: usize },
    Dense { input: usize, output: usize },
    ReLU,
    SiLU,
}

impl Layer {
    pub fn param_len(&self) -> usize {
        match self {
            Layer::Conv3x3 { in_ch, out_ch } => out_ch * in_ch * 9 + out_ch,
            Layer::Dense { input, output } => output * input + output,
            Layer::ReLU | Layer::SiLU => 0,
        }
    }

    /// Output dims (channels, h, w) given input dims, or a dimension error
    /// if the shapes do not compose.
    pub fn out_dims(&self, dims: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (c, h, w) = dims;
        match self {
            Layer::Conv3x3 { in_ch, out_ch } => {
                if c != *in_ch {
                    return Err(Error::Dimension(format!(
                        "conv expects {in_ch} input channels, got {c}"
                    )));
                }
                Ok((*out_ch, h, w))
            }
            Layer::Dense { input, output } => {
                if c * h * w != *input {
                    return Err(Error::Dimension(format!(
                        "dense expects {input} inputs, got {c}x{h}x{w}"
                    )));
                }
                Ok((*output, 1, 1))
            }
            Layer::ReLU | Layer::SiLU => Ok(dims),
        }
    }
}

/// An ordered list of layers acting on flat [c*h*w] activations.
#[derive(Debug, Clone)]
pub struct Stack {
    pub layers: Vec<Layer>,
    offsets: Vec<usize>,
    param_len: usize,
}

/// Per-layer inputs saved during the forward pass.
pub struct StackCache<S> {
    inputs: Vec<Vec<S>>,
    in_dims: (usize, usize, usize),
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Self {
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0usize;
        for l in &layers {
            offsets.push(total);
            total += l.param_len();
        }
        Self {
            layers,
            offsets,
            param_len: total,
        }
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    pub fn out_dims(&self, mut dims: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        for l in &self.layers {
            dims = l.out_dims(dims)?;
        }
        Ok(dims)
    }

    pub fn forward<S: Scalar>(
        &self,
        params: &[S],
        input: Vec<S>,
        in_dims: (usize, usize, usize),
    ) -> Result<(Vec<S>, StackCache<S>)> {
        debug_assert_eq!(params.len(), self.param_len);
        let mut cur = input;
        let mut dims = in_dims;
        let mut inputs = Vec::with_capacity(self.layers.len());
        for (l, &off) in self.layers.iter().zip(&self.offsets) {
            let next_dims = l.out_dims(dims)?;
            let mut out = vec![S::zero(); next_dims.0 * next_dims.1 * next_dims.2];
            let p = &params[off..off + l.param_len()];
            match l {
                Layer::Conv3x3 { in_ch, out_ch } => {
                    let wlen = out_ch * in_ch * 9;
                    conv3x3_forward(&cur, dims.0, dims.1, dims.2, &p[..wlen], &p[wlen..], *out_ch, &mut out);
                }
                Layer::Dense { input: n, output } => {
                    let wlen = output * n;
                    dense_forward(&cur, &p[..wlen], &p[wlen..], &mut out);
                }
                Layer::ReLU => relu_forward(&cur, &mut out),
                Layer::SiLU => silu_forward(&cur, &mut out),
            }
            inputs.push(std::mem::replace(&mut cur, out));
            dims = next_dims;
        }
        Ok((
            cur,
            StackCache {
                inputs,
                in_dims,
            },
        ))
    }

    /// Backpropagates `grad_out` through the stack, accumulating parameter
    /// gradients into `grad_params` and returning the input gradient.
    pub fn backward<S: Scalar>(
        &self,
        params: &[S],
        cache: &StackCache<S>,
        grad_out: Vec<S>,
        grad_params: &mut [S],
    ) -> Result<Vec<S>> {
        debug_assert_eq!(grad_params.len(), self.param_len);
        // Recompute per-layer input dims going forward.
        let mut dims_list = Vec::with_capacity(self.layers.len());
        let mut dims = cache.in_dims;
        for l in &self.layers {
            dims_list.push(dims);
            dims = l.out_dims(dims)?;
        }
        let mut grad = grad_out;
        for idx in (0..self.layers.len()).rev() {
            let l = &self.layers[idx];
            let off = self.offsets[idx];
            let p = &params[off..off + l.param_len()];
            let gp = &mut grad_params[off..off + l.param_len()];
            let input = &cache.inputs[idx];
            let in_dims = dims_list[idx];
            let mut grad_in = vec![S::zero(); input.len()];
            match l {
                Layer::Conv3x3 { in_ch, out_ch } => {
                    let wlen = out_ch * in_ch * 9;
                    let (gw, gb) = gp.split_at_mut(wlen);
                    conv3x3_backward(
                        input, in_dims.0, in_dims.1, in_dims.2, &p[..wlen], *out_ch, &grad, gw,
                        gb, &mut grad_in,
                    );
                }
                Layer::Dense { input: n, output } => {
                    let wlen = output * n;
                    let (gw, gb) = gp.split_at_mut(wlen);
                    dense_backward(input, &p[..wlen], &grad, gw, gb, &mut grad_in);
                }
                Layer::ReLU => relu_backward(input, &grad, &mut grad_in),
                Layer::SiLU => silu_backward(input, &grad, &mut grad_in),
            }
            grad = grad_in;
        }
        Ok(grad)
    }
}

/// Architecture hyperparameters of the default denoiser head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    /// Hidden channels per convolution.
    pub channels: usize,
    /// Number of hidden Conv3x3+SiLU blocks before the final projection.
    pub depth: usize,
    /// Width of the noise-embedding MLP hidden layer.
    pub embed_dim: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            channels: 32,
            depth: 6,
            embed_dim: 32,
        }
    }
}

/// The conditional denoiser network F(x_in, c_noise, c).
///
/// Input and condition are concatenated along the channel axis; the noise
/// embedding is broadcast-added per channel after the first convolution.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    main: Stack,
    embed: Stack,
    pub params: Vec<f32>,
}

/// Activations saved by `forward_cached` for the backward pass.
pub struct NetCache {
    main_cache: StackCache<f32>,
    embed_cache: StackCache<f32>,
    dims: (usize, usize, usize),
}

impl Network {
    /// Builds the network with seeded He-normal weights and a
    /// zero-initialized final convolution.
    pub fn new(spec: NetworkSpec, rng: &mut RngState) -> Self {
        let ch = spec.channels;
        let mut layers = vec![Layer::Conv3x3 { in_ch: 2, out_ch: ch }, Layer::SiLU];
        for _ in 1..spec.depth {
            layers.push(Layer::Conv3x3 { in_ch: ch, out_ch: ch });
            layers.push(Layer::SiLU);
        }
        layers.push(Layer::Conv3x3 { in_ch: ch, out_ch: 1 });
        let main = Stack::new(layers);
        let embed = Stack::new(vec![
            Layer::Dense { input: 1, output: spec.embed_dim },
            Layer::SiLU,
            Layer::Dense { input: spec.embed_dim, output: ch },
        ]);

        let mut params = vec![0.0f32; main.param_len() + embed.param_len()];
        let mut off = 0usize;
        let n_main = main.layers.len();
        for (i, l) in main.layers.iter().chain(embed.layers.iter()).enumerate() {
            let len = l.param_len();
            let zero_init = i == n_main - 1; // final projection starts at zero
            if !zero_init {
                init_layer(l, &mut params[off..off + len], rng);
            }
            off += len;
        }
        Self {
            spec,
            main,
            embed,
            params,
        }
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    pub fn main_param_len(&self) -> usize {
        self.main.param_len()
    }

    /// Same architecture with different parameter values.
    pub fn with_params(&self, params: Vec<f32>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        Ok(Self {
            spec: self.spec,
            main: self.main.clone(),
            embed: self.embed.clone(),
            params,
        })
    }

    pub fn forward(&self, x_in: &Tensor, c_noise: f32, cond: &Tensor) -> Result<Tensor> {
        self.forward_cached(x_in, c_noise, cond).map(|(out, _)| out)
    }

    /// Forward pass keeping every layer input for backpropagation.
    pub fn forward_cached(&self, x_in: &Tensor, c_noise: f32, cond: &Tensor) -> Result<(Tensor, NetCache)> {
        let (h, w) = net_dims(x_in)?;
        if x_in.shape() != cond.shape() {
            return Err(Error::Dimension(format!(
                "input {:?} and condition {:?} shapes differ",
                x_in.shape(),
                cond.shape()
            )));
        }
        let ch = self.spec.channels;
        let plane = h * w;

        let mut cat = Vec::with_capacity(2 * plane);
        cat.extend_from_slice(x_in.data());
        cat.extend_from_slice(cond.data());

        let (main_p, embed_p) = self.params.split_at(self.main.param_len());

        // Embed path: scalar noise label -> per-channel bias.
        let (bias, embed_cache) = self.embed.forward(embed_p, vec![c_noise], (1, 1, 1))?;

        // First conv, then the broadcast add, then the rest of the stack.
        // The stack is driven manually here so the add point sits between
        // layer 0 and layer 1.
        let first = &self.main.layers[0];
        let first_len = first.param_len();
        let mut h1 = vec![0.0f32; ch * plane];
        match first {
            Layer::Conv3x3 { in_ch, out_ch } => {
                let wlen = out_ch * in_ch * 9;
                conv3x3_forward(&cat, 2, h, w, &main_p[..wlen], &main_p[wlen..first_len], *out_ch, &mut h1);
            }
            _ => unreachable!("first main layer is a convolution by construction"),
        }
        for (c_idx, b) in bias.iter().enumerate() {
            for v in &mut h1[c_idx * plane..(c_idx + 1) * plane] {
                *v += *b;
            }
        }

        let rest = Stack::new(self.main.layers[1..].to_vec());
        let (out, rest_cache) = rest.forward(&main_p[first_len..], h1, (ch, h, w))?;

        // Stitch the two partial caches into one main cache: layer 0's input
        // is the concatenated pair, the rest are the sub-stack's records.
        let mut inputs = Vec::with_capacity(self.main.layers.len());
        inputs.push(cat);
        inputs.extend(rest_cache.inputs);
        let main_cache = StackCache {
            inputs,
            in_dims: (2, h, w),
        };

        let out_t = Tensor::new(x_in.shape().to_vec(), out)?;
        Ok((
            out_t,
            NetCache {
                main_cache,
                embed_cache,
                dims: (ch, h, w),
            },
        ))
    }

    /// Backpropagates the output gradient, accumulating into `grad_params`
    /// (laid out exactly like `self.params`).
    pub fn backward(&self, cache: &NetCache, grad_out: &Tensor, grad_params: &mut [f32]) -> Result<()> {
        debug_assert_eq!(grad_params.len(), self.params.len());
        let (ch, h, w) = cache.dims;
        let plane = h * w;
        let (main_p, embed_p) = self.params.split_at(self.main.param_len());
        let (main_g, embed_g) = grad_params.split_at_mut(self.main.param_len());

        let first = &self.main.layers[0];
        let first_len = first.param_len();
        let rest = Stack::new(self.main.layers[1..].to_vec());
        let rest_cache = StackCache {
            inputs: cache.main_cache.inputs[1..].to_vec(),
            in_dims: (ch, h, w),
        };
        let grad_h1 = rest.backward(
            &main_p[first_len..],
            &rest_cache,
            grad_out.data().to_vec(),
            &mut main_g[first_len..],
        )?;

        // Split at the broadcast add: per-channel sums feed the embedding,
        // the full map feeds the first convolution.
        let mut grad_bias_embed = vec![0.0f32; ch];
        for c_idx in 0..ch {
            grad_bias_embed[c_idx] = grad_h1[c_idx * plane..(c_idx + 1) * plane].iter().sum();
        }
        self.embed
            .backward(embed_p, &cache.embed_cache, grad_bias_embed, embed_g)?;

        match first {
            Layer::Conv3x3 { in_ch, out_ch } => {
                let wlen = out_ch * in_ch * 9;
                let (gw, gb) = main_g[..first_len].split_at_mut(wlen);
                let mut grad_cat = vec![0.0f32; 2 * plane];
                conv3x3_backward(
                    &cache.main_cache.inputs[0],
                    *in_ch,
                    h,
                    w,
                    &main_p[..wlen],
                    *out_ch,
                    &grad_h1,
                    gw,
                    gb,
                    &mut grad_cat,
                );
            }
            _ => unreachable!(),
        }
        Ok(())
    }
}

/// Grid interpretation of a network input: images pass through, rank-1
/// signals (points, scalars) act as 1-pixel-tall images.
fn net_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [n] => Ok((1, *n)),
        [h, w] => Ok((*h, *w)),
        [1, h, w] => Ok((*h, *w)),
        other => Err(Error::Dimension(format!(
            "expected [N], [H,W] or [1,H,W] input, got {other:?}"
        ))),
    }
}

fn init_layer(layer: &Layer, slot: &mut [f32], rng: &mut RngState) {
    let (fan_in, weight_len) = match layer {
        Layer::Conv3x3 { in_ch, out_ch } => (in_ch * 9, out_ch * in_ch * 9),
        Layer::Dense { input, output } => (*input, output * input),
        _ => return,
    };
    let std = (2.0 / fan_in as f64).sqrt() as f32;
    for v in &mut slot[..weight_len] {
        *v = rng.normal_f32() * std;
    }
    // Biases start at zero.
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::randn;

    fn tiny_net(rng: &mut RngState) -> Network {
        Network::new(
            NetworkSpec {
                channels: 4,
                depth: 2,
                embed_dim: 3,
            },
            rng,
        )
    }

    #[test]
    fn zero_final_layer_outputs_zero() {
        let mut rng = RngState::new(50);
        let net = tiny_net(&mut rng);
        let x = randn(vec![1, 5, 5], &mut rng);
        let c = randn(vec![1, 5, 5], &mut rng);
        let out = net.forward(&x, 0.3, &c).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic_and_shape_preserving() {
        let mut rng = RngState::new(51);
        let mut net = tiny_net(&mut rng);
        // Give the final layer nonzero weights so the output is nontrivial.
        let n = net.params.len();
        for v in &mut net.params[n - 37..] {
            *v = 0.05;
        }
        let x = randn(vec![1, 6, 4], &mut rng);
        let c = randn(vec![1, 6, 4], &mut rng);
        let a = net.forward(&x, -0.5, &c).unwrap();
        let b = net.forward(&x, -0.5, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), x.shape());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = RngState::new(52);
        let net = tiny_net(&mut rng);
        let x = randn(vec![1, 4, 4], &mut rng);
        let c = randn(vec![1, 5, 5], &mut rng);
        assert!(net.forward(&x, 0.0, &c).is_err());
    }

    #[test]
    fn batch_equivariance() {
        // Items processed independently: permuting inputs permutes outputs.
        let mut rng = RngState::new(53);
        let mut net = tiny_net(&mut rng);
        let n = net.params.len();
        for (i, v) in net.params[n - 37..].iter_mut().enumerate() {
            *v = 0.02 * (i as f32 - 18.0);
        }
        let items: Vec<(Tensor, Tensor)> = (0..3)
            .map(|_| (randn(vec![1, 4, 4], &mut rng), randn(vec![1, 4, 4], &mut rng)))
            .collect();
        let outs: Vec<Tensor> = items
            .iter()
            .map(|(x, c)| net.forward(x, 0.1, c).unwrap())
            .collect();
        for perm in [[2usize, 0, 1], [1, 2, 0]] {
            for (k, &src) in perm.iter().enumerate() {
                let out = net.forward(&items[src].0, 0.1, &items[src].1).unwrap();
                assert_eq!(out, outs[src], "perm slot {k}");
            }
        }
    }

    #[test]
    fn embed_bias_shifts_first_layer() {
        let mut rng = RngState::new(54);
        let mut net = tiny_net(&mut rng);
        let n = net.params.len();
        for v in &mut net.params[n - 37..] {
            *v = 0.05;
        }
        let x = randn(vec![1, 4, 4], &mut rng);
        let c = randn(vec![1, 4, 4], &mut rng);
        let a = net.forward(&x, -1.0, &c).unwrap();
        let b = net.forward(&x, 1.0, &c).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() > 0.0, "noise label must matter");
    }
}
