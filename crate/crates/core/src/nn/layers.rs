//! Layers shared by the retargeting, diffusion, VQ and reward networks.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::TensorD;
use rand::Rng;

/// Dense layer over the last axis.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub bias: bool,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        store.init_uniform(&format!("{name}.w"), &[in_dim, out_dim], in_dim, rng);
        store.init_zeros(&format!("{name}.b"), &[out_dim]);
        Linear {
            name: name.to_string(),
            in_dim,
            out_dim,
            bias: true,
        }
    }

    pub fn new_no_bias(store: &mut ParamStore, rng: &mut impl Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        store.init_uniform(&format!("{name}.w"), &[in_dim, out_dim], in_dim, rng);
        Linear {
            name: name.to_string(),
            in_dim,
            out_dim,
            bias: false,
        }
    }

    /// x: (..., in_dim) -> (..., out_dim)
    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let shape = t.value(x).shape().to_vec();
        assert_eq!(*shape.last().unwrap(), self.in_dim, "{}: bad input dim", self.name);
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = t.reshape(x, &[rows, self.in_dim]);
        let w = t.param(store, &format!("{}.w", self.name));
        let mut y = t.matmul(flat, w);
        if self.bias {
            let b = t.param(store, &format!("{}.b", self.name));
            y = t.add(y, b);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_dim;
        t.reshape(y, &out_shape)
    }
}

/// Masked dense layer: the weight is elementwise-multiplied by a constant 0/1
/// mask before use, which pins the layer's support (skeletal convolutions).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MaskedLinear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub mask: TensorD,
}

impl MaskedLinear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        mask: TensorD,
    ) -> Self {
        assert_eq!(mask.ndim(), 2);
        let in_dim = mask.shape()[0];
        let out_dim = mask.shape()[1];
        // fan-in proportional to mask support per output column
        let fan = (mask.sum() / out_dim as f64).max(1.0) as usize;
        store.init_uniform(&format!("{name}.w"), &[in_dim, out_dim], fan, rng);
        store.init_zeros(&format!("{name}.b"), &[out_dim]);
        MaskedLinear {
            name: name.to_string(),
            in_dim,
            out_dim,
            mask,
        }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let shape = t.value(x).shape().to_vec();
        assert_eq!(*shape.last().unwrap(), self.in_dim, "{}: bad input dim", self.name);
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = t.reshape(x, &[rows, self.in_dim]);
        let w = t.param(store, &format!("{}.w", self.name));
        let m = t.constant(self.mask.clone());
        let wm = t.mul(w, m);
        let y0 = t.matmul(flat, wm);
        let b = t.param(store, &format!("{}.b", self.name));
        let y = t.add(y0, b);
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_dim;
        t.reshape(y, &out_shape)
    }
}

/// 1D temporal convolution: (B,T,C_in) -> (B,T_out,C_out).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Conv1d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        store.init_uniform(&format!("{name}.w"), &[kernel * in_ch, out_ch], kernel * in_ch, rng);
        store.init_zeros(&format!("{name}.b"), &[out_ch]);
        Conv1d {
            name: name.to_string(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        (t_in + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let cols = t.unfold_time(x, self.kernel, self.stride, self.pad);
        let w = t.param(store, &format!("{}.w", self.name));
        let b = t.param(store, &format!("{}.b", self.name));
        let shape = t.value(cols).shape().to_vec();
        let rows = shape[0] * shape[1];
        let flat = t.reshape(cols, &[rows, self.kernel * self.in_ch]);
        let y0 = t.matmul(flat, w);
        let y = t.add(y0, b);
        t.reshape(y, &[shape[0], shape[1], self.out_ch])
    }
}

/// Layer norm over the last axis.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        store.init_const(&format!("{name}.g"), &[dim], 1.0);
        store.init_zeros(&format!("{name}.b"), &[dim]);
        LayerNorm {
            name: name.to_string(),
            dim,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let last = t.value(x).ndim() - 1;
        let mu = t.mean_axis_keep(x, last);
        let xc = t.sub(x, mu);
        let sq = t.square(xc);
        let var = t.mean_axis_keep(sq, last);
        let var_eps = t.add_scalar(var, self.eps);
        let std = t.sqrt(var_eps);
        let norm = t.div(xc, std);
        let g = t.param(store, &format!("{}.g", self.name));
        let b = t.param(store, &format!("{}.b", self.name));
        let scaled = t.mul(norm, g);
        t.add(scaled, b)
    }
}

/// Attention masking policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AttnMask {
    /// every token attends to every token
    Full,
    /// token i attends to token j iff j's window is i's window or the one
    /// before it (windows of `window` tokens, split at `offset`)
    LocalWindows { window: usize, offset: usize },
}

/// Multi-head self-attention with a per-head learned relative-position bias.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MultiHeadAttention {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
    pub rpe_radius: usize,
    pub mask: AttnMask,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        heads: usize,
        rpe_radius: usize,
        mask: AttnMask,
    ) -> Self {
        assert_eq!(dim % heads, 0);
        for p in ["wq", "wk", "wv", "wo"] {
            store.init_uniform(&format!("{name}.{p}"), &[dim, dim], dim, rng);
        }
        store.init_zeros(&format!("{name}.rpe"), &[heads, 2 * rpe_radius + 1]);
        MultiHeadAttention {
            name: name.to_string(),
            dim,
            heads,
            rpe_radius,
            mask,
        }
    }

    fn mask_matrix(&self, t_len: usize) -> TensorD {
        let mut m = super::zeros(&[t_len, t_len]);
        if let AttnMask::LocalWindows { window, offset } = self.mask {
            for i in 0..t_len {
                for j in 0..t_len {
                    let wi = (i + offset) / window;
                    let wj = (j + offset) / window;
                    let visible = wj == wi || wj + 1 == wi;
                    if !visible {
                        m[[i, j]] = -1e9;
                    }
                }
            }
        }
        m
    }

    /// One-hot map from flattened (i,j) to clamped relative offset bucket.
    fn rpe_onehot(&self, t_len: usize) -> TensorD {
        let r = self.rpe_radius as isize;
        let buckets = 2 * self.rpe_radius + 1;
        let mut m = super::zeros(&[t_len * t_len, buckets]);
        for i in 0..t_len {
            for j in 0..t_len {
                let rel = (i as isize - j as isize).clamp(-r, r) + r;
                m[[i * t_len + j, rel as usize]] = 1.0;
            }
        }
        m
    }

    /// x: (B,T,dim) -> (B,T,dim)
    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let shape = t.value(x).shape().to_vec();
        let (b, t_len) = (shape[0], shape[1]);
        let h = self.heads;
        let hd = self.dim / h;
        let scale = 1.0 / (hd as f64).sqrt();

        let project = |t: &mut Tape, which: &str, x: Var| -> Var {
            let w = t.param(store, &format!("{}.{which}", self.name));
            let flat = t.reshape(x, &[b * t_len, self.dim]);
            let y = t.matmul(flat, w);
            // (B,T,H,hd) -> (B,H,T,hd) -> (B*H,T,hd)
            let y = t.reshape(y, &[b, t_len, h, hd]);
            let y = t.permute(y, &[0, 2, 1, 3]);
            t.reshape(y, &[b * h, t_len, hd])
        };
        let q = project(t, "wq", x);
        let k = project(t, "wk", x);
        let v = project(t, "wv", x);

        let kt = t.permute(k, &[0, 2, 1]);
        let logits = t.batch_matmul(q, kt);
        let logits = t.scale(logits, scale);

        // relative position bias, shared across the batch
        let onehot = t.constant(self.rpe_onehot(t_len));
        let rpe = t.param(store, &format!("{}.rpe", self.name));
        let rpe_t = t.permute(rpe, &[1, 0]);
        let bias_flat = t.matmul(onehot, rpe_t); // (T*T, H)
        let bias = t.reshape(bias_flat, &[t_len, t_len, h]);
        let bias = t.permute(bias, &[2, 0, 1]); // (H,T,T)
        let logits4 = t.reshape(logits, &[b, h, t_len, t_len]);
        let logits4 = t.add(logits4, bias);

        let mask = t.constant(self.mask_matrix(t_len));
        let logits4 = t.add(logits4, mask);

        let logits = t.reshape(logits4, &[b * h, t_len, t_len]);
        let attn = t.softmax(logits, 2);
        let ctx = t.batch_matmul(attn, v); // (B*H,T,hd)
        let ctx = t.reshape(ctx, &[b, h, t_len, hd]);
        let ctx = t.permute(ctx, &[0, 2, 1, 3]);
        let ctx = t.reshape(ctx, &[b * t_len, self.dim]);
        let wo = t.param(store, &format!("{}.wo", self.name));
        let out = t.matmul(ctx, wo);
        t.reshape(out, &[b, t_len, self.dim])
    }
}

/// Pre-norm transformer block: x + attn(LN(x)), then x + FFN(LN(x)).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TransformerBlock {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl TransformerBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        heads: usize,
        ff_mult: usize,
        rpe_radius: usize,
        mask: AttnMask,
    ) -> Self {
        TransformerBlock {
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), dim, heads, rpe_radius, mask),
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ff1: Linear::new(store, rng, &format!("{name}.ff1"), dim, dim * ff_mult),
            ff2: Linear::new(store, rng, &format!("{name}.ff2"), dim * ff_mult, dim),
        }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let n1 = self.ln1.forward(t, store, x);
        let a = self.attn.forward(t, store, n1);
        let x = t.add(x, a);
        let n2 = self.ln2.forward(t, store, x);
        let h = self.ff1.forward(t, store, n2);
        let h = t.leaky_relu(h, 0.01);
        let h = self.ff2.forward(t, store, h);
        t.add(x, h)
    }
}

/// Sinusoidal embedding of an integer step (computed outside the tape).
pub fn sinusoidal_embedding(step: usize, dim: usize) -> TensorD {
    let mut out = super::zeros(&[dim]);
    for i in 0..dim / 2 {
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[[2 * i]] = (step as f64 * freq).sin();
        out[[2 * i + 1]] = (step as f64 * freq).cos();
    }
    out
}

/// Mean over the time axis of (B,T,C) -> (B,C).
pub fn mean_over_time(t: &mut Tape, x: Var) -> Var {
    let m = t.mean_axis_keep(x, 1);
    let shape = t.value(m).shape().to_vec();
    t.reshape(m, &[shape[0], shape[2]])
}
