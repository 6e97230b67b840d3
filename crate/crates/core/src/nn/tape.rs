//! The autodiff tape: a define-by-run graph over `ArrayD<f64>`.

use super::params::ParamStore;
use super::TensorD;
use ndarray::{Axis, Ix2, IxDyn, Slice};
use std::collections::HashMap;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

type BackFn = Box<dyn Fn(&Tape, &TensorD) -> Vec<(usize, TensorD)>>;

struct Node {
    value: TensorD,
    backward: Option<BackFn>,
}

/// Gradients keyed by node id, with named parameter extraction.
pub struct Gradients {
    grads: Vec<Option<TensorD>>,
    bindings: Vec<(String, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&TensorD> {
        self.grads[v.0].as_ref()
    }

    /// Accumulated gradient per bound parameter name (zero-filled when a
    /// parameter did not participate in the loss).
    pub fn params(&self, store: &ParamStore) -> std::collections::BTreeMap<String, TensorD> {
        let mut out = std::collections::BTreeMap::new();
        for (name, var) in &self.bindings {
            let g = self.grads[var.0]
                .clone()
                .unwrap_or_else(|| super::zeros(store.get(name).shape()));
            out.entry(name.clone())
                .and_modify(|acc: &mut TensorD| *acc += &g)
                .or_insert(g);
        }
        out
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<String, Var>,
    bindings: Vec<(String, Var)>,
    frozen_prefixes: Vec<String>,
}

fn bcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "shapes {a:?} and {b:?} do not broadcast"
        );
        out[i] = da.max(db);
    }
    out
}

/// Contiguous standard-layout copy (no-op copy when already standard).
fn to_standard(x: &TensorD) -> TensorD {
    if x.is_standard_layout() {
        x.clone()
    } else {
        x.as_standard_layout().into_owned()
    }
}

/// Sum `g` down to `shape` (inverse of broadcasting).
fn unbroadcast(g: &TensorD, shape: &[usize]) -> TensorD {
    let mut out = g.clone();
    while out.ndim() > shape.len() {
        out = out.sum_axis(Axis(0));
    }
    for (ax, (&have, &want)) in out.shape().to_vec().iter().zip(shape).enumerate() {
        if have != want {
            debug_assert_eq!(want, 1);
            out = out
                .sum_axis(Axis(ax))
                .insert_axis(Axis(ax));
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, v: Var) -> &TensorD {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.len(), 1);
        *t.iter().next().unwrap()
    }

    fn push(&mut self, value: TensorD, backward: Option<BackFn>) -> Var {
        self.nodes.push(Node { value, backward });
        Var(self.nodes.len() - 1)
    }

    /// A leaf with no gradient flow (inputs, constants).
    pub fn constant(&mut self, value: TensorD) -> Var {
        self.push(value, None)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(ndarray::arr0(v).into_dyn())
    }

    /// A differentiable leaf (tracked but unnamed).
    pub fn leaf(&mut self, value: TensorD) -> Var {
        self.push(value, Some(Box::new(|_, _| Vec::new())))
    }

    /// Parameters whose names start with `prefix` lift as constants from now
    /// on: no gradient will reach them. Call before the first lift.
    pub fn freeze(&mut self, prefix: &str) {
        self.frozen_prefixes.push(prefix.to_string());
    }

    /// Lift a named parameter from the store; repeated lifts share the node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.param_vars.get(name) {
            return v;
        }
        let frozen = self.frozen_prefixes.iter().any(|p| name.starts_with(p.as_str()));
        let v = if frozen {
            self.constant(store.get(name).clone())
        } else {
            let v = self.leaf(store.get(name).clone());
            self.bindings.push((name.to_string(), v));
            v
        };
        self.param_vars.insert(name.to_string(), v);
        v
    }

    // -- elementwise binary (broadcasting) ----------------------------------

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(&TensorD, &TensorD) -> TensorD,
        back: impl Fn(&Tape, &TensorD, Var, Var) -> (TensorD, TensorD) + 'static,
    ) -> Var {
        let out_shape = bcast_shape(self.value(a).shape(), self.value(b).shape());
        let va = self.value(a).broadcast(IxDyn(&out_shape)).unwrap().to_owned();
        let vb = self.value(b).broadcast(IxDyn(&out_shape)).unwrap().to_owned();
        let value = f(&va, &vb);
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        self.push(
            value,
            Some(Box::new(move |t, g| {
                let (ga, gb) = back(t, g, a, b);
                vec![(a.0, unbroadcast(&ga, &sa)), (b.0, unbroadcast(&gb, &sb))]
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, |_, g, _, _| (g.clone(), g.clone()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, |_, g, _, _| (g.clone(), -g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            |x, y| x * y,
            |t, g, a, b| {
                let shape = g.shape();
                let va = t.value(a).broadcast(IxDyn(shape)).unwrap().to_owned();
                let vb = t.value(b).broadcast(IxDyn(shape)).unwrap().to_owned();
                (g * &vb, g * &va)
            },
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            |x, y| x / y,
            |t, g, a, b| {
                let shape = g.shape();
                let va = t.value(a).broadcast(IxDyn(shape)).unwrap().to_owned();
                let vb = t.value(b).broadcast(IxDyn(shape)).unwrap().to_owned();
                (g / &vb, -(g * &va) / (&vb * &vb))
            },
        )
    }

    // -- elementwise unary ---------------------------------------------------

    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(&TensorD) -> TensorD,
        back: impl Fn(&Tape, &TensorD, Var, &TensorD) -> TensorD + 'static,
    ) -> Var {
        let value = f(self.value(a));
        let out_val = value.clone();
        self.push(
            value,
            Some(Box::new(move |t, g| vec![(a.0, back(t, g, a, &out_val))]))
        )
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, |_, g, _, _| -g)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, move |x| x * c, move |_, g, _, _| g * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, move |x| x + c, |_, g, _, _| g.clone())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, |t, g, a, _| g * &(t.value(a) * 2.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.mapv(f64::exp), |_, g, _, y| g * y)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.mapv(f64::ln), |t, g, a, _| g / t.value(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.mapv(f64::sqrt), |_, g, _, y| g / &(y * 2.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.mapv(f64::tanh),
            |_, g, _, y| g * &y.mapv(|v| 1.0 - v * v),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.mapv(|v| 1.0 / (1.0 + (-v).exp())),
            |_, g, _, y| g * &y.mapv(|v| v * (1.0 - v)),
        )
    }

    /// ln(1 + e^x), computed stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.mapv(|v| v.max(0.0) + (-v.abs()).exp().ln_1p()),
            |t, g, a, _| g * &t.value(a).mapv(|v| 1.0 / (1.0 + (-v).exp())),
        )
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.mapv(f64::abs),
            |t, g, a, _| g * &t.value(a).mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 }),
        )
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        self.unary(
            a,
            move |x| x.mapv(|v| if v > 0.0 { v } else { alpha * v }),
            move |t, g, a, _| g * &t.value(a).mapv(|v| if v > 0.0 { 1.0 } else { alpha }),
        )
    }

    /// Elementwise Huber penalty of a residual.
    pub fn huber(&mut self, residual: Var, delta: f64) -> Var {
        self.unary(
            residual,
            move |x| {
                x.mapv(|r| {
                    if r.abs() <= delta {
                        0.5 * r * r
                    } else {
                        delta * (r.abs() - 0.5 * delta)
                    }
                })
            },
            move |t, g, a, _| g * &t.value(a).mapv(|r| r.clamp(-delta, delta)),
        )
    }

    // -- structure ------------------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let orig = self.value(a).shape().to_vec();
        let value = to_standard(self.value(a))
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: size mismatch");
        self.push(
            value,
            Some(Box::new(move |_, g| {
                vec![(a.0, to_standard(g).into_shape_with_order(IxDyn(&orig)).unwrap())]
            })),
        )
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Var {
        let axes_v = axes.to_vec();
        let mut inverse = vec![0; axes.len()];
        for (i, &ax) in axes.iter().enumerate() {
            inverse[ax] = i;
        }
        let value = self
            .value(a)
            .clone()
            .permuted_axes(IxDyn(&axes_v))
            .as_standard_layout()
            .to_owned();
        self.push(
            value,
            Some(Box::new(move |_, g| {
                vec![(
                    a.0,
                    g.clone()
                        .permuted_axes(IxDyn(&inverse))
                        .as_standard_layout()
                        .to_owned(),
                )]
            })),
        )
    }

    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Var {
        let orig = self.value(a).shape().to_vec();
        let value = self.value(a).broadcast(IxDyn(shape)).expect("broadcast_to").to_owned();
        self.push(
            value,
            Some(Box::new(move |_, g| vec![(a.0, unbroadcast(g, &orig))])),
        )
    }

    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Var {
        let full_shape = self.value(a).shape().to_vec();
        let value = self
            .value(a)
            .slice_axis(Axis(axis), Slice::from(start..end))
            .to_owned();
        self.push(
            value,
            Some(Box::new(move |_, g| {
                let mut gx = super::zeros(&full_shape);
                gx.slice_axis_mut(Axis(axis), Slice::from(start..end))
                    .assign(g);
                vec![(a.0, gx)]
            })),
        )
    }

    pub fn concat(&mut self, axis: usize, vars: &[Var]) -> Var {
        let views: Vec<_> = vars.iter().map(|&v| self.value(v).view()).collect();
        let value = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
        let ids: Vec<usize> = vars.iter().map(|v| v.0).collect();
        let sizes: Vec<usize> = vars.iter().map(|&v| self.value(v).shape()[axis]).collect();
        self.push(
            value,
            Some(Box::new(move |_, g| {
                let mut out = Vec::new();
                let mut offset = 0;
                for (&id, &sz) in ids.iter().zip(&sizes) {
                    out.push((
                        id,
                        g.slice_axis(Axis(axis), Slice::from(offset..offset + sz)).to_owned(),
                    ));
                    offset += sz;
                }
                out
            })),
        )
    }

    // -- reductions -------------------------------------------------------------

    pub fn sum_all(&mut self, a: Var) -> Var {
        let shape = self.value(a).shape().to_vec();
        let value = ndarray::arr0(self.value(a).sum()).into_dyn();
        self.push(
            value,
            Some(Box::new(move |_, g| {
                let gs = *g.iter().next().unwrap();
                vec![(a.0, super::full(&shape, gs))]
            })),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_axis_keep(&mut self, a: Var, axis: usize) -> Var {
        let shape = self.value(a).shape().to_vec();
        let value = self.value(a).sum_axis(Axis(axis)).insert_axis(Axis(axis));
        self.push(
            value,
            Some(Box::new(move |_, g| {
                vec![(a.0, g.broadcast(IxDyn(&shape)).unwrap().to_owned())]
            })),
        )
    }

    pub fn mean_axis_keep(&mut self, a: Var, axis: usize) -> Var {
        let n = self.value(a).shape()[axis] as f64;
        let s = self.sum_axis_keep(a, axis);
        self.scale(s, 1.0 / n)
    }

    // -- linear algebra -----------------------------------------------------------

    /// (m,k) x (k,n) -> (m,n)
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let va = self.value(a).view().into_dimensionality::<Ix2>().expect("matmul lhs 2d");
        let vb = self.value(b).view().into_dimensionality::<Ix2>().expect("matmul rhs 2d");
        let value = va.dot(&vb).into_dyn();
        self.push(
            value,
            Some(Box::new(move |t, g| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let va = t.value(a).view().into_dimensionality::<Ix2>().unwrap();
                let vb = t.value(b).view().into_dimensionality::<Ix2>().unwrap();
                vec![
                    (a.0, g2.dot(&vb.t()).into_dyn()),
                    (b.0, va.t().dot(&g2).into_dyn()),
                ]
            })),
        )
    }

    /// (B,m,k) x (B,k,n) -> (B,m,n)
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Var {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        assert_eq!(sa.len(), 3);
        assert_eq!(sb.len(), 3);
        assert_eq!(sa[0], sb[0]);
        assert_eq!(sa[2], sb[1]);
        let batch = sa[0];
        let mut value = super::zeros(&[batch, sa[1], sb[2]]);
        {
            let va = self.value(a);
            let vb = self.value(b);
            for i in 0..batch {
                let ai = va.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                let bi = vb.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                value
                    .index_axis_mut(Axis(0), i)
                    .assign(&ai.dot(&bi).into_dyn());
            }
        }
        self.push(
            value,
            Some(Box::new(move |t, g| {
                let va = t.value(a);
                let vb = t.value(b);
                let mut ga = super::zeros(&sa);
                let mut gb = super::zeros(&sb);
                for i in 0..batch {
                    let gi = g.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                    let ai = va.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                    let bi = vb.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                    ga.index_axis_mut(Axis(0), i).assign(&gi.dot(&bi.t()).into_dyn());
                    gb.index_axis_mut(Axis(0), i).assign(&ai.t().dot(&gi).into_dyn());
                }
                vec![(a.0, ga), (b.0, gb)]
            })),
        )
    }

    // -- softmax family ----------------------------------------------------------

    /// Softmax along `axis` (numerically stabilized).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Var {
        let x = self.value(a);
        let maxes = x.fold_axis(Axis(axis), f64::NEG_INFINITY, |&m, &v| m.max(v)).insert_axis(Axis(axis));
        let shifted = x - &maxes.broadcast(x.raw_dim()).unwrap();
        let e = shifted.mapv(f64::exp);
        let denom = e.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        let y = &e / &denom.broadcast(e.raw_dim()).unwrap();
        let y_saved = y.clone();
        self.push(
            y,
            Some(Box::new(move |_, g| {
                let dot = (g * &y_saved).sum_axis(Axis(axis)).insert_axis(Axis(axis));
                let gx = &y_saved * &(g - &dot.broadcast(g.raw_dim()).unwrap());
                vec![(a.0, gx)]
            })),
        )
    }

    /// Log-softmax along `axis`.
    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Var {
        let x = self.value(a);
        let maxes = x.fold_axis(Axis(axis), f64::NEG_INFINITY, |&m, &v| m.max(v)).insert_axis(Axis(axis));
        let shifted = x - &maxes.broadcast(x.raw_dim()).unwrap();
        let logsum = shifted
            .mapv(f64::exp)
            .sum_axis(Axis(axis))
            .mapv(f64::ln)
            .insert_axis(Axis(axis));
        let y = &shifted - &logsum.broadcast(shifted.raw_dim()).unwrap();
        let soft = y.mapv(f64::exp);
        self.push(
            y,
            Some(Box::new(move |_, g| {
                let gsum = g.sum_axis(Axis(axis)).insert_axis(Axis(axis));
                let gx = g - &(&soft * &gsum.broadcast(g.raw_dim()).unwrap());
                vec![(a.0, gx)]
            })),
        )
    }

    // -- gather / scatter ----------------------------------------------------------

    /// Rows of a (V,C) table -> (N,C).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let v = self.value(table);
        assert_eq!(v.ndim(), 2);
        let (rows, cols) = (v.shape()[0], v.shape()[1]);
        let idx_v = idx.to_vec();
        let mut value = super::zeros(&[idx.len(), cols]);
        for (i, &r) in idx.iter().enumerate() {
            assert!(r < rows, "gather_rows index out of range");
            value.index_axis_mut(Axis(0), i).assign(&v.index_axis(Axis(0), r));
        }
        self.push(
            value,
            Some(Box::new(move |_, g| {
                let mut gt = super::zeros(&[rows, cols]);
                for (i, &r) in idx_v.iter().enumerate() {
                    let mut row = gt.index_axis_mut(Axis(0), r);
                    row += &g.index_axis(Axis(0), i);
                }
                vec![(table.0, gt)]
            })),
        )
    }

    // -- temporal ops -----------------------------------------------------------

    /// im2col over the time axis: (B,T,C) -> (B,T_out,K*C) with zero padding.
    pub fn unfold_time(&mut self, a: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let shape = self.value(a).shape().to_vec();
        assert_eq!(shape.len(), 3);
        let (b, t, c) = (shape[0], shape[1], shape[2]);
        let t_padded = t + 2 * pad;
        assert!(t_padded >= kernel, "unfold_time: input shorter than kernel");
        let t_out = (t_padded - kernel) / stride + 1;
        let mut value = super::zeros(&[b, t_out, kernel * c]);
        {
            let x = self.value(a);
            for bi in 0..b {
                for to in 0..t_out {
                    for k in 0..kernel {
                        let tp = to * stride + k;
                        if tp < pad || tp >= pad + t {
                            continue;
                        }
                        let ti = tp - pad;
                        for ci in 0..c {
                            value[[bi, to, k * c + ci]] = x[[bi, ti, ci]];
                        }
                    }
                }
            }
        }
        self.push(
            value,
            Some(Box::new(move |_, g| {
                let mut gx = super::zeros(&[b, t, c]);
                for bi in 0..b {
                    for to in 0..t_out {
                        for k in 0..kernel {
                            let tp = to * stride + k;
                            if tp < pad || tp >= pad + t {
                                continue;
                            }
                            let ti = tp - pad;
                            for ci in 0..c {
                                gx[[bi, ti, ci]] += g[[bi, to, k * c + ci]];
                            }
                        }
                    }
                }
                vec![(a.0, gx)]
            })),
        )
    }

    /// Nearest-neighbor x2 upsampling along time: (B,T,C) -> (B,2T,C).
    pub fn upsample2_time(&mut self, a: Var) -> Var {
        let shape = self.value(a).shape().to_vec();
        let (b, t, c) = (shape[0], shape[1], shape[2]);
        let mut value = super::zeros(&[b, 2 * t, c]);
        {
            let x = self.value(a);
            for bi in 0..b {
                for ti in 0..t {
                    for ci in 0..c {
                        let v = x[[bi, ti, ci]];
                        value[[bi, 2 * ti, ci]] = v;
                        value[[bi, 2 * ti + 1, ci]] = v;
                    }
                }
            }
        }
        self.push(
            value,
            Some(Box::new(move |_, g| {
                let mut gx = super::zeros(&[b, t, c]);
                for bi in 0..b {
                    for ti in 0..t {
                        for ci in 0..c {
                            gx[[bi, ti, ci]] = g[[bi, 2 * ti, ci]] + g[[bi, 2 * ti + 1, ci]];
                        }
                    }
                }
                vec![(a.0, gx)]
            })),
        )
    }

    // -- gradient routing ---------------------------------------------------------

    /// Detach: forward copy, no gradient.
    pub fn stop_grad(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.constant(value)
    }

    /// Straight-through: forward value is `replacement`, gradient flows to
    /// `src` unchanged.
    pub fn straight_through(&mut self, src: Var, replacement: TensorD) -> Var {
        assert_eq!(self.value(src).shape(), replacement.shape());
        self.push(
            replacement,
            Some(Box::new(move |_, g| vec![(src.0, g.clone())])),
        )
    }

    // -- driver ------------------------------------------------------------------

    /// Reverse pass from a scalar (or any-shape) output seeded with ones.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads: Vec<Option<TensorD>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(super::full(self.value(out).shape(), 1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            if let Some(back) = &self.nodes[i].backward {
                for (parent, contrib) in back(self, &g) {
                    match &mut grads[parent] {
                        Some(acc) => *acc += &contrib,
                        slot => *slot = Some(contrib),
                    }
                }
            }
        }
        Gradients {
            grads,
            bindings: self.bindings.clone(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}
