//! Reverse-mode automatic differentiation on `[batch, channel, height, width]`
//! tensors.
//!
//! A forward pass appends nodes to a [`Graph`]; [`Graph::backward`] walks the
//! tape in reverse and accumulates gradients for every node that (transitively)
//! depends on a parameter leaf. All arithmetic is f64 and single-threaded per
//! graph, so two identical passes are bit-identical.

use ndarray::{s, Array2, Array3, Array4, Axis};

use crate::conv;
use crate::tonemap;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    /// Constant input; no gradient is tracked through it.
    Input,
    /// Trainable leaf; gradients are accumulated for it.
    Param,
    Conv2d { x: NodeId, w: NodeId, pad: usize },
    BiasAdd { x: NodeId, b: NodeId },
    LeakyRelu { x: NodeId, slope: f64 },
    Sigmoid { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, factor: f64 },
    ConcatChannels { xs: Vec<NodeId> },
    SliceChannels { x: NodeId, from: usize, to: usize },
    GlobalAvgPool { x: NodeId },
    Linear { x: NodeId, w: NodeId },
    GroupSoftmax { x: NodeId, groups: usize },
    MulChannels { x: NodeId, scale: NodeId },
    MulPixels { x: NodeId, gate: NodeId },
    ChannelStats { x: NodeId },
    TonemappedL1 { pred: NodeId, target: NodeId, mu: f64 },
}

struct Node {
    op: Op,
    value: Array4<f64>,
    requires_grad: bool,
    /// Per-pixel channel argmax for `ChannelStats`, used by its backward pass.
    argmax: Option<Array3<usize>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Option<Array4<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array4<f64>> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Array4<f64>> {
        self.grads[id.0].take()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &Array4<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.nodes[id.0].value;
        assert_eq!(v.len(), 1, "node is not a scalar");
        v[[0, 0, 0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Array4<f64>, argmax: Option<Array3<usize>>) -> NodeId {
        let requires_grad = match &op {
            Op::Input => false,
            Op::Param => true,
            Op::Conv2d { x, w, .. } => self.rg(*x) || self.rg(*w),
            Op::BiasAdd { x, b } => self.rg(*x) || self.rg(*b),
            Op::LeakyRelu { x, .. }
            | Op::Sigmoid { x }
            | Op::Scale { x, .. }
            | Op::SliceChannels { x, .. }
            | Op::GlobalAvgPool { x }
            | Op::GroupSoftmax { x, .. }
            | Op::ChannelStats { x } => self.rg(*x),
            Op::Add { a, b } => self.rg(*a) || self.rg(*b),
            Op::ConcatChannels { xs } => xs.iter().any(|x| self.rg(*x)),
            Op::Linear { x, w } => self.rg(*x) || self.rg(*w),
            Op::MulChannels { x, scale } => self.rg(*x) || self.rg(*scale),
            Op::MulPixels { x, gate } => self.rg(*x) || self.rg(*gate),
            Op::TonemappedL1 { pred, .. } => self.rg(*pred),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            argmax,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn val(&self, id: NodeId) -> &Array4<f64> {
        &self.nodes[id.0].value
    }

    // ---- leaves ----

    pub fn input(&mut self, value: Array4<f64>) -> NodeId {
        self.push(Op::Input, value, None)
    }

    pub fn param(&mut self, value: Array4<f64>) -> NodeId {
        self.push(Op::Param, value, None)
    }

    // ---- ops ----

    /// 2-D convolution, stride 1, zero padding `pad`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, pad: usize) -> NodeId {
        let y = conv::conv2d(self.val(x), self.val(w), pad);
        self.push(Op::Conv2d { x, w, pad }, y, None)
    }

    /// Adds a `[1, C, 1, 1]` bias, broadcast over batch and space.
    pub fn bias_add(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let xv = self.val(x);
        let bv = self.val(b);
        assert_eq!(bv.dim().1, xv.dim().1, "bias channel mismatch");
        let mut y = xv.clone();
        for c in 0..xv.dim().1 {
            y.slice_mut(s![.., c, .., ..]).mapv_inplace(|v| v + bv[[0, c, 0, 0]]);
        }
        self.push(Op::BiasAdd { x, b }, y, None)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let y = self.val(x).mapv(|v| if v >= 0.0 { v } else { slope * v });
        self.push(Op::LeakyRelu { x, slope }, y, None)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.val(x).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid { x }, y, None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.val(a).dim(), self.val(b).dim(), "add shape mismatch");
        let y = self.val(a) + self.val(b);
        self.push(Op::Add { a, b }, y, None)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let y = self.val(x) * factor;
        self.push(Op::Scale { x, factor }, y, None)
    }

    pub fn concat_channels(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let views: Vec<_> = xs.iter().map(|&x| self.val(x).view()).collect();
        let y = ndarray::concatenate(Axis(1), &views).expect("concat shape mismatch");
        self.push(Op::ConcatChannels { xs: xs.to_vec() }, y, None)
    }

    pub fn slice_channels(&mut self, x: NodeId, from: usize, to: usize) -> NodeId {
        let y = self.val(x).slice(s![.., from..to, .., ..]).to_owned();
        self.push(Op::SliceChannels { x, from, to }, y, None)
    }

    /// `[B, C, H, W]` -> `[B, C, 1, 1]`, mean over space.
    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let xv = self.val(x);
        let (b, c, h, w) = xv.dim();
        let mut y = Array4::zeros((b, c, 1, 1));
        for bi in 0..b {
            for ci in 0..c {
                y[[bi, ci, 0, 0]] = xv.slice(s![bi, ci, .., ..]).sum() / (h * w) as f64;
            }
        }
        self.push(Op::GlobalAvgPool { x }, y, None)
    }

    /// Fully connected layer on `[B, C_in, 1, 1]` with weight `[C_out, C_in, 1, 1]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId) -> NodeId {
        let xv = self.val(x);
        let wv = self.val(w);
        let (b, c_in, h, wd) = xv.dim();
        assert_eq!((h, wd), (1, 1), "linear input must be [B, C, 1, 1]");
        assert_eq!(wv.dim().1, c_in, "linear weight shape mismatch");
        let c_out = wv.dim().0;
        let x_mat = xv.view().into_shape_with_order((b, c_in)).unwrap();
        let w_mat = wv.view().into_shape_with_order((c_out, c_in)).unwrap();
        let y = x_mat.dot(&w_mat.t());
        let y = y.into_shape_clone((b, c_out, 1, 1)).unwrap();
        self.push(Op::Linear { x, w }, y, None)
    }

    /// Softmax over `groups` interleaved blocks of a `[B, G*N, 1, 1]` tensor:
    /// entries `{g*N + n : g}` form one softmax group for every `n`.
    pub fn group_softmax(&mut self, x: NodeId, groups: usize) -> NodeId {
        let xv = self.val(x);
        let (b, c, h, w) = xv.dim();
        assert_eq!((h, w), (1, 1), "group_softmax input must be [B, C, 1, 1]");
        assert_eq!(c % groups, 0, "channels not divisible by groups");
        let n = c / groups;
        let mut y = Array4::zeros((b, c, 1, 1));
        for bi in 0..b {
            for ni in 0..n {
                let mut m = f64::NEG_INFINITY;
                for g in 0..groups {
                    m = m.max(xv[[bi, g * n + ni, 0, 0]]);
                }
                let mut z = 0.0;
                for g in 0..groups {
                    let e = (xv[[bi, g * n + ni, 0, 0]] - m).exp();
                    y[[bi, g * n + ni, 0, 0]] = e;
                    z += e;
                }
                for g in 0..groups {
                    y[[bi, g * n + ni, 0, 0]] /= z;
                }
            }
        }
        self.push(Op::GroupSoftmax { x, groups }, y, None)
    }

    /// Per-channel scaling: `x[B,C,H,W] * scale[B,C,1,1]`.
    pub fn mul_channels(&mut self, x: NodeId, scale: NodeId) -> NodeId {
        let xv = self.val(x);
        let sv = self.val(scale);
        let (b, c, _, _) = xv.dim();
        assert_eq!(sv.dim(), (b, c, 1, 1), "mul_channels scale shape mismatch");
        let mut y = xv.clone();
        for bi in 0..b {
            for ci in 0..c {
                let s = sv[[bi, ci, 0, 0]];
                y.slice_mut(s![bi, ci, .., ..]).mapv_inplace(|v| v * s);
            }
        }
        self.push(Op::MulChannels { x, scale }, y, None)
    }

    /// Per-pixel scaling: `x[B,C,H,W] * gate[B,1,H,W]`.
    pub fn mul_pixels(&mut self, x: NodeId, gate: NodeId) -> NodeId {
        let xv = self.val(x);
        let gv = self.val(gate);
        let (b, c, h, w) = xv.dim();
        assert_eq!(gv.dim(), (b, 1, h, w), "mul_pixels gate shape mismatch");
        let mut y = xv.clone();
        for bi in 0..b {
            for ci in 0..c {
                let mut plane = y.slice_mut(s![bi, ci, .., ..]);
                plane *= &gv.slice(s![bi, 0, .., ..]);
            }
        }
        self.push(Op::MulPixels { x, gate }, y, None)
    }

    /// Channel-wise average and maximum maps: `[B, C, H, W]` -> `[B, 2, H, W]`.
    pub fn channel_stats(&mut self, x: NodeId) -> NodeId {
        let xv = self.val(x);
        let (b, c, h, w) = xv.dim();
        let mut y = Array4::zeros((b, 2, h, w));
        let mut argmax = Array3::zeros((b, h, w));
        for bi in 0..b {
            for hi in 0..h {
                for wi in 0..w {
                    let mut sum = 0.0;
                    let mut best = f64::NEG_INFINITY;
                    let mut best_c = 0;
                    for ci in 0..c {
                        let v = xv[[bi, ci, hi, wi]];
                        sum += v;
                        if v > best {
                            best = v;
                            best_c = ci;
                        }
                    }
                    y[[bi, 0, hi, wi]] = sum / c as f64;
                    y[[bi, 1, hi, wi]] = best;
                    argmax[[bi, hi, wi]] = best_c;
                }
            }
        }
        self.push(Op::ChannelStats { x }, y, Some(argmax))
    }

    /// Mean absolute difference in the mu-law tone-mapped domain; scalar output.
    /// Gradients flow into `pred` only.
    pub fn tonemapped_l1(&mut self, pred: NodeId, target: NodeId, mu: f64) -> NodeId {
        let pv = self.val(pred);
        let tv = self.val(target);
        assert_eq!(pv.dim(), tv.dim(), "loss shape mismatch");
        let sum: f64 = pv
            .iter()
            .zip(tv.iter())
            .map(|(&p, &t)| {
                (tonemap::mu_law_scalar(p.clamp(0.0, 1.0), mu)
                    - tonemap::mu_law_scalar(t.clamp(0.0, 1.0), mu))
                .abs()
            })
            .sum();
        let loss = sum / pv.len() as f64;
        let value = Array4::from_elem((1, 1, 1, 1), loss);
        self.push(Op::TonemappedL1 { pred, target, mu }, value, None)
    }

    // ---- backward ----

    /// Back-propagates from scalar node `root`, returning per-node gradients.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut grads: Vec<Option<Array4<f64>>> = vec![None; self.nodes.len()];
        assert_eq!(self.val(root).len(), 1, "backward root must be a scalar");
        grads[root.0] = Some(Array4::ones((1, 1, 1, 1)));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.accumulate(i, &dy, &mut grads);
            // Leaves keep their gradients for the caller.
            if matches!(self.nodes[i].op, Op::Param) {
                grads[i] = Some(dy);
            }
        }
        Gradients { grads }
    }

    fn add_grad(&self, grads: &mut [Option<Array4<f64>>], id: NodeId, g: Array4<f64>) {
        if !self.rg(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => *acc += &g,
            slot => *slot = Some(g),
        }
    }

    fn accumulate(&self, i: usize, dy: &Array4<f64>, grads: &mut [Option<Array4<f64>>]) {
        match &self.nodes[i].op {
            Op::Input | Op::Param => {}
            Op::Conv2d { x, w, pad } => {
                let need_x = self.rg(*x);
                let need_w = self.rg(*w);
                let (dx, dw) = conv::conv2d_backward(self.val(*x), self.val(*w), dy, *pad);
                if need_x {
                    self.add_grad(grads, *x, dx);
                }
                if need_w {
                    self.add_grad(grads, *w, dw);
                }
            }
            Op::BiasAdd { x, b } => {
                if self.rg(*b) {
                    let c = self.val(*b).dim().1;
                    let mut db = Array4::zeros((1, c, 1, 1));
                    for ci in 0..c {
                        db[[0, ci, 0, 0]] = dy.slice(s![.., ci, .., ..]).sum();
                    }
                    self.add_grad(grads, *b, db);
                }
                self.add_grad(grads, *x, dy.clone());
            }
            Op::LeakyRelu { x, slope } => {
                let g = ndarray::Zip::from(dy)
                    .and(self.val(*x))
                    .map_collect(|&d, &v| if v >= 0.0 { d } else { *slope * d });
                self.add_grad(grads, *x, g);
            }
            Op::Sigmoid { x } => {
                let y = &self.nodes[i].value;
                let g = ndarray::Zip::from(dy)
                    .and(y)
                    .map_collect(|&d, &s| d * s * (1.0 - s));
                self.add_grad(grads, *x, g);
            }
            Op::Add { a, b } => {
                self.add_grad(grads, *a, dy.clone());
                self.add_grad(grads, *b, dy.clone());
            }
            Op::Scale { x, factor } => {
                self.add_grad(grads, *x, dy * *factor);
            }
            Op::ConcatChannels { xs } => {
                let mut from = 0;
                for &x in xs {
                    let c = self.val(x).dim().1;
                    let g = dy.slice(s![.., from..from + c, .., ..]).to_owned();
                    self.add_grad(grads, x, g);
                    from += c;
                }
            }
            Op::SliceChannels { x, from, to } => {
                let mut g = Array4::zeros(self.val(*x).dim());
                g.slice_mut(s![.., *from..*to, .., ..]).assign(dy);
                self.add_grad(grads, *x, g);
            }
            Op::GlobalAvgPool { x } => {
                let (b, c, h, w) = self.val(*x).dim();
                let inv = 1.0 / (h * w) as f64;
                let mut g = Array4::zeros((b, c, h, w));
                for bi in 0..b {
                    for ci in 0..c {
                        g.slice_mut(s![bi, ci, .., ..]).fill(dy[[bi, ci, 0, 0]] * inv);
                    }
                }
                self.add_grad(grads, *x, g);
            }
            Op::Linear { x, w } => {
                let xv = self.val(*x);
                let wv = self.val(*w);
                let (b, c_in, _, _) = xv.dim();
                let c_out = wv.dim().0;
                let dy_mat = dy.view().into_shape_with_order((b, c_out)).unwrap();
                let x_mat = xv.view().into_shape_with_order((b, c_in)).unwrap();
                let w_mat = wv.view().into_shape_with_order((c_out, c_in)).unwrap();
                if self.rg(*x) {
                    let dx = dy_mat.dot(&w_mat);
                    self.add_grad(grads, *x, dx.into_shape_clone((b, c_in, 1, 1)).unwrap());
                }
                if self.rg(*w) {
                    let dw = dy_mat.t().dot(&x_mat);
                    self.add_grad(
                        grads,
                        *w,
                        dw.into_shape_clone((c_out, c_in, 1, 1)).unwrap(),
                    );
                }
            }
            Op::GroupSoftmax { x, groups } => {
                let y = &self.nodes[i].value;
                let (b, c, _, _) = y.dim();
                let n = c / groups;
                let mut g = Array4::zeros((b, c, 1, 1));
                for bi in 0..b {
                    for ni in 0..n {
                        let mut dot = 0.0;
                        for gi in 0..*groups {
                            let idx = [bi, gi * n + ni, 0, 0];
                            dot += dy[idx] * y[idx];
                        }
                        for gi in 0..*groups {
                            let idx = [bi, gi * n + ni, 0, 0];
                            g[idx] = y[idx] * (dy[idx] - dot);
                        }
                    }
                }
                self.add_grad(grads, *x, g);
            }
            Op::MulChannels { x, scale } => {
                let xv = self.val(*x);
                let sv = self.val(*scale);
                let (b, c, _, _) = xv.dim();
                if self.rg(*x) {
                    let mut g = dy.clone();
                    for bi in 0..b {
                        for ci in 0..c {
                            let s = sv[[bi, ci, 0, 0]];
                            g.slice_mut(s![bi, ci, .., ..]).mapv_inplace(|v| v * s);
                        }
                    }
                    self.add_grad(grads, *x, g);
                }
                if self.rg(*scale) {
                    let mut ds = Array4::zeros((b, c, 1, 1));
                    for bi in 0..b {
                        for ci in 0..c {
                            let prod = &dy.slice(s![bi, ci, .., ..]) * &xv.slice(s![bi, ci, .., ..]);
                            ds[[bi, ci, 0, 0]] = prod.sum();
                        }
                    }
                    self.add_grad(grads, *scale, ds);
                }
            }
            Op::MulPixels { x, gate } => {
                let xv = self.val(*x);
                let gv = self.val(*gate);
                let (b, c, h, w) = xv.dim();
                if self.rg(*x) {
                    let mut g = dy.clone();
                    for bi in 0..b {
                        for ci in 0..c {
                            let mut plane = g.slice_mut(s![bi, ci, .., ..]);
                            plane *= &gv.slice(s![bi, 0, .., ..]);
                        }
                    }
                    self.add_grad(grads, *x, g);
                }
                if self.rg(*gate) {
                    let mut dg = Array4::zeros((b, 1, h, w));
                    for bi in 0..b {
                        for ci in 0..c {
                            let prod = &dy.slice(s![bi, ci, .., ..]) * &xv.slice(s![bi, ci, .., ..]);
                            let mut plane = dg.slice_mut(s![bi, 0, .., ..]);
                            plane += &prod;
                        }
                    }
                    self.add_grad(grads, *gate, dg);
                }
            }
            Op::ChannelStats { x } => {
                let (b, c, h, w) = self.val(*x).dim();
                let argmax = self.nodes[i].argmax.as_ref().expect("missing argmax aux");
                let inv = 1.0 / c as f64;
                let mut g = Array4::zeros((b, c, h, w));
                for bi in 0..b {
                    for hi in 0..h {
                        for wi in 0..w {
                            let davg = dy[[bi, 0, hi, wi]] * inv;
                            for ci in 0..c {
                                g[[bi, ci, hi, wi]] += davg;
                            }
                            g[[bi, argmax[[bi, hi, wi]], hi, wi]] += dy[[bi, 1, hi, wi]];
                        }
                    }
                }
                self.add_grad(grads, *x, g);
            }
            Op::TonemappedL1 { pred, target, mu } => {
                let pv = self.val(*pred);
                let tv = self.val(*target);
                let scale = dy[[0, 0, 0, 0]] / pv.len() as f64;
                let g = ndarray::Zip::from(pv)
                    .and(tv)
                    .map_collect(|&p, &t| {
                        let pc = p.clamp(0.0, 1.0);
                        let tp = tonemap::mu_law_scalar(pc, *mu);
                        let tt = tonemap::mu_law_scalar(t.clamp(0.0, 1.0), *mu);
                        let sign = if tp > tt {
                            1.0
                        } else if tp < tt {
                            -1.0
                        } else {
                            0.0
                        };
                        // clamp has zero slope outside [0, 1]
                        let pass = if (0.0..=1.0).contains(&p) { 1.0 } else { 0.0 };
                        sign * pass * tonemap::mu_law_slope(pc, *mu) * scale
                    });
                self.add_grad(grads, *pred, g);
            }
        }
    }
}

/// Convenience: linear + bias as a 2-D matrix helper used by tests.
pub fn as_matrix(v: &Array4<f64>) -> Array2<f64> {
    let (b, c, h, w) = v.dim();
    assert_eq!((h, w), (1, 1));
    v.view()
        .into_shape_with_order((b, c))
        .unwrap()
        .to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random4(rng: &mut ChaCha12Rng, dim: (usize, usize, usize, usize)) -> Array4<f64> {
        Array4::from_shape_simple_fn(dim, || rng.random_range(-1.0..1.0))
    }

    /// Finite-difference check of a scalar-valued graph w.r.t. one leaf.
    fn check_param_grad<F>(build: F, param: Array4<f64>, tol: f64)
    where
        F: Fn(&mut Graph, NodeId) -> NodeId,
    {
        let mut g = Graph::new();
        let p = g.param(param.clone());
        let loss = build(&mut g, p);
        let grads = g.backward(loss);
        let analytic = grads.get(p).expect("no gradient").clone();

        let eps = 1e-6;
        for (idx, _) in param.indexed_iter() {
            let idx = [idx.0, idx.1, idx.2, idx.3];
            let mut up = param.clone();
            up[idx] += eps;
            let mut down = param.clone();
            down[idx] -= eps;
            let mut g1 = Graph::new();
            let p1 = g1.param(up);
            let l1 = build(&mut g1, p1);
            let mut g2 = Graph::new();
            let p2 = g2.param(down);
            let l2 = build(&mut g2, p2);
            let num = (g1.scalar(l1) - g2.scalar(l2)) / (2.0 * eps);
            let a = analytic[idx];
            assert!(
                (num - a).abs() <= tol * num.abs().max(a.abs()).max(1e-4),
                "grad mismatch at {idx:?}: analytic {a}, numeric {num}"
            );
        }
    }

    /// Scalar probe loss: mean of x ⊙ w for a fixed random w, so every output
    /// element influences the scalar differently. Built from graph ops only.
    fn weighted_sum(g: &mut Graph, x: NodeId, seed: u64) -> NodeId {
        let (b, c, h, wd) = g.value(x).dim();
        assert_eq!(b, 1, "test helper expects batch 1");
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let w = Array4::from_shape_simple_fn((1, c, h, wd), || rng.random_range(0.1..1.0));
        let t = g.input(w);
        let mut parts = Vec::new();
        for ci in 0..c {
            let xs = g.slice_channels(x, ci, ci + 1);
            let ys = g.slice_channels(t, ci, ci + 1);
            parts.push(g.mul_pixels(xs, ys));
        }
        let prod = g.concat_channels(&parts);
        let pooled = g.global_avg_pool(prod);
        let ones = Array4::from_elem((1, c, 1, 1), 1.0 / c as f64);
        let wid = g.input(ones);
        g.linear(pooled, wid)
    }

    #[test]
    fn conv_bias_activation_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = random4(&mut rng, (1, 2, 5, 4));
        let w = random4(&mut rng, (3, 2, 3, 3));
        let xc = x.clone();
        check_param_grad(
            move |g, p| {
                let xi = g.input(xc.clone());
                let y = g.conv2d(xi, p, 1);
                let a = g.leaky_relu(y, 0.01);
                weighted_sum(g, a, 17)
            },
            w,
            1e-6,
        );

        let wc = random4(&mut rng, (3, 2, 3, 3));
        check_param_grad(
            move |g, p| {
                let wi = g.input(wc.clone());
                let y = g.conv2d(p, wi, 1);
                let s = g.sigmoid(y);
                weighted_sum(g, s, 23)
            },
            x,
            1e-6,
        );
    }

    #[test]
    fn attention_op_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let x = random4(&mut rng, (1, 6, 1, 1));
        check_param_grad(
            move |g, p| {
                let sm = g.group_softmax(p, 3);
                weighted_sum(g, sm, 31)
            },
            x,
            1e-5,
        );

        let feat = random4(&mut rng, (1, 4, 3, 3));
        check_param_grad(
            move |g, p| {
                let stats = g.channel_stats(p);
                weighted_sum(g, stats, 37)
            },
            feat,
            1e-5,
        );

        let feat2 = random4(&mut rng, (1, 3, 4, 4));
        let gate = random4(&mut rng, (1, 1, 4, 4));
        check_param_grad(
            move |g, p| {
                let gi = g.input(gate.clone());
                let y = g.mul_pixels(p, gi);
                weighted_sum(g, y, 41)
            },
            feat2,
            1e-6,
        );

        let feat3 = random4(&mut rng, (1, 3, 2, 2));
        let sc = random4(&mut rng, (1, 3, 1, 1));
        check_param_grad(
            move |g, p| {
                let si = g.input(sc.clone());
                let y = g.mul_channels(p, si);
                weighted_sum(g, y, 43)
            },
            feat3,
            1e-6,
        );
    }

    #[test]
    fn pooling_linear_and_loss_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let x = random4(&mut rng, (1, 3, 4, 4));
        check_param_grad(
            move |g, p| {
                let pooled = g.global_avg_pool(p);
                weighted_sum(g, pooled, 47)
            },
            x,
            1e-6,
        );

        // loss gradient: pred passed through sigmoid so it stays in (0, 1)
        let logits = random4(&mut rng, (1, 3, 4, 4));
        let target = Array4::from_shape_simple_fn((1, 3, 4, 4), || rng.random_range(0.05..0.95));
        check_param_grad(
            move |g, p| {
                let pred = g.sigmoid(p);
                let t = g.input(target.clone());
                g.tonemapped_l1(pred, t, 5000.0)
            },
            logits,
            1e-4,
        );
    }

    #[test]
    fn gradient_accumulates_across_shared_uses() {
        // Using the same parameter twice must sum both contributions.
        let x = Array4::from_elem((1, 2, 1, 1), 0.5);
        let mut g = Graph::new();
        let p = g.param(x);
        let doubled = g.add(p, p);
        let pooled = g.global_avg_pool(doubled);
        let ws = Array4::from_elem((1, 2, 1, 1), 1.0);
        let wi = g.input(ws);
        let lin = g.linear(pooled, wi);
        let grads = g.backward(lin);
        let gp = grads.get(p).unwrap();
        // d/dx of sum over channels of 2x (then linear with ones) = 2
        assert!((gp[[0, 0, 0, 0]] - 2.0).abs() < 1e-12);
        assert!((gp[[0, 1, 0, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn concat_slice_roundtrip_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let x = random4(&mut rng, (1, 4, 3, 3));
        check_param_grad(
            move |g, p| {
                let a = g.slice_channels(p, 0, 2);
                let b = g.slice_channels(p, 2, 4);
                let cat = g.concat_channels(&[b, a]);
                weighted_sum(g, cat, 53)
            },
            x,
            1e-6,
        );
    }
}
