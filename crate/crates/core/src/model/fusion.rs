//! Progressive and selective fusion blocks.

use crate::graph::{Graph, NodeId};
use crate::nn::{Bound, Conv2d, Linear, ParamSet};

use super::{FeatureStack, FusionMode, ModelConfig};

/// Selective feature fusion: sum the branches, squeeze to a per-channel
/// descriptor, expand to one logit set per branch, and blend the branches
/// with per-channel softmax attention.
#[derive(Debug, Clone, Copy)]
pub struct Sffb {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Sffb {
    pub fn register(params: &mut ParamSet, name: &str, n: usize, reduction: usize, seed: u64) -> Self {
        let hidden = (n / reduction).max(1);
        let fc1 = Linear::register(params, &format!("{name}.fc1"), n, hidden, seed);
        let fc2 = Linear::register(params, &format!("{name}.fc2"), hidden, 3 * n, seed);
        Self { fc1, fc2 }
    }

    /// Returns the fused `[B, N, h, w]` feature and the three `[B, N, 1, 1]`
    /// attention tensors.
    pub fn apply_with_attention(
        &self,
        g: &mut Graph,
        bound: &Bound,
        branches: [NodeId; 3],
    ) -> (NodeId, [NodeId; 3]) {
        let n = g.value(branches[0]).dim().1;
        let sum01 = g.add(branches[0], branches[1]);
        let pooled_input = g.add(sum01, branches[2]);
        let descriptor = g.global_avg_pool(pooled_input);
        let squeezed = self.fc1.apply(g, bound, descriptor);
        let squeezed = g.leaky_relu(squeezed, 0.01);
        let logits = self.fc2.apply(g, bound, squeezed);
        let attention = g.group_softmax(logits, 3);
        let gates = [
            g.slice_channels(attention, 0, n),
            g.slice_channels(attention, n, 2 * n),
            g.slice_channels(attention, 2 * n, 3 * n),
        ];
        let weighted = [
            g.mul_channels(branches[0], gates[0]),
            g.mul_channels(branches[1], gates[1]),
            g.mul_channels(branches[2], gates[2]),
        ];
        let partial = g.add(weighted[0], weighted[1]);
        let fused = g.add(partial, weighted[2]);
        (fused, gates)
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, branches: [NodeId; 3]) -> NodeId {
        self.apply_with_attention(g, bound, branches).0
    }
}

/// The configurable merge of the three branch features.
#[derive(Debug, Clone, Copy)]
pub enum FusionOp {
    Sffb(Sffb),
    Summation,
    /// Concatenation needs a 1x1 projection back to N channels.
    Concatenation(Conv2d),
}

impl FusionOp {
    pub fn register(
        params: &mut ParamSet,
        name: &str,
        mode: FusionMode,
        n: usize,
        reduction: usize,
        seed: u64,
    ) -> Self {
        match mode {
            FusionMode::Sffb => FusionOp::Sffb(Sffb::register(
                params,
                &format!("{name}.sffb"),
                n,
                reduction,
                seed,
            )),
            FusionMode::Summation => FusionOp::Summation,
            FusionMode::Concatenation => FusionOp::Concatenation(Conv2d::register(
                params,
                &format!("{name}.proj"),
                3 * n,
                n,
                1,
                1.0,
                seed,
            )),
        }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, branches: [NodeId; 3]) -> NodeId {
        match self {
            FusionOp::Sffb(sffb) => sffb.apply(g, bound, branches),
            FusionOp::Summation => {
                // mean keeps the fuse operator scale-preserving, so that with
                // identical branches it reduces to the input exactly as the
                // selective path does
                let sum01 = g.add(branches[0], branches[1]);
                let sum = g.add(sum01, branches[2]);
                g.scale(sum, 1.0 / 3.0)
            }
            FusionOp::Concatenation(proj) => {
                let cat = g.concat_channels(&branches);
                proj.apply(g, bound, cat)
            }
        }
    }
}

/// One conv, shared across branches or registered per branch.
#[derive(Debug, Clone)]
pub enum BranchConv {
    Shared(Conv2d),
    PerBranch([Conv2d; 3]),
}

impl BranchConv {
    fn register(
        params: &mut ParamSet,
        name: &str,
        shared: bool,
        c_in: usize,
        c_out: usize,
        seed: u64,
    ) -> Self {
        if shared {
            BranchConv::Shared(Conv2d::register(params, name, c_in, c_out, 3, 1.0, seed))
        } else {
            BranchConv::PerBranch([0, 1, 2].map(|i| {
                Conv2d::register(params, &format!("{name}.b{i}"), c_in, c_out, 3, 1.0, seed)
            }))
        }
    }

    fn apply(&self, g: &mut Graph, bound: &Bound, branch: usize, x: NodeId) -> NodeId {
        match self {
            BranchConv::Shared(conv) => conv.apply(g, bound, x),
            BranchConv::PerBranch(convs) => convs[branch].apply(g, bound, x),
        }
    }
}

/// One progressive fusion step: per-branch convolution, branch merge,
/// comparison of each branch against the merged feature, and a residual
/// update. Input and output feature shapes are identical.
#[derive(Debug, Clone)]
pub struct Psfb {
    pub conv1: BranchConv,
    pub conv2: BranchConv,
    pub fusion: FusionOp,
}

impl Psfb {
    pub fn register(params: &mut ParamSet, name: &str, config: &ModelConfig, seed: u64) -> Self {
        let n = config.channels;
        let conv1 = BranchConv::register(
            params,
            &format!("{name}.conv1"),
            config.share_psfb_convs,
            n,
            n,
            seed,
        );
        let conv2 = BranchConv::register(
            params,
            &format!("{name}.conv2"),
            config.share_psfb_convs,
            2 * n,
            n,
            seed,
        );
        let fusion = FusionOp::register(
            params,
            &format!("{name}.fuse"),
            config.fusion_mode,
            n,
            config.sffb_reduction,
            seed,
        );
        Self {
            conv1,
            conv2,
            fusion,
        }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, stack: FeatureStack) -> FeatureStack {
        let pre = [0, 1, 2].map(|i| self.conv1.apply(g, bound, i, stack.branches[i]));
        let fused = self.fusion.apply(g, bound, pre);
        let branches = [0, 1, 2].map(|i| {
            let cat = g.concat_channels(&[fused, pre[i]]);
            let update = self.conv2.apply(g, bound, i, cat);
            g.add(update, stack.branches[i])
        });
        FeatureStack {
            branches,
            reference: stack.reference,
        }
    }
}
