//! Dual attention blocks used by the reconstruction network.

use crate::graph::{Graph, NodeId};
use crate::nn::{Bound, Conv2d, Linear, ParamSet};

/// Channel gate (pooled descriptor through an FC bottleneck) and spatial gate
/// (7x7 convolution over channel average/max maps), both applied to the
/// trunk, concatenated, and projected back to C channels.
#[derive(Debug, Clone)]
pub struct DabAttention {
    pub ca_fc1: Linear,
    pub ca_fc2: Linear,
    pub sa_conv: Conv2d,
    pub proj: Conv2d,
}

/// Dual attention block: a two-conv trunk refined by channel and spatial
/// attention. Without attention (the ablated variant) only the trunk remains.
#[derive(Debug, Clone)]
pub struct Dab {
    pub trunk1: Conv2d,
    pub trunk2: Conv2d,
    pub attention: Option<DabAttention>,
}

impl Dab {
    pub fn register(
        params: &mut ParamSet,
        name: &str,
        c: usize,
        with_attention: bool,
        seed: u64,
    ) -> Self {
        let trunk1 = Conv2d::register(params, &format!("{name}.trunk1"), c, c, 3, 1.0, seed);
        let trunk2 = Conv2d::register(params, &format!("{name}.trunk2"), c, c, 3, 1.0, seed);
        let attention = with_attention.then(|| {
            let hidden = (c / 8).max(1);
            DabAttention {
                ca_fc1: Linear::register(params, &format!("{name}.ca_fc1"), c, hidden, seed),
                ca_fc2: Linear::register(params, &format!("{name}.ca_fc2"), hidden, c, seed),
                sa_conv: Conv2d::register(params, &format!("{name}.sa"), 2, 1, 7, 1.0, seed),
                proj: Conv2d::register(params, &format!("{name}.proj"), 2 * c, c, 1, 1.0, seed),
            }
        });
        Self {
            trunk1,
            trunk2,
            attention,
        }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        self.apply_with_gates(g, bound, x).0
    }

    /// Like [`Dab::apply`] but also returns the channel and spatial gate
    /// nodes (when attention is enabled).
    pub fn apply_with_gates(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: NodeId,
    ) -> (NodeId, Option<(NodeId, NodeId)>) {
        let t = self.trunk1.apply(g, bound, x);
        let t = g.leaky_relu(t, 0.01);
        let trunk = self.trunk2.apply(g, bound, t);

        let Some(attn) = &self.attention else {
            return (trunk, None);
        };

        let descriptor = g.global_avg_pool(trunk);
        let squeezed = attn.ca_fc1.apply(g, bound, descriptor);
        let squeezed = g.leaky_relu(squeezed, 0.01);
        let channel_logits = attn.ca_fc2.apply(g, bound, squeezed);
        let channel_gate = g.sigmoid(channel_logits);
        let channel_out = g.mul_channels(trunk, channel_gate);

        let stats = g.channel_stats(trunk);
        let spatial_logits = attn.sa_conv.apply(g, bound, stats);
        let spatial_gate = g.sigmoid(spatial_logits);
        let spatial_out = g.mul_pixels(trunk, spatial_gate);

        let cat = g.concat_channels(&[channel_out, spatial_out]);
        let out = attn.proj.apply(g, bound, cat);
        (out, Some((channel_gate, spatial_gate)))
    }
}

/// Residual wrapper: `x + DAB(x)`.
#[derive(Debug, Clone)]
pub struct Rdab {
    pub dab: Dab,
}

impl Rdab {
    pub fn register(
        params: &mut ParamSet,
        name: &str,
        c: usize,
        with_attention: bool,
        seed: u64,
    ) -> Self {
        Self {
            dab: Dab::register(params, &format!("{name}.dab"), c, with_attention, seed),
        }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let d = self.dab.apply(g, bound, x);
        g.add(x, d)
    }
}
