//! Named parameter storage and the conv/linear building blocks used by the
//! network, with fan-in-scaled initialization.

use ndarray::Array4;
use rand::Rng;

use crate::graph::{Graph, NodeId};
use crate::util::rng_for;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// All trainable tensors of a model, in registration order. The order is part
/// of the checkpoint format.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array4<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Array4<f64>) -> ParamId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array4<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array4<f64> {
        &mut self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array4<f64>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Binds every parameter into `graph` as a trainable leaf. The returned
    /// vector maps `ParamId` index -> graph node.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        let nodes = self.values.iter().map(|v| graph.param(v.clone())).collect();
        Bound { nodes }
    }
}

/// Graph nodes for one binding of a [`ParamSet`].
pub struct Bound {
    nodes: Vec<NodeId>,
}

impl Bound {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }
}

/// Uniform fan-in initialization: U(-s/sqrt(fan_in), s/sqrt(fan_in)).
pub fn fan_in_uniform(
    rng: &mut impl Rng,
    dim: (usize, usize, usize, usize),
    scale: f64,
) -> Array4<f64> {
    let fan_in = (dim.1 * dim.2 * dim.3) as f64;
    let bound = scale / fan_in.sqrt();
    Array4::from_shape_simple_fn(dim, || rng.random_range(-bound..bound))
}

/// 2-D convolution layer (stride 1, zero padding `k/2`) with bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub pad: usize,
}

impl Conv2d {
    /// Registers a `k x k` convolution `c_in -> c_out`. `init_scale` shrinks
    /// the weight range (used for the output layer).
    pub fn register(
        params: &mut ParamSet,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        init_scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = rng_for(seed, &[b"init", name.as_bytes()]);
        let weight = params.register(
            &format!("{name}.weight"),
            fan_in_uniform(&mut rng, (c_out, c_in, k, k), init_scale),
        );
        let bias = params.register(&format!("{name}.bias"), Array4::zeros((1, c_out, 1, 1)));
        Self {
            weight,
            bias,
            pad: k / 2,
        }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let y = g.conv2d(x, bound.node(self.weight), self.pad);
        g.bias_add(y, bound.node(self.bias))
    }
}

/// Fully connected layer on `[B, C, 1, 1]` vectors, with bias.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn register(params: &mut ParamSet, name: &str, c_in: usize, c_out: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[b"init", name.as_bytes()]);
        let weight = params.register(
            &format!("{name}.weight"),
            fan_in_uniform(&mut rng, (c_out, c_in, 1, 1), 1.0),
        );
        let bias = params.register(&format!("{name}.bias"), Array4::zeros((1, c_out, 1, 1)));
        Self { weight, bias }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let y = g.linear(x, bound.node(self.weight));
        g.bias_add(y, bound.node(self.bias))
    }
}
