//! Reconstruction network: head convolution, residual dual attention stack,
//! skip connections, and the sigmoid-bounded output convolutions.

use crate::graph::{Graph, NodeId};
use crate::nn::{Bound, Conv2d, ParamSet};

use super::{ModelConfig, Rdab};

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub(crate) head: Conv2d,
    pub(crate) rdabs: Vec<Rdab>,
    pub(crate) tail1: Conv2d,
    pub(crate) tail2: Conv2d,
    pub(crate) out: Conv2d,
}

impl Reconstruction {
    pub fn register(params: &mut ParamSet, name: &str, config: &ModelConfig, seed: u64) -> Self {
        let n = config.channels;
        let head = Conv2d::register(params, &format!("{name}.head"), 4 * n, n, 3, 1.0, seed);
        let rdabs = (0..config.num_rdab)
            .map(|i| {
                Rdab::register(
                    params,
                    &format!("{name}.rdab{i}"),
                    n,
                    config.enable_dab,
                    seed,
                )
            })
            .collect();
        let tail1 = Conv2d::register(params, &format!("{name}.tail1"), n, n, 3, 1.0, seed);
        let tail2 = Conv2d::register(params, &format!("{name}.tail2"), n, n, 3, 1.0, seed);
        let out = Conv2d::register(params, &format!("{name}.out"), n, 3, 3, 0.1, seed);
        Self {
            head,
            rdabs,
            tail1,
            tail2,
            out,
        }
    }

    /// `z0` is the `[B, 4N, h, w]` fused feature, `reference` the `[B, N, h, w]`
    /// extracted reference-branch feature for the global skip.
    pub fn apply(
        &self,
        g: &mut Graph,
        bound: &Bound,
        z0: NodeId,
        reference: NodeId,
        config: &ModelConfig,
    ) -> NodeId {
        let r0 = self.head.apply(g, bound, z0);
        let mut r = r0;
        for rdab in &self.rdabs {
            r = rdab.apply(g, bound, r);
        }
        if config.enable_local_skip {
            r = g.add(r, r0);
        }
        if config.enable_global_skip {
            r = g.add(r, reference);
        }
        let y = self.tail1.apply(g, bound, r);
        let y = g.leaky_relu(y, 0.01);
        let y = self.tail2.apply(g, bound, y);
        let y = g.leaky_relu(y, 0.01);
        let y = self.out.apply(g, bound, y);
        g.sigmoid(y)
    }
}
