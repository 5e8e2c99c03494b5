//! The fusion network: shared feature extraction, a stack of progressive and
//! selective fusion blocks, and the attention-based reconstruction network.

mod attention;
mod fusion;
mod recon;

pub use attention::{Dab, DabAttention, Rdab};
pub use fusion::{BranchConv, FusionOp, Psfb, Sffb};
pub use recon::Reconstruction;

use std::fmt;
use std::str::FromStr;

use ndarray::Array3;

use crate::data::NetworkInput;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{Bound, Conv2d, ParamSet};
use crate::util::batch_of_one;

/// How the three branch features are merged inside each fusion block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Selective fusion: pooled descriptor, two FC layers, per-channel
    /// softmax attention across branches.
    Sffb,
    /// Mean of the branches (scale-equivalent to summation up to the weights
    /// of the following convolution).
    Summation,
    /// Channel concatenation followed by a 1x1 projection back to N.
    Concatenation,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FusionMode::Sffb => "sffb",
            FusionMode::Summation => "summation",
            FusionMode::Concatenation => "concatenation",
        };
        f.write_str(s)
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sffb" => Ok(FusionMode::Sffb),
            "summation" => Ok(FusionMode::Summation),
            "concatenation" => Ok(FusionMode::Concatenation),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

/// Architecture hyperparameters, including the ablation toggles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Feature width N.
    pub channels: usize,
    pub num_psfb: usize,
    pub fusion_mode: FusionMode,
    pub num_rdab: usize,
    pub enable_psfb_stack: bool,
    pub enable_dab: bool,
    pub enable_local_skip: bool,
    pub enable_global_skip: bool,
    /// Bottleneck ratio of the two FC layers in the selective fusion block.
    pub sffb_reduction: usize,
    /// Share Conv1/Conv2 across the three branches within a block.
    pub share_psfb_convs: bool,
    /// Use the post-stack reference branch instead of the raw extracted
    /// feature as the fourth component of the concatenated feature.
    pub z0_uses_stack_reference: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            num_psfb: 6,
            fusion_mode: FusionMode::Sffb,
            num_rdab: 4,
            enable_psfb_stack: true,
            enable_dab: true,
            enable_local_skip: true,
            enable_global_skip: true,
            sffb_reduction: 8,
            share_psfb_convs: true,
            z0_uses_stack_reference: false,
        }
    }
}

impl ModelConfig {
    /// A small configuration suitable for quick experiments and tests.
    pub fn tiny(channels: usize, num_psfb: usize, num_rdab: usize) -> Self {
        Self {
            channels,
            num_psfb,
            num_rdab,
            sffb_reduction: if channels % 8 == 0 { 8 } else { channels },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        if self.sffb_reduction == 0 || self.channels % self.sffb_reduction != 0 {
            return Err(Error::Config(format!(
                "sffb_reduction {} must divide channels {}",
                self.sffb_reduction, self.channels
            )));
        }
        Ok(())
    }
}

/// Graph nodes of the per-branch features plus the reference branch feature.
#[derive(Debug, Clone, Copy)]
pub struct FeatureStack {
    pub branches: [NodeId; 3],
    pub reference: NodeId,
}

/// The full network with its parameters.
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub(crate) extract: Conv2d,
    pub(crate) blocks: Vec<Psfb>,
    pub(crate) recon: Reconstruction,
}

impl Model {
    /// Builds a freshly initialized model. Initialization is deterministic in
    /// `(config, seed)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let n = config.channels;
        let extract = Conv2d::register(&mut params, "extract", 6, n, 3, 1.0, seed);
        let blocks = (0..config.num_psfb)
            .map(|i| Psfb::register(&mut params, &format!("psfb{i}"), &config, seed))
            .collect();
        let recon = Reconstruction::register(&mut params, "recon", &config, seed);
        Ok(Self {
            config,
            params,
            extract,
            blocks,
            recon,
        })
    }

    /// Shared-weight 3x3 feature extraction from the three 6-channel inputs.
    pub fn extract_features(
        &self,
        g: &mut Graph,
        bound: &Bound,
        inputs: [NodeId; 3],
    ) -> Result<FeatureStack> {
        for &x in &inputs {
            let c = g.value(x).dim().1;
            if c != 6 {
                return Err(Error::Config(format!(
                    "network input must have 6 channels, got {c}"
                )));
            }
        }
        let branches = inputs.map(|x| self.extract.apply(g, bound, x));
        Ok(FeatureStack {
            branches,
            reference: branches[1],
        })
    }

    /// Runs the fusion half: extraction, the block stack, and concatenation
    /// into the `4N`-channel feature. Returns `(z0, raw reference feature)`.
    pub fn fusion_network(
        &self,
        g: &mut Graph,
        bound: &Bound,
        inputs: [NodeId; 3],
    ) -> Result<(NodeId, NodeId)> {
        let initial = self.extract_features(g, bound, inputs)?;
        let mut stack = initial;
        if self.config.enable_psfb_stack {
            for block in &self.blocks {
                stack = block.apply(g, bound, stack);
            }
        }
        let fourth = if self.config.z0_uses_stack_reference {
            stack.branches[1]
        } else {
            initial.reference
        };
        let z0 = g.concat_channels(&[
            stack.branches[0],
            stack.branches[1],
            stack.branches[2],
            fourth,
        ]);
        Ok((z0, initial.reference))
    }

    /// Full forward pass to the sigmoid-bounded HDR estimate `[B, 3, H, W]`.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, inputs: [NodeId; 3]) -> Result<NodeId> {
        let (z0, reference) = self.fusion_network(g, bound, inputs)?;
        Ok(self.recon.apply(g, bound, z0, reference, &self.config))
    }

    /// Single-image inference; returns the predicted HDR as `[3, H, W]`.
    pub fn predict(&self, input: &NetworkInput) -> Result<Array3<f64>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let ids = [
            g.input(batch_of_one(&input.channels[0])),
            g.input(batch_of_one(&input.channels[1])),
            g.input(batch_of_one(&input.channels[2])),
        ];
        let out = self.forward(&mut g, &bound, ids)?;
        let v = g.value(out);
        let (_, c, h, w) = v.dim();
        Ok(v.view()
            .into_shape_with_order((c, h, w))
            .expect("batch of one")
            .to_owned())
    }
}
