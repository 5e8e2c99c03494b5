//! The ablation harness: train each variant with the same seed and data,
//! evaluate on the test set, and report a comparison table.

use std::path::Path;

use crate::data::LoadOptions;
use crate::error::Result;
use crate::metrics::{evaluate, EvalOptions, SceneMetrics};
use crate::model::{FusionMode, ModelConfig};

use super::{load_checkpoint, train, TrainConfig};

/// One row of an ablation matrix.
#[derive(Debug, Clone)]
pub struct AblationVariant {
    pub name: String,
    pub config: ModelConfig,
}

impl AblationVariant {
    pub fn new(name: impl Into<String>, config: ModelConfig) -> Self {
        Self {
            name: name.into(),
            config,
        }
    }

    /// Directory-safe variant name.
    pub fn slug(&self) -> String {
        self.name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect()
    }
}

/// Fusion-method comparison: summation, concatenation, selective fusion.
pub fn fusion_matrix(base: &ModelConfig) -> Vec<AblationVariant> {
    [FusionMode::Summation, FusionMode::Concatenation, FusionMode::Sffb]
        .into_iter()
        .map(|mode| {
            AblationVariant::new(
                mode.to_string(),
                ModelConfig {
                    fusion_mode: mode,
                    ..base.clone()
                },
            )
        })
        .collect()
}

/// Component ablations plus the full model.
pub fn component_matrix(base: &ModelConfig) -> Vec<AblationVariant> {
    vec![
        AblationVariant::new(
            "w/o PSFBs",
            ModelConfig {
                enable_psfb_stack: false,
                ..base.clone()
            },
        ),
        AblationVariant::new(
            "w/o DAB",
            ModelConfig {
                enable_dab: false,
                ..base.clone()
            },
        ),
        AblationVariant::new(
            "w/o LSC",
            ModelConfig {
                enable_local_skip: false,
                ..base.clone()
            },
        ),
        AblationVariant::new(
            "w/o GSC",
            ModelConfig {
                enable_global_skip: false,
                ..base.clone()
            },
        ),
        AblationVariant::new("full", base.clone()),
    ]
}

/// Depth sweep over the fusion-block stack.
pub fn block_count_matrix(base: &ModelConfig) -> Vec<AblationVariant> {
    (4..=8)
        .map(|blocks| {
            AblationVariant::new(
                format!("{blocks} blocks"),
                ModelConfig {
                    num_psfb: blocks,
                    ..base.clone()
                },
            )
        })
        .collect()
}

/// Ablation results in variant order.
#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<(String, SceneMetrics)>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,psnr_mu,psnr_l,ssim_mu,ssim_l\n");
        for (name, m) in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                name,
                fmt4(m.psnr_mu),
                fmt4(m.psnr_l),
                fmt4(m.ssim_mu),
                fmt4(m.ssim_l)
            ));
        }
        out
    }
}

fn fmt4(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

/// Parses a custom matrix file: one variant per line,
/// `name | model.key=value model.key=value ...`, `#` starts a comment.
pub fn parse_matrix(
    text: &str,
    base: &ModelConfig,
    origin: &Path,
) -> Result<Vec<AblationVariant>> {
    let mut variants = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, overrides) = match line.split_once('|') {
            Some((n, o)) => (n.trim(), o.trim()),
            None => (line, ""),
        };
        if name.is_empty() {
            return Err(crate::Error::Parse {
                path: origin.to_path_buf(),
                msg: format!("line {}: variant name is empty", lineno + 1),
            });
        }
        let mut config = base.clone();
        for pair in overrides.split_whitespace() {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(crate::Error::Parse {
                    path: origin.to_path_buf(),
                    msg: format!("line {}: expected key=value, got {pair:?}", lineno + 1),
                });
            };
            crate::config::apply_model_key(&mut config, key, value, origin)?;
        }
        config.validate()?;
        variants.push(AblationVariant::new(name, config));
    }
    Ok(variants)
}

/// Trains and evaluates every variant with identical seed and data. Each
/// variant's checkpoints and logs land under `out_dir/<slug>/`.
pub fn run_ablation(
    variants: &[AblationVariant],
    train_root: &Path,
    test_root: &Path,
    train_config: &TrainConfig,
    eval_options: &EvalOptions,
    out_dir: &Path,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(variants.len());
    let load = LoadOptions {
        resize_to: eval_options.resize_to,
    };
    for variant in variants {
        let variant_dir = out_dir.join(variant.slug());
        let outcome = train(
            train_root,
            variant.config.clone(),
            train_config,
            &variant_dir,
            load,
        )?;
        let model = load_checkpoint(&outcome.final_checkpoint)?.model;
        let report = evaluate(&model, test_root, eval_options)?;
        rows.push((variant.name.clone(), report.averages));
    }
    Ok(AblationReport { rows })
}
