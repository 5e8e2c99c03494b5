//! Flat key=value configuration files, shared by the CLI, the trainer, and
//! the checkpoint header.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FusionMode, ModelConfig};
use crate::tonemap::TonemapParams;
use crate::trainer::TrainConfig;

/// Everything a run needs: architecture, training recipe, tone mapping, and
/// the optional load-time resize of the dataset protocol.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tonemap: TonemapParams,
    pub resize_to: Option<(usize, usize)>,
}

fn parse_kv(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                msg: format!("line {}: expected key = value, got {raw:?}", lineno + 1),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_val<T: std::str::FromStr>(key: &str, value: &str, origin: &Path) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        path: origin.to_path_buf(),
        msg: format!("invalid value for {key}: {value:?}"),
    })
}

fn parse_bool(key: &str, value: &str, origin: &Path) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Parse {
            path: origin.to_path_buf(),
            msg: format!("invalid boolean for {key}: {value:?}"),
        }),
    }
}

/// Parses a run configuration, starting from defaults. Unknown keys fail
/// loudly.
pub fn parse_run_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let map = parse_kv(text, origin)?;
    for (key, value) in &map {
        apply_key(&mut config, key, value, origin)?;
    }
    config.model.validate()?;
    config.train.validate()?;
    Ok(config)
}

fn apply_key(config: &mut RunConfig, key: &str, value: &str, origin: &Path) -> Result<()> {
    let m = &mut config.model;
    let t = &mut config.train;
    match key {
        "model.channels" => m.channels = parse_val(key, value, origin)?,
        "model.num_psfb" => m.num_psfb = parse_val(key, value, origin)?,
        "model.fusion_mode" => m.fusion_mode = value.parse::<FusionMode>()?,
        "model.num_rdab" => m.num_rdab = parse_val(key, value, origin)?,
        "model.enable_psfb_stack" => m.enable_psfb_stack = parse_bool(key, value, origin)?,
        "model.enable_dab" => m.enable_dab = parse_bool(key, value, origin)?,
        "model.enable_local_skip" => m.enable_local_skip = parse_bool(key, value, origin)?,
        "model.enable_global_skip" => m.enable_global_skip = parse_bool(key, value, origin)?,
        "model.sffb_reduction" => m.sffb_reduction = parse_val(key, value, origin)?,
        "model.share_psfb_convs" => m.share_psfb_convs = parse_bool(key, value, origin)?,
        "model.z0_uses_stack_reference" => {
            m.z0_uses_stack_reference = parse_bool(key, value, origin)?
        }
        "train.lr_initial" => t.lr_initial = parse_val(key, value, origin)?,
        "train.lr_final" => t.lr_final = parse_val(key, value, origin)?,
        "train.epochs" => t.epochs = parse_val(key, value, origin)?,
        "train.batch_size" => t.batch_size = parse_val(key, value, origin)?,
        "train.adam_beta1" => t.adam_beta1 = parse_val(key, value, origin)?,
        "train.adam_beta2" => t.adam_beta2 = parse_val(key, value, origin)?,
        "train.adam_epsilon" => t.adam_epsilon = parse_val(key, value, origin)?,
        "train.seed" => t.seed = parse_val(key, value, origin)?,
        "train.checkpoint_every" => t.checkpoint_every = parse_val(key, value, origin)?,
        "train.grad_clip" => {
            t.grad_clip = if value == "none" {
                None
            } else {
                Some(parse_val(key, value, origin)?)
            }
        }
        "train.patch_size" => t.patch.patch_size = parse_val(key, value, origin)?,
        "train.stride" => t.patch.stride = parse_val(key, value, origin)?,
        "train.augment" => t.augment = parse_bool(key, value, origin)?,
        "tonemap.mu" => config.tonemap = TonemapParams::new(parse_val(key, value, origin)?)?,
        "data.resize" => {
            config.resize_to = if value == "none" {
                None
            } else {
                let Some((h, w)) = value.split_once('x') else {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        msg: format!("data.resize expects HxW or none, got {value:?}"),
                    });
                };
                Some((
                    parse_val("data.resize height", h, origin)?,
                    parse_val("data.resize width", w, origin)?,
                ))
            }
        }
        _ => {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                msg: format!("unknown configuration key {key:?}"),
            })
        }
    }
    Ok(())
}

/// Applies a single `model.*` key to a [`ModelConfig`] (used by ablation
/// matrix files).
pub fn apply_model_key(
    model: &mut ModelConfig,
    key: &str,
    value: &str,
    origin: &Path,
) -> Result<()> {
    if !key.starts_with("model.") {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            msg: format!("ablation overrides must be model.* keys, got {key:?}"),
        });
    }
    let mut tmp = RunConfig {
        model: model.clone(),
        ..RunConfig::default()
    };
    apply_key(&mut tmp, key, value, origin)?;
    *model = tmp.model;
    Ok(())
}

/// Serializes a model configuration as the key=value block stored in
/// checkpoints.
pub fn model_config_to_kv(m: &ModelConfig) -> String {
    format!(
        "model.channels = {}\n\
         model.num_psfb = {}\n\
         model.fusion_mode = {}\n\
         model.num_rdab = {}\n\
         model.enable_psfb_stack = {}\n\
         model.enable_dab = {}\n\
         model.enable_local_skip = {}\n\
         model.enable_global_skip = {}\n\
         model.sffb_reduction = {}\n\
         model.share_psfb_convs = {}\n\
         model.z0_uses_stack_reference = {}\n",
        m.channels,
        m.num_psfb,
        m.fusion_mode,
        m.num_rdab,
        m.enable_psfb_stack,
        m.enable_dab,
        m.enable_local_skip,
        m.enable_global_skip,
        m.sffb_reduction,
        m.share_psfb_convs,
        m.z0_uses_stack_reference
    )
}

/// Parses the model block of a checkpoint header.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let origin = Path::new("<checkpoint>");
    let mut config = RunConfig::default();
    for (key, value) in parse_kv(text, origin)? {
        apply_key(&mut config, &key, &value, origin)?;
    }
    config.model.validate()?;
    Ok(config.model)
}
