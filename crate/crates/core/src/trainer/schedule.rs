//! Cosine annealing of the learning rate, stepped per epoch.

use crate::error::{Error, Result};

use super::TrainConfig;

/// Learning rate for `epoch` in `0..config.epochs`:
/// `lr_final + 0.5 * (lr_initial - lr_final) * (1 + cos(pi * epoch / (epochs - 1)))`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside schedule of {} epochs",
            config.epochs
        )));
    }
    if config.epochs == 1 {
        return Ok(config.lr_initial);
    }
    let progress = epoch as f64 / (config.epochs - 1) as f64;
    Ok(config.lr_final
        + 0.5 * (config.lr_initial - config.lr_final) * (1.0 + (std::f64::consts::PI * progress).cos()))
}
