//! Gamma-domain mapping of LDR images and assembly of the 6-channel inputs.

use ndarray::{s, Array3, ArrayBase, Data, Dimension};

use crate::error::{Error, Result};
use crate::util::hwc_to_chw;

use super::{LdrBracket, NetworkInput};

/// Display gamma used to lift LDR images into the HDR domain.
pub const DEFAULT_GAMMA: f64 = 2.2;

/// Maps an LDR image into the HDR domain: `out = ldr^gamma / exposure_time`.
pub fn gamma_correct<S, D>(
    ldr: &ArrayBase<S, D>,
    exposure_time: f64,
    gamma: f64,
) -> Result<ndarray::Array<f64, D>>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if !(exposure_time > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "exposure time must be positive, got {exposure_time}"
        )));
    }
    if ldr.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidData("LDR image contains NaN".into()));
    }
    if ldr.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidData("LDR values outside [0, 1]".into()));
    }
    Ok(ldr.mapv(|v| v.powf(gamma) / exposure_time))
}

/// Builds the three `[6, H, W]` network inputs `X_i = [L_i, H_i]`.
pub fn build_network_input(bracket: &LdrBracket) -> Result<NetworkInput> {
    let (h, w) = bracket.dims();
    let times = bracket.exposure_times();
    let mut channels = Vec::with_capacity(3);
    for (img, t) in bracket.images().iter().zip(times) {
        let ldr = hwc_to_chw(img);
        let hdr = gamma_correct(&ldr, t, DEFAULT_GAMMA)?;
        let mut x = Array3::zeros((6, h, w));
        x.slice_mut(s![0..3, .., ..]).assign(&ldr);
        x.slice_mut(s![3..6, .., ..]).assign(&hdr);
        channels.push(x);
    }
    let channels: [Array3<f64>; 3] = channels.try_into().expect("three branches");
    Ok(NetworkInput { channels })
}
