//! Synthetic scene fixtures: a smooth random radiance field and the three
//! LDR exposures it implies. Used by tests, the acceptance suite, and demo
//! datasets.

use std::path::Path;

use ndarray::Array3;
use rand::Rng;

use crate::data::{
    bilinear_resize, write_radiance_hdr, write_tiff_u16, LdrBracket, SceneSample, EXPOSURE_FILE,
    GROUND_TRUTH_FILE,
};
use crate::error::Result;
use crate::util::rng_for;

/// Relative exposure times implied by the (-2, 0, +2) stop biases.
pub const SYNTH_EXPOSURES: [f64; 3] = [0.25, 1.0, 4.0];
const SYNTH_BIASES: [f64; 3] = [-2.0, 0.0, 2.0];
const GAMMA: f64 = 2.2;

/// Smooth random radiance field in `[0.05, 0.95]`: low-resolution noise
/// upsampled bilinearly.
pub fn synth_ground_truth(h: usize, w: usize, seed: u64) -> Array3<f64> {
    let mut rng = rng_for(seed, &[b"synth-gt"]);
    let lh = (h / 16).max(2);
    let lw = (w / 16).max(2);
    let low = Array3::from_shape_simple_fn((lh, lw, 3), || rng.random_range(0.0..1.0));
    let up = bilinear_resize(&low, h, w);
    up.mapv(|v| 0.05 + 0.9 * v)
}

/// The LDR exposure a radiance field would produce at exposure time `t`:
/// the inverse of the gamma-domain mapping, clipped to the displayable range.
pub fn expose(gt: &Array3<f64>, t: f64) -> Array3<f64> {
    gt.mapv(|v| (v * t).min(1.0).max(0.0).powf(1.0 / GAMMA))
}

/// An in-memory synthetic scene with ground truth.
pub fn synth_scene(h: usize, w: usize, seed: u64, id: &str) -> SceneSample {
    let gt = synth_ground_truth(h, w, seed);
    let images = SYNTH_EXPOSURES.map(|t| expose(&gt, t));
    let bracket = LdrBracket::new(images, SYNTH_EXPOSURES).expect("synthetic bracket is valid");
    SceneSample::new(bracket, Some(gt), id).expect("synthetic scene is valid")
}

/// Writes one synthetic scene directory (three 16-bit TIFFs, exposure list,
/// ground-truth HDR).
pub fn write_synth_scene(dir: &Path, h: usize, w: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let gt = synth_ground_truth(h, w, seed);
    for (i, t) in SYNTH_EXPOSURES.iter().enumerate() {
        let ldr = expose(&gt, *t);
        write_tiff_u16(&dir.join(format!("input_{}.tif", i + 1)), &ldr)?;
    }
    std::fs::write(
        dir.join(EXPOSURE_FILE),
        format!("{}\n{}\n{}\n", SYNTH_BIASES[0], SYNTH_BIASES[1], SYNTH_BIASES[2]),
    )?;
    write_radiance_hdr(&dir.join(GROUND_TRUTH_FILE), &gt)?;
    Ok(())
}

/// Writes `scenes` synthetic scene directories under `root`.
pub fn write_synth_dataset(root: &Path, scenes: usize, h: usize, w: usize, seed: u64) -> Result<()> {
    for i in 0..scenes {
        write_synth_scene(&root.join(format!("{:03}", i + 1)), h, w, seed.wrapping_add(i as u64))?;
    }
    Ok(())
}
