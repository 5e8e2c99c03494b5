//! Scene loading, gamma-domain preprocessing, and train-time patch
//! extraction.
//!
//! A scene directory holds three exposure-bracketed LDR images (16-bit TIFF,
//! lexicographically exposure-ordered), an `exposure.txt` with three stop
//! biases, and optionally a Radiance `HDRImg.hdr` ground truth.

mod io;
mod load;
mod patch;
mod preprocess;
mod resize;

pub use io::{read_ldr_image, read_radiance_hdr, write_png_u8, write_radiance_hdr, write_tiff_u16};
pub use load::{list_scene_dirs, load_scene, load_scene_with, LoadOptions, EXPOSURE_FILE, GROUND_TRUTH_FILE};
pub use patch::{apply_augmentation, extract_patches, window_starts, Augmentation};
pub use preprocess::{build_network_input, gamma_correct, DEFAULT_GAMMA};
pub use resize::bilinear_resize;

use ndarray::Array3;

use crate::error::{Error, Result};

/// Index of the reference exposure within a bracket (the middle image).
pub const REFERENCE_INDEX: usize = 1;

/// Three exposure-ordered LDR images with their relative exposure times.
#[derive(Debug, Clone)]
pub struct LdrBracket {
    images: [Array3<f64>; 3],
    exposure_times: [f64; 3],
    reference_index: usize,
}

impl LdrBracket {
    /// Images are `[H, W, 3]` in `[0, 1]`, exposure-ascending; times are
    /// relative linear exposures (`2^bias`), strictly increasing.
    pub fn new(images: [Array3<f64>; 3], exposure_times: [f64; 3]) -> Result<Self> {
        let dim = images[0].dim();
        for (i, img) in images.iter().enumerate() {
            if img.dim() != dim {
                return Err(Error::InvalidData(format!(
                    "bracket image {i} has shape {:?}, expected {:?}",
                    img.dim(),
                    dim
                )));
            }
            if img.dim().2 != 3 {
                return Err(Error::InvalidData(format!(
                    "bracket image {i} must have 3 channels, got {}",
                    img.dim().2
                )));
            }
            if img.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidData(format!(
                    "bracket image {i} has values outside [0, 1]"
                )));
            }
        }
        if exposure_times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidData(format!(
                "exposure times must be positive, got {exposure_times:?}"
            )));
        }
        if !(exposure_times[0] < exposure_times[1] && exposure_times[1] < exposure_times[2]) {
            return Err(Error::InvalidData(format!(
                "exposure times must be strictly increasing, got {exposure_times:?}"
            )));
        }
        Ok(Self {
            images,
            exposure_times,
            reference_index: REFERENCE_INDEX,
        })
    }

    pub fn images(&self) -> &[Array3<f64>; 3] {
        &self.images
    }

    pub fn exposure_times(&self) -> [f64; 3] {
        self.exposure_times
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn reference(&self) -> &Array3<f64> {
        &self.images[self.reference_index]
    }

    /// `(height, width)` shared by all three images.
    pub fn dims(&self) -> (usize, usize) {
        let (h, w, _) = self.images[0].dim();
        (h, w)
    }
}

/// A bracket plus optional ground-truth HDR image, as loaded from disk.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub bracket: LdrBracket,
    pub ground_truth: Option<Array3<f64>>,
    pub scene_id: String,
}

impl SceneSample {
    pub fn new(
        bracket: LdrBracket,
        ground_truth: Option<Array3<f64>>,
        scene_id: impl Into<String>,
    ) -> Result<Self> {
        if let Some(gt) = &ground_truth {
            let (h, w) = bracket.dims();
            if gt.dim() != (h, w, 3) {
                return Err(Error::InvalidData(format!(
                    "ground truth shape {:?} does not match bracket {:?}",
                    gt.dim(),
                    (h, w, 3)
                )));
            }
            if gt.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidData(
                    "ground truth has values outside [0, 1]".into(),
                ));
            }
        }
        Ok(Self {
            bracket,
            ground_truth,
            scene_id: scene_id.into(),
        })
    }
}

/// The three 6-channel tensors fed to the network: `X_i = [L_i, H_i]` with
/// `H_i = L_i^gamma / t_i`, in `[C, H, W]` plane order.
#[derive(Debug, Clone)]
pub struct NetworkInput {
    pub channels: [Array3<f64>; 3],
}

impl NetworkInput {
    /// `(height, width)` of the input planes.
    pub fn dims(&self) -> (usize, usize) {
        let (_, h, w) = self.channels[0].dim();
        (h, w)
    }
}

/// Train-time patch grid and augmentation pool.
#[derive(Debug, Clone)]
pub struct PatchSpec {
    pub patch_size: usize,
    pub stride: usize,
    pub augmentations: Vec<Augmentation>,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            patch_size: 256,
            stride: 128,
            augmentations: vec![
                Augmentation::Rotate90,
                Augmentation::Rotate180,
                Augmentation::Rotate270,
                Augmentation::FlipHorizontal,
                Augmentation::FlipVertical,
            ],
        }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::InvalidArgument("patch_size must be positive".into()));
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(Error::InvalidArgument(format!(
                "stride must satisfy 0 < stride <= patch_size, got {} vs {}",
                self.stride, self.patch_size
            )));
        }
        Ok(())
    }
}
