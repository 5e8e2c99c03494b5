//! Sliding-window patch extraction with paired augmentation.

use ndarray::{s, Array3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::util::rng_for;

use super::{LdrBracket, PatchSpec, SceneSample};

/// Spatial transforms applied identically to the three LDRs and the ground
/// truth of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    Identity,
    Rotate90,
    Rotate180,
    Rotate270,
    FlipHorizontal,
    FlipVertical,
}

impl Augmentation {
    pub const ALL: [Augmentation; 6] = [
        Augmentation::Identity,
        Augmentation::Rotate90,
        Augmentation::Rotate180,
        Augmentation::Rotate270,
        Augmentation::FlipHorizontal,
        Augmentation::FlipVertical,
    ];
}

/// Applies a spatial transform to an `[H, W, C]` image. Rotations are
/// clockwise.
pub fn apply_augmentation(img: &Array3<f64>, aug: Augmentation) -> Array3<f64> {
    let (h, w, c) = img.dim();
    match aug {
        Augmentation::Identity => img.clone(),
        Augmentation::Rotate90 => {
            Array3::from_shape_fn((w, h, c), |(r, col, ch)| img[[h - 1 - col, r, ch]])
        }
        Augmentation::Rotate180 => {
            Array3::from_shape_fn((h, w, c), |(r, col, ch)| img[[h - 1 - r, w - 1 - col, ch]])
        }
        Augmentation::Rotate270 => {
            Array3::from_shape_fn((w, h, c), |(r, col, ch)| img[[col, w - 1 - r, ch]])
        }
        Augmentation::FlipHorizontal => {
            Array3::from_shape_fn((h, w, c), |(r, col, ch)| img[[r, w - 1 - col, ch]])
        }
        Augmentation::FlipVertical => {
            Array3::from_shape_fn((h, w, c), |(r, col, ch)| img[[h - 1 - r, col, ch]])
        }
    }
}

/// Window start offsets along one axis: multiples of `stride`, with a final
/// window clamped to end at the border when the regular grid leaves a tail
/// uncovered.
pub fn window_starts(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    assert!(size <= dim, "window larger than axis");
    assert!(stride > 0);
    let mut starts = Vec::new();
    let mut s = 0;
    while s + size <= dim {
        starts.push(s);
        s += stride;
    }
    if starts.last().map(|&l| l + size < dim).unwrap_or(true) {
        starts.push(dim - size);
    }
    starts
}

/// Cuts a training sample into patches. When `augment` is set, each patch
/// carries one transform drawn uniformly from identity plus the spec's pool,
/// derived from `(seed, scene_id, patch_index)`.
pub fn extract_patches(
    sample: &SceneSample,
    spec: &PatchSpec,
    augment: bool,
    seed: u64,
) -> Result<Vec<SceneSample>> {
    spec.validate()?;
    let Some(gt) = &sample.ground_truth else {
        return Err(Error::InvalidArgument(format!(
            "scene {} has no ground truth; patches are a training-time construct",
            sample.scene_id
        )));
    };
    let (h, w) = sample.bracket.dims();
    if h < spec.patch_size || w < spec.patch_size {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} is smaller than patch size {}",
            spec.patch_size
        )));
    }

    let mut pool = vec![Augmentation::Identity];
    pool.extend(spec.augmentations.iter().copied());

    let rows = window_starts(h, spec.patch_size, spec.stride);
    let cols = window_starts(w, spec.patch_size, spec.stride);
    let mut patches = Vec::with_capacity(rows.len() * cols.len());
    let mut index: u64 = 0;
    for &r in &rows {
        for &c in &cols {
            let cut = |img: &Array3<f64>| {
                img.slice(s![r..r + spec.patch_size, c..c + spec.patch_size, ..])
                    .to_owned()
            };
            let mut images = [
                cut(&sample.bracket.images()[0]),
                cut(&sample.bracket.images()[1]),
                cut(&sample.bracket.images()[2]),
            ];
            let mut gt_patch = cut(gt);

            if augment {
                let mut rng = rng_for(
                    seed,
                    &[b"augment", sample.scene_id.as_bytes(), &index.to_le_bytes()],
                );
                let aug = pool[rng.random_range(0..pool.len())];
                for img in &mut images {
                    *img = apply_augmentation(img, aug);
                }
                gt_patch = apply_augmentation(&gt_patch, aug);
            }

            let bracket = LdrBracket::new(images, sample.bracket.exposure_times())?;
            patches.push(SceneSample::new(
                bracket,
                Some(gt_patch),
                format!("{}/p{index:04}", sample.scene_id),
            )?);
            index += 1;
        }
    }
    Ok(patches)
}
