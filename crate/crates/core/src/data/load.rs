//! Scene directory loading.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::io::{read_ldr_image, read_radiance_hdr};
use super::resize::bilinear_resize;
use super::{LdrBracket, SceneSample};

/// Name of the per-scene exposure list (three stop-bias lines).
pub const EXPOSURE_FILE: &str = "exposure.txt";
/// Name of the optional ground-truth Radiance file.
pub const GROUND_TRUTH_FILE: &str = "HDRImg.hdr";

/// Options for [`load_scene_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// When set, images whose dimensions differ are bilinearly resized to
    /// `(height, width)` at load time.
    pub resize_to: Option<(usize, usize)>,
}

/// Loads a scene directory with default options (no resizing).
pub fn load_scene(path: &Path) -> Result<SceneSample> {
    load_scene_with(path, LoadOptions::default())
}

/// Loads three exposure-ordered TIFF LDRs, the exposure list, and the
/// optional ground truth from one scene directory.
pub fn load_scene_with(path: &Path, options: LoadOptions) -> Result<SceneSample> {
    if !path.is_dir() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let mut ldr_paths: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                Some(ref ext) if ext == "tif" || ext == "tiff"
            )
        })
        .collect();
    ldr_paths.sort();
    if ldr_paths.len() != 3 {
        return Err(Error::InvalidData(format!(
            "scene {} must contain exactly three .tif LDR images, found {}",
            path.display(),
            ldr_paths.len()
        )));
    }

    let exposure_path = path.join(EXPOSURE_FILE);
    if !exposure_path.is_file() {
        return Err(Error::NotFound(exposure_path));
    }
    let biases = read_exposure_biases(&exposure_path)?;
    let times = [
        2f64.powf(biases[0]),
        2f64.powf(biases[1]),
        2f64.powf(biases[2]),
    ];

    let mut images = Vec::with_capacity(3);
    for p in &ldr_paths {
        let mut img = read_ldr_image(p)?;
        if let Some((h, w)) = options.resize_to {
            img = bilinear_resize(&img, h, w);
            // interpolation of in-range values can only stay in range, but
            // guard against float drift before validation
            img.mapv_inplace(|v| v.clamp(0.0, 1.0));
        }
        images.push(img);
    }
    let images: [_; 3] = images.try_into().expect("three LDR images");
    let bracket = LdrBracket::new(images, times)?;

    let gt_path = path.join(GROUND_TRUTH_FILE);
    let ground_truth = if gt_path.is_file() {
        let mut gt = read_radiance_hdr(&gt_path)?;
        if let Some((h, w)) = options.resize_to {
            gt = bilinear_resize(&gt, h, w);
            gt.mapv_inplace(|v| v.clamp(0.0, 1.0));
        }
        Some(gt)
    } else {
        None
    };

    let scene_id = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("scene")
        .to_string();
    SceneSample::new(bracket, ground_truth, scene_id)
}

/// Parses three stop-bias lines (blank lines ignored).
fn read_exposure_biases(path: &Path) -> Result<[f64; 3]> {
    let text = std::fs::read_to_string(path)?;
    let values: Vec<f64> = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("exposure bias line is not numeric: {l:?}"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != 3 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("expected three exposure bias lines, found {}", values.len()),
        });
    }
    Ok([values[0], values[1], values[2]])
}

/// All scene directories directly below `root`, sorted by name.
pub fn list_scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::NotFound(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join(EXPOSURE_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
