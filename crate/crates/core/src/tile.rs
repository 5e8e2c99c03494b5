//! Full-resolution inference in overlapping tiles blended with normalized
//! linear ramps, so memory stays bounded for large images.

use ndarray::{s, Array1, Array2, Array3};
use rayon::prelude::*;

use crate::data::{window_starts, NetworkInput};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::util::chw_to_hwc;

/// Tile geometry for sliding-window inference.
#[derive(Debug, Clone, Copy)]
pub struct TileSpec {
    pub tile_size: usize,
    pub overlap: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            tile_size: 512,
            overlap: 64,
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidArgument("tile_size must be positive".into()));
        }
        if self.overlap >= self.tile_size {
            return Err(Error::InvalidArgument(format!(
                "overlap {} must be smaller than tile size {}",
                self.overlap, self.tile_size
            )));
        }
        Ok(())
    }
}

/// 1-D blend profile for a window `[start, start+len)` on an axis of size
/// `dim`: ramps up over `overlap` samples on sides that have a neighbor,
/// stays 1 on image borders.
fn ramp(dim: usize, start: usize, len: usize, overlap: usize) -> Array1<f64> {
    let mut w = Array1::<f64>::ones(len);
    let rise = overlap.min(len);
    if start > 0 {
        for i in 0..rise {
            w[i] = w[i].min((i + 1) as f64 / (overlap + 1) as f64);
        }
    }
    if start + len < dim {
        for i in 0..rise {
            w[len - 1 - i] = w[len - 1 - i].min((i + 1) as f64 / (overlap + 1) as f64);
        }
    }
    w
}

/// Weight map of one tile: the outer product of its two axis ramps.
pub fn tile_weight(
    dims: (usize, usize),
    origin: (usize, usize),
    size: (usize, usize),
    overlap: usize,
) -> Array2<f64> {
    let wy = ramp(dims.0, origin.0, size.0, overlap);
    let wx = ramp(dims.1, origin.1, size.1, overlap);
    let mut w = Array2::zeros((size.0, size.1));
    for y in 0..size.0 {
        for x in 0..size.1 {
            w[[y, x]] = wy[y] * wx[x];
        }
    }
    w
}

/// The tile grid for an image: `(origin_y, origin_x, tile_h, tile_w)`.
pub fn tile_grid(dims: (usize, usize), spec: &TileSpec) -> Vec<(usize, usize, usize, usize)> {
    let (h, w) = dims;
    let th = spec.tile_size.min(h);
    let tw = spec.tile_size.min(w);
    let stride_y = th.saturating_sub(spec.overlap).max(1);
    let stride_x = tw.saturating_sub(spec.overlap).max(1);
    let ys = window_starts(h, th, stride_y);
    let xs = window_starts(w, tw, stride_x);
    let mut tiles = Vec::with_capacity(ys.len() * xs.len());
    for &y in &ys {
        for &x in &xs {
            tiles.push((y, x, th, tw));
        }
    }
    tiles
}

/// Runs the model over the full input in overlapping tiles and blends the
/// overlaps. Falls back to single-shot inference when one tile covers the
/// image. Returns the HDR estimate as `[H, W, 3]`.
pub fn infer_tiled(model: &Model, input: &NetworkInput, spec: &TileSpec) -> Result<Array3<f64>> {
    spec.validate()?;
    let (h, w) = input.dims();
    let tiles = tile_grid((h, w), spec);

    if tiles.len() == 1 {
        let pred = model.predict(input)?;
        return Ok(chw_to_hwc(&pred));
    }

    // tiles are independent given read-only weights
    let results: Vec<_> = tiles
        .par_iter()
        .map(|&(y, x, th, tw)| {
            let crop = NetworkInput {
                channels: [
                    input.channels[0].slice(s![.., y..y + th, x..x + tw]).to_owned(),
                    input.channels[1].slice(s![.., y..y + th, x..x + tw]).to_owned(),
                    input.channels[2].slice(s![.., y..y + th, x..x + tw]).to_owned(),
                ],
            };
            model.predict(&crop).map(|pred| (y, x, th, tw, pred))
        })
        .collect::<Result<_>>()?;

    let mut num = Array3::<f64>::zeros((h, w, 3));
    let mut den = Array2::<f64>::zeros((h, w));
    for (y, x, th, tw, pred) in results {
        let weight = tile_weight((h, w), (y, x), (th, tw), spec.overlap);
        for ty in 0..th {
            for tx in 0..tw {
                let wv = weight[[ty, tx]];
                den[[y + ty, x + tx]] += wv;
                for c in 0..3 {
                    num[[y + ty, x + tx, c]] += wv * pred[[c, ty, tx]];
                }
            }
        }
    }
    debug_assert!(den.iter().all(|&d| d > 0.0), "tile grid left a pixel uncovered");
    for y in 0..h {
        for x in 0..w {
            let d = den[[y, x]];
            for c in 0..3 {
                num[[y, x, c]] /= d;
            }
        }
    }
    Ok(num)
}
