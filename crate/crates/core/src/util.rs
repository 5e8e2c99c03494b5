//! Seed derivation and small array helpers.

use ndarray::{Array3, Array4};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a 64-bit. Used instead of `DefaultHasher` so derived seeds are stable
/// across Rust releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Deterministic RNG derived from a base seed and a list of context tags.
pub fn rng_for(seed: u64, tags: &[&[u8]]) -> ChaCha12Rng {
    let mut h = fnv1a64(&seed.to_le_bytes());
    for tag in tags {
        h = fnv1a64(&[&h.to_le_bytes()[..], tag].concat());
    }
    ChaCha12Rng::seed_from_u64(h)
}

/// `[H, W, 3]` image -> `[3, H, W]` network plane order.
pub fn hwc_to_chw(img: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = img.dim();
    let mut out = Array3::zeros((c, h, w));
    for ci in 0..c {
        for hi in 0..h {
            for wi in 0..w {
                out[[ci, hi, wi]] = img[[hi, wi, ci]];
            }
        }
    }
    out
}

/// `[C, H, W]` -> `[H, W, C]`.
pub fn chw_to_hwc(planes: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = planes.dim();
    let mut out = Array3::zeros((h, w, c));
    for ci in 0..c {
        for hi in 0..h {
            for wi in 0..w {
                out[[hi, wi, ci]] = planes[[ci, hi, wi]];
            }
        }
    }
    out
}

/// Adds a leading batch axis of size 1.
pub fn batch_of_one(chw: &Array3<f64>) -> Array4<f64> {
    let (c, h, w) = chw.dim();
    chw.clone()
        .into_shape_with_order((1, c, h, w))
        .expect("contiguous CHW array")
}
