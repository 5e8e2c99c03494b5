//! Bilinear resampling for `[H, W, C]` images.

use ndarray::Array3;

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn bilinear_resize(img: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let (h, w, c) = img.dim();
    if (h, w) == (out_h, out_w) {
        return img.clone();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Array3::zeros((out_h, out_w, c));
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ci in 0..c {
                let top = img[[y0, x0, ci]] * (1.0 - wx) + img[[y0, x1, ci]] * wx;
                let bottom = img[[y1, x0, ci]] * (1.0 - wx) + img[[y1, x1, ci]] * wx;
                out[[oy, ox, ci]] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}
