//! Direct 2-D convolution (stride 1, zero padding) via chunked im2col + GEMM.
//!
//! The column buffer is built for a band of output rows at a time so peak
//! memory stays bounded for large inputs. Weights are `[c_out, c_in, k, k]`,
//! activations are `[batch, channels, height, width]`.

use ndarray::{s, Array2, Array4, ArrayView4};

/// Soft cap on the im2col buffer, in elements (~64 MiB of f64).
const COL_BUDGET: usize = 8 * 1024 * 1024;

fn rows_per_chunk(c_in: usize, k: usize, w: usize, h: usize) -> usize {
    (COL_BUDGET / (c_in * k * k * w).max(1)).clamp(1, h)
}

/// y[b, co, y, x] = sum_{ci,dy,dx} w[co, ci, dy, dx] * x[b, ci, y+dy-pad, x+dx-pad]
pub fn conv2d(x: &Array4<f64>, w: &Array4<f64>, pad: usize) -> Array4<f64> {
    let (batch, c_in, h, wd) = x.dim();
    let (c_out, c_in_w, k, k2) = w.dim();
    assert_eq!(c_in, c_in_w, "conv2d: input/weight channel mismatch");
    assert_eq!(k, k2, "conv2d: non-square kernel");
    let w_mat = w.view().into_shape_with_order((c_out, c_in * k * k)).unwrap();

    let mut y = Array4::zeros((batch, c_out, h, wd));
    let band = rows_per_chunk(c_in, k, wd, h);
    let mut col = Array2::zeros((c_in * k * k, band * wd));
    for b in 0..batch {
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + band).min(h);
            let cols = (y1 - y0) * wd;
            let mut col_band = col.slice_mut(s![.., ..cols]);
            // reuse the buffer; im2col_band clears it
            im2col_band(&mut col_band, &x.view(), b, y0, y1, k, pad);
            let out = w_mat.dot(&col_band.view());
            y.slice_mut(s![b, .., y0..y1, ..])
                .assign(&out.into_shape_with_order((c_out, y1 - y0, wd)).unwrap());
            y0 = y1;
        }
    }
    y
}

/// Fill `col` with the im2col expansion of output rows `y0..y1` of batch item `b`.
fn im2col_band(
    col: &mut ndarray::ArrayViewMut2<f64>,
    x: &ArrayView4<f64>,
    b: usize,
    y0: usize,
    y1: usize,
    k: usize,
    pad: usize,
) {
    let (_, c_in, h, w) = x.dim();
    col.fill(0.0);
    for ci in 0..c_in {
        for dy in 0..k {
            for dx in 0..k {
                let row = (ci * k + dy) * k + dx;
                let x_lo = pad.saturating_sub(dx);
                let x_hi = (w + pad - dx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in y0..y1 {
                    let sy = y + dy;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let sy = sy - pad;
                    let base = (y - y0) * w;
                    col.slice_mut(s![row, base + x_lo..base + x_hi])
                        .assign(&x.slice(s![b, ci, sy, x_lo + dx - pad..x_hi + dx - pad]));
                }
            }
        }
    }
}

/// Gradients of `conv2d` w.r.t. input and weight.
pub fn conv2d_backward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    dy: &Array4<f64>,
    pad: usize,
) -> (Array4<f64>, Array4<f64>) {
    let (batch, c_in, h, wd) = x.dim();
    let (c_out, _, k, _) = w.dim();
    let w_mat = w.view().into_shape_with_order((c_out, c_in * k * k)).unwrap();

    let mut dx = Array4::zeros((batch, c_in, h, wd));
    let mut dw_mat = Array2::<f64>::zeros((c_out, c_in * k * k));
    let band = rows_per_chunk(c_in, k, wd, h);
    let mut col = Array2::zeros((c_in * k * k, band * wd));
    for b in 0..batch {
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + band).min(h);
            let cols = (y1 - y0) * wd;
            let mut col_band = col.slice_mut(s![.., ..cols]);
            im2col_band(&mut col_band, &x.view(), b, y0, y1, k, pad);

            let dy_band = dy.slice(s![b, .., y0..y1, ..]);
            let dy_mat = dy_band
                .to_shape((c_out, (y1 - y0) * wd))
                .expect("dy band not contiguous");
            dw_mat = dw_mat + dy_mat.dot(&col_band.view().reversed_axes());

            let dcol = w_mat.t().dot(&dy_mat.view());
            col2im_band(&mut dx, &dcol, b, y0, y1, k, pad);
            y0 = y1;
        }
    }
    let dw = dw_mat.into_shape_with_order((c_out, c_in, k, k)).unwrap();
    (dx, dw)
}

fn col2im_band(
    dx: &mut Array4<f64>,
    dcol: &Array2<f64>,
    b: usize,
    y0: usize,
    y1: usize,
    k: usize,
    pad: usize,
) {
    let (_, c_in, h, w) = dx.dim();
    for ci in 0..c_in {
        for dy in 0..k {
            for dx_tap in 0..k {
                let row = (ci * k + dy) * k + dx_tap;
                let x_lo = pad.saturating_sub(dx_tap);
                let x_hi = (w + pad - dx_tap).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in y0..y1 {
                    let sy = y + dy;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let sy = sy - pad;
                    let base = (y - y0) * w;
                    let src = dcol.slice(s![row, base + x_lo..base + x_hi]);
                    let mut dst =
                        dx.slice_mut(s![b, ci, sy, x_lo + dx_tap - pad..x_hi + dx_tap - pad]);
                    dst += &src;
                }
            }
        }
    }
}
