//! Image file codecs: LDR TIFF input, Radiance HDR input/output, PNG preview
//! output. Pixel data moves through `[H, W, 3]` f64 arrays.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::codecs::hdr::{HdrDecoder, HdrEncoder};
use image::{DynamicImage, Rgb};
use ndarray::Array3;

use crate::error::{Error, Result};

/// Reads an LDR image (8- or 16-bit) and normalizes by the format's maximum
/// value.
pub fn read_ldr_image(path: &Path) -> Result<Array3<f64>> {
    let img = image::open(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let arr = match img {
        DynamicImage::ImageRgb16(buf) => {
            let (w, h) = buf.dimensions();
            from_pixels(h as usize, w as usize, buf.pixels(), |p, c| {
                p.0[c] as f64 / u16::MAX as f64
            })
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgba16(_) => {
            let buf = img.to_rgb16();
            let (w, h) = buf.dimensions();
            from_pixels(h as usize, w as usize, buf.pixels(), |p, c| {
                p.0[c] as f64 / u16::MAX as f64
            })
        }
        other => {
            let buf = other.to_rgb8();
            let (w, h) = buf.dimensions();
            from_pixels(h as usize, w as usize, buf.pixels(), |p, c| {
                p.0[c] as f64 / u8::MAX as f64
            })
        }
    };
    Ok(arr)
}

fn from_pixels<'a, P: 'a>(
    h: usize,
    w: usize,
    pixels: impl Iterator<Item = &'a P>,
    get: impl Fn(&P, usize) -> f64,
) -> Array3<f64> {
    let mut arr = Array3::zeros((h, w, 3));
    for (i, p) in pixels.enumerate() {
        let (y, x) = (i / w, i % w);
        for c in 0..3 {
            arr[[y, x, c]] = get(p, c);
        }
    }
    arr
}

/// Reads a Radiance RGBE file. Values are clamped to `[0, 1]`; negative
/// radiance is rejected.
pub fn read_radiance_hdr(path: &Path) -> Result<Array3<f64>> {
    let file = File::open(path).map_err(|_| Error::NotFound(path.to_path_buf()))?;
    let decoder = HdrDecoder::new(BufReader::new(file)).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let img = DynamicImage::from_decoder(decoder).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let buf = img.into_rgb32f();
    let (w, h) = buf.dimensions();
    let mut arr = Array3::zeros((h as usize, w as usize, 3));
    for (i, p) in buf.pixels().enumerate() {
        let (y, x) = (i / w as usize, i % w as usize);
        for c in 0..3 {
            let v = p.0[c] as f64;
            if v < 0.0 || v.is_nan() {
                return Err(Error::InvalidData(format!(
                    "negative or NaN radiance in {}",
                    path.display()
                )));
            }
            arr[[y, x, c]] = v.min(1.0);
        }
    }
    Ok(arr)
}

/// Writes `[H, W, 3]` radiance values as a Radiance RGBE file.
pub fn write_radiance_hdr(path: &Path, img: &Array3<f64>) -> Result<()> {
    let (h, w, c) = img.dim();
    if c != 3 {
        return Err(Error::InvalidArgument(format!(
            "HDR output must have 3 channels, got {c}"
        )));
    }
    let pixels: Vec<Rgb<f32>> = img
        .rows()
        .into_iter()
        .map(|px| Rgb([px[0] as f32, px[1] as f32, px[2] as f32]))
        .collect();
    let file = File::create(path)?;
    HdrEncoder::new(BufWriter::new(file))
        .encode(&pixels, w, h)
        .map_err(Error::Image)?;
    Ok(())
}

/// Writes an 8-bit PNG; input values are expected in `[0, 1]` and are
/// rounded to `round(255 * v)`.
pub fn write_png_u8(path: &Path, img: &Array3<f64>) -> Result<()> {
    let (h, w, c) = img.dim();
    if c != 3 {
        return Err(Error::InvalidArgument(format!(
            "PNG output must have 3 channels, got {c}"
        )));
    }
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                (img[[y, x, 0]].clamp(0.0, 1.0) * 255.0).round() as u8,
                (img[[y, x, 1]].clamp(0.0, 1.0) * 255.0).round() as u8,
                (img[[y, x, 2]].clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path)?;
    Ok(())
}

/// Writes `[H, W, 3]` values in `[0, 1]` as a 16-bit TIFF.
pub fn write_tiff_u16(path: &Path, img: &Array3<f64>) -> Result<()> {
    let (h, w, c) = img.dim();
    if c != 3 {
        return Err(Error::InvalidArgument(format!(
            "TIFF output must have 3 channels, got {c}"
        )));
    }
    let mut buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                (img[[y, x, 0]].clamp(0.0, 1.0) * u16::MAX as f64).round() as u16,
                (img[[y, x, 1]].clamp(0.0, 1.0) * u16::MAX as f64).round() as u16,
                (img[[y, x, 2]].clamp(0.0, 1.0) * u16::MAX as f64).round() as u16,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path)?;
    Ok(())
}
