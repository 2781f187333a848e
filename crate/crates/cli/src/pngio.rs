//! PNG input and output in unit scale.
//!
//! Inputs may be 8- or 16-bit grayscale or RGB; samples widen to f64 by
//! division with the sample-type maximum. Output is always 8-bit with
//! clip-then-round quantization `floor(clamp(v, 0, 1) * 255 + 0.5)`, so an
//! exact half rounds up: 0.5 exports as byte 128.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use udke_core::Image;

use crate::commands::Failure;

/// Reads a PNG into channel-major unit-scale planes.
pub fn read_png(path: &Path) -> Result<Image, Failure> {
    let reader =
        image::open(path).map_err(|e| Failure::Data(format!("read {}: {e}", path.display())))?;
    let (c, h, w, data) = match reader {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
            (1, h, w, data)
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect();
            (1, h, w, data)
        }
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            (3, h, w, deinterleave(&buf.into_raw(), h * w, 255.0))
        }
        DynamicImage::ImageRgb16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            (3, h, w, deinterleave(&buf.into_raw(), h * w, 65535.0))
        }
        other => {
            return Err(Failure::Data(format!(
                "{}: unsupported color type {:?}, expected 8- or 16-bit gray or rgb",
                path.display(),
                other.color()
            )))
        }
    };
    Image::from_vec(c, h, w, data).map_err(Failure::from)
}

fn deinterleave<T: Copy + Into<f64>>(raw: &[T], pixels: usize, max: f64) -> Vec<f64> {
    let mut planes = vec![0.0; 3 * pixels];
    for (p, px) in raw.chunks_exact(3).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            planes[ch * pixels + p] = v.into() / max;
        }
    }
    planes
}

/// Clip-then-round export quantization: half values round up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes a 1- or 3-channel image as an 8-bit PNG.
pub fn write_png(path: &Path, img: &Image) -> Result<(), Failure> {
    let (h, w) = (img.height() as u32, img.width() as u32);
    let saved = match img.channels() {
        1 => {
            let raw: Vec<u8> = img.plane(0).iter().map(|&v| quantize(v)).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
                .expect("buffer sized from image")
                .save(path)
        }
        3 => {
            let pixels = img.height() * img.width();
            let mut raw = vec![0u8; 3 * pixels];
            for ch in 0..3 {
                for (p, &v) in img.plane(ch).iter().enumerate() {
                    raw[p * 3 + ch] = quantize(v);
                }
            }
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw)
                .expect("buffer sized from image")
                .save(path)
        }
        c => {
            return Err(Failure::Data(format!(
                "cannot export a {c}-channel image as png"
            )))
        }
    };
    saved.map_err(|e| Failure::Data(format!("write {}: {e}", path.display())))
}
