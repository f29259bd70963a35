//! 8-bit raster IO.
//!
//! Samples are mapped between `u8` and `[0, 1]` by `v / 255` and `round(v * 255)`,
//! so an 8-bit image survives a read/write cycle unchanged. Images with a validity
//! mask are written as RGBA with zero alpha on invalid pixels; on reading, zero
//! alpha marks a pixel invalid.

use std::io::Cursor;
use std::path::Path;

use geocorr_core::ImageBuffer;
use image::{DynamicImage, ImageFormat, RgbImage, RgbaImage};

use crate::error::{Error, Result};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn from_dynamic(img: &DynamicImage) -> ImageBuffer {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_alpha() {
        let rgba = img.to_rgba8();
        let data: Vec<f32> = rgba
            .as_raw()
            .iter()
            .map(|v| f32::from(*v) / 255.0)
            .collect();
        let valid: Vec<bool> = rgba.pixels().map(|p| p.0[3] != 0).collect();
        let buf = ImageBuffer::new(w, h, 4, data).expect("sizes match");
        if valid.iter().all(|v| *v) {
            buf
        } else {
            buf.with_mask(valid).expect("mask length matches")
        }
    } else {
        let rgb = img.to_rgb8();
        let data = rgb.as_raw().iter().map(|v| f32::from(*v) / 255.0).collect();
        ImageBuffer::new(w, h, 3, data).expect("sizes match")
    }
}

pub fn to_dynamic(img: &ImageBuffer) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    if img.channels() == 3 && img.mask().is_none() {
        let raw = img.data().iter().map(|v| to_u8(*v)).collect();
        return DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("sizes match"));
    }
    let mut raw = Vec::with_capacity(img.width() * img.height() * 4);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let px = img.pixel(x, y);
            raw.extend(px[..3].iter().map(|v| to_u8(*v)));
            let alpha = if !img.is_valid(x, y) {
                0
            } else if img.channels() == 4 {
                // Keep valid pixels distinguishable from the invalid fill.
                to_u8(px[3]).max(1)
            } else {
                255
            };
            raw.push(alpha);
        }
    }
    DynamicImage::ImageRgba8(RgbaImage::from_raw(w, h, raw).expect("sizes match"))
}

pub fn read_dynamic(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    Ok(from_dynamic(&read_dynamic(path)?))
}

/// Writes `img` as PNG atomically.
pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let mut bytes = Vec::new();
    to_dynamic(img)
        .write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    crate::fsutil::write_atomic(path, &bytes)
}
