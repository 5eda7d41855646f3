//! PNG and PGM serialization for maps and frames.
//!
//! Internal maps use unit-interval values; the 8-bit range exists only at
//! the file boundary. Two conventions cover the two kinds of artifacts:
//! unit-interval maps are written as `round(255 * v)`, while maps already in
//! the 0..255 range (ground-truth ranking maps) are written as `round(v)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::map::{FixationMap, Frame, GrayscaleMap};

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes a unit-interval map as 8-bit grayscale PNG (`round(255 * v)`).
pub fn write_map_png_unit(map: &GrayscaleMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        image::Luma([to_u8(255.0 * map.get(x as usize, y as usize))])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Writes a map whose values already live in 0..255 (`round(v)`).
pub fn write_map_png_raw(map: &GrayscaleMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        image::Luma([to_u8(map.get(x as usize, y as usize))])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Reads an 8-bit grayscale PNG into a unit-interval map (`v / 255`).
pub fn read_map_png_unit(path: &Path) -> Result<GrayscaleMap> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.into_luma8();
    let (w, h) = img.dimensions();
    let values = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
    GrayscaleMap::new(w as usize, h as usize, values)
}

/// Reads a fixation PNG; any nonzero pixel is a fixation.
pub fn read_fixation_png(path: &Path) -> Result<FixationMap> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.into_luma8();
    let (w, h) = img.dimensions();
    let values = img
        .as_raw()
        .iter()
        .map(|&v| if v > 0 { 1.0 } else { 0.0 })
        .collect();
    FixationMap::new(GrayscaleMap::new(w as usize, h as usize, values)?)
}

pub fn write_fixation_png(fix: &FixationMap, path: &Path) -> Result<()> {
    write_map_png_unit(fix.base(), path)
}

/// Writes an RGB frame as PNG.
pub fn write_frame_png(frame: &Frame, path: &Path) -> Result<()> {
    let (w, h) = (frame.width(), frame.height());
    let plane = w * h;
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb([
            to_u8(255.0 * frame.rgb()[i]),
            to_u8(255.0 * frame.rgb()[plane + i]),
            to_u8(255.0 * frame.rgb()[2 * plane + i]),
        ])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Encodes an RGB frame as PNG bytes (for HTTP payloads).
pub fn frame_png_bytes(frame: &Frame) -> Result<Vec<u8>> {
    let (w, h) = (frame.width(), frame.height());
    let plane = w * h;
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb([
            to_u8(255.0 * frame.rgb()[i]),
            to_u8(255.0 * frame.rgb()[plane + i]),
            to_u8(255.0 * frame.rgb()[2 * plane + i]),
        ])
    });
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| Error::image(Path::new("<memory>"), e))?;
    Ok(buf.into_inner())
}

/// Reads an RGB PNG into a `[0,1]` frame with the given clip-ordinal index.
pub fn read_frame_png(path: &Path, index: usize) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.into_rgb8();
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let plane = w * h;
    let mut rgb = vec![0.0; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        rgb[i] = f64::from(px.0[0]) / 255.0;
        rgb[plane + i] = f64::from(px.0[1]) / 255.0;
        rgb[2 * plane + i] = f64::from(px.0[2]) / 255.0;
    }
    Frame::new(w, h, rgb, index)
}

/// Writes a binary P5 portable graymap, for quick debugging with any viewer.
pub fn write_map_pgm(map: &GrayscaleMap, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(map.len() + 32);
    write!(out, "P5\n{} {}\n255\n", map.width(), map.height())
        .map_err(|e| Error::io(path, e))?;
    let max = map.max_value();
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    out.extend(map.values().iter().map(|&v| to_u8(v * scale)));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
