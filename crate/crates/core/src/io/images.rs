//! PNG frames and per-object mask files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::frames::BinaryMask;
use crate::raster::GrayImage;

/// `frame_{index:05}_obj_{k:02}.png`
pub fn mask_file_name(frame: usize, object: usize) -> String {
    format!("frame_{frame:05}_obj_{object:02}.png")
}

/// Inverse of [`mask_file_name`].
pub fn parse_mask_file_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    let (frame, object) = rest.split_once("_obj_")?;
    let digits = |s: &str, n: usize| s.len() >= n && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(frame, 5) || !digits(object, 2) {
        return None;
    }
    Some((frame.parse().ok()?, object.parse().ok()?))
}

/// Mask files in `dir` grouped as `frame -> object -> path`.
pub fn scan_mask_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<usize, BTreeMap<usize, PathBuf>>> {
    let dir = dir.as_ref();
    let mut out: BTreeMap<usize, BTreeMap<usize, PathBuf>> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some((frame, obj)) = name.to_str().and_then(parse_mask_file_name) {
            out.entry(frame).or_default().insert(obj, entry.path());
        }
    }
    Ok(out)
}

fn to_gray(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = if img.color().has_color() {
        img.to_rgb16()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                (0.299 * r + 0.587 * g + 0.114 * b) / 65535.0
            })
            .collect()
    } else {
        img.to_luma16().pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect()
    };
    GrayImage::new(w, h, pixels)
}

/// Reads a PNG as gray values in [0, 1]; color images go through the luma
/// weights 0.299, 0.587, 0.114.
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    to_gray(img)
}

/// Writes an 8-bit gray PNG, rounding values in [0, 1] to bytes.
pub fn write_gray_png(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_bytes())
        .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes a binary mask as 0/255.
pub fn write_mask_png(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    write_gray_png(path, &mask.to_image())
}
