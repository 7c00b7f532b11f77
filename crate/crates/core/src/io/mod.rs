//! File formats consumed and produced by the pipeline.

mod grid;
mod images;
mod ply;
mod poses;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use grid::{
    encode_density, encode_mask_field, parse_density, parse_mask_field, read_density,
    read_mask_field, write_density, write_mask_field,
};
pub use images::{
    mask_file_name, parse_mask_file_name, read_gray_png, scan_mask_dir, write_gray_png,
    write_mask_png,
};
pub use ply::{
    encode_mesh, encode_point_cloud, parse_mesh, parse_point_cloud, read_mesh, read_point_cloud,
    write_mesh, write_point_cloud,
};
pub use poses::{read_poses, write_poses, PoseDocument, PoseFrame};

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("json", format!("{}: {e}", path.display())))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
