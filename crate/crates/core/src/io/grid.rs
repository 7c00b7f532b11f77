//! Binary density grids (`DGRD`) and mask-field checkpoints (`MFLD`).
//!
//! Layout, little-endian: magic, [object count u32 for `MFLD`], dims as three
//! u32, bounds min xyz and max xyz as f32, then f32 values x-fastest, one grid
//! per object.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3};
use crate::lifting::{DensityField, GridSpec, MaskField};

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let out = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::format(self.format, "file truncated"))?;
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f64::from(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"))))
    }

    fn grid(&mut self) -> Result<GridSpec> {
        let dims = [self.u32()? as usize, self.u32()? as usize, self.u32()? as usize];
        let mut b = [0.0; 6];
        for v in &mut b {
            *v = self.f32()?;
        }
        let bounds = Aabb::new(Point3::new(b[0], b[1], b[2]), Point3::new(b[3], b[4], b[5]))?;
        GridSpec::new(dims, bounds)
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.format, "grid too large"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::format(
                self.format,
                format!("{} trailing bytes", self.bytes.len() - self.at),
            ));
        }
        Ok(())
    }
}

fn open<'a>(bytes: &'a [u8], magic: &'static str) -> Result<Reader<'a>> {
    let mut r = Reader {
        bytes,
        at: 0,
        format: magic,
    };
    if r.take(4)? != magic.as_bytes() {
        return Err(Error::format(magic, "bad magic"));
    }
    Ok(r)
}

fn push_grid(out: &mut Vec<u8>, grid: &GridSpec) {
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let b = grid.bounds();
    for v in b.min.iter().chain(b.max.iter()) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn push_values(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

pub fn parse_density(bytes: &[u8]) -> Result<DensityField> {
    let mut r = open(bytes, "DGRD")?;
    let grid = r.grid()?;
    let sigma = r.values(grid.len())?;
    r.finish()?;
    DensityField::new(grid, sigma)
}

pub fn encode_density(field: &DensityField) -> Vec<u8> {
    let mut out = b"DGRD".to_vec();
    push_grid(&mut out, field.grid());
    push_values(&mut out, field.sigma());
    out
}

pub fn parse_mask_field(bytes: &[u8]) -> Result<MaskField> {
    let mut r = open(bytes, "MFLD")?;
    let n = r.u32()? as usize;
    let grid = r.grid()?;
    let scores = (0..n).map(|_| r.values(grid.len())).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    MaskField::from_scores(grid, scores)
}

pub fn encode_mask_field(field: &MaskField) -> Vec<u8> {
    let mut out = b"MFLD".to_vec();
    out.extend_from_slice(&(field.n_objects() as u32).to_le_bytes());
    push_grid(&mut out, field.grid());
    for s in field.scores() {
        push_values(&mut out, s);
    }
    out
}

pub fn read_density(path: impl AsRef<Path>) -> Result<DensityField> {
    let path = path.as_ref();
    parse_density(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_density(path: impl AsRef<Path>, field: &DensityField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_density(field)).map_err(|e| Error::io(path, e))
}

pub fn read_mask_field(path: impl AsRef<Path>) -> Result<MaskField> {
    let path = path.as_ref();
    parse_mask_field(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_mask_field(path: impl AsRef<Path>, field: &MaskField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_mask_field(field)).map_err(|e| Error::io(path, e))
}
