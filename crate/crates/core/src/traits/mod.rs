//! Phenotypic traits of labeled point clouds: volume, surface area, leaf
//! length along the midrib, and leaf width from an ARAP flattening.

mod arap;
mod length;
mod sparse;
mod width;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LabeledPointCloud, TriMesh};
use crate::meshing::{alpha_shape_mesh, fill_holes, loop_subdivide, preprocess_cloud, voxel_downsample, MeshingConfig};

pub use arap::{arap_parameterize, Parameterization2D, ARAP_MAX_ITERATIONS, ARAP_TOLERANCE};
pub use length::{leaf_length, LeafLengthConfig, MidribTrace};
pub use width::{leaf_width, width_from_uv, DEFAULT_WIDTH_STRIPS};

/// Class written for instances missing from [`TraitConfig::classes`].
pub const DEFAULT_CLASS: &str = "organ";

/// Number of occupied voxels times the voxel volume, after downsampling at
/// `voxel_size`. Scene units cubed.
pub fn instance_volume(cloud: &LabeledPointCloud, voxel_size: f64) -> Result<f64> {
    let down = voxel_downsample(cloud, voxel_size)?;
    Ok(down.len() as f64 * voxel_size.powi(3))
}

pub fn surface_area(mesh: &TriMesh) -> f64 {
    (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.face_points(f);
            0.5 * (a - b).cross(&(a - c)).norm()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraitConfig {
    pub scale_cm_per_unit: f64,
    pub meshing: MeshingConfig,
    pub length: LeafLengthConfig,
    pub width_strips: usize,
    pub arap_max_iterations: usize,
    pub arap_tolerance: f64,
    /// Class name per instance id.
    pub classes: BTreeMap<i32, String>,
}

impl Default for TraitConfig {
    fn default() -> Self {
        Self {
            scale_cm_per_unit: 1.0,
            meshing: MeshingConfig::default(),
            length: LeafLengthConfig::default(),
            width_strips: DEFAULT_WIDTH_STRIPS,
            arap_max_iterations: ARAP_MAX_ITERATIONS,
            arap_tolerance: ARAP_TOLERANCE,
            classes: BTreeMap::new(),
        }
    }
}

impl TraitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_cm_per_unit.is_finite() && self.scale_cm_per_unit > 0.0) {
            return Err(Error::invalid(format!("scale_cm_per_unit must be positive, got {}", self.scale_cm_per_unit)));
        }
        if self.width_strips == 0 {
            return Err(Error::invalid("width_strips must be positive"));
        }
        self.meshing.validate()
    }
}

/// One CSV row. Traits that could not be computed for an instance are left
/// empty; the reason is logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitReport {
    pub instance_id: i32,
    pub class: String,
    pub volume_cm3: f64,
    pub area_cm2: Option<f64>,
    pub length_cm: Option<f64>,
    pub width_cm: Option<f64>,
    pub alpha: f64,
    pub loop_iterations: usize,
    pub k: usize,
    pub n: usize,
    pub scale_cm_per_unit: f64,
}

/// Raw measurements of one instance in scene units.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTraits {
    pub volume: f64,
    pub area: Result<f64, String>,
    pub length: Result<f64, String>,
    pub width: Result<f64, String>,
}

/// Measures one instance: volume on the raw points, area on the repaired and
/// subdivided alpha mesh, length on the preprocessed cloud, width on the
/// repaired mesh before subdivision.
pub fn measure_instance(cloud: &LabeledPointCloud, cfg: &TraitConfig) -> Result<InstanceTraits> {
    cfg.validate()?;
    let volume = instance_volume(cloud, cfg.meshing.voxel_size)?;
    let clean = preprocess_cloud(cloud, &cfg.meshing)?;
    let repaired = alpha_shape_mesh(&clean, cfg.meshing.alpha()).and_then(|m| {
        if m.faces.is_empty() {
            Err(Error::Degenerate(format!("alpha {} keeps no faces", cfg.meshing.alpha())))
        } else {
            fill_holes(&m)
        }
    });
    let area = repaired
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|m| loop_subdivide(m, cfg.meshing.loop_iterations).map(|s| surface_area(&s)).map_err(|e| e.to_string()));
    let length = leaf_length(&clean, &cfg.length).map(|(l, _)| l).map_err(|e| e.to_string());
    let width = repaired.as_ref().map_err(|e| e.to_string()).and_then(|m| {
        arap_parameterize(m, cfg.arap_max_iterations, cfg.arap_tolerance)
            .and_then(|p| width_from_uv(&p.uv, cfg.width_strips))
            .map_err(|e| e.to_string())
    });
    Ok(InstanceTraits {
        volume,
        area,
        length,
        width,
    })
}

/// Trait rows for every labeled instance, in ascending id order. Instances
/// are processed in parallel.
pub fn extract_traits(cloud: &LabeledPointCloud, cfg: &TraitConfig) -> Result<Vec<TraitReport>> {
    cfg.validate()?;
    let ids = cloud.instance_labels();
    if ids.is_empty() {
        return Err(Error::invalid("cloud has no labeled instances"));
    }
    let s = cfg.scale_cm_per_unit;
    ids.par_iter()
        .map(|&id| {
            let t = measure_instance(&cloud.select_instance(id), cfg)?;
            let keep = |name: &str, r: Result<f64, String>| match r {
                Ok(v) => Some(v),
                Err(e) => {
                    warn!("instance {id}: no {name}: {e}");
                    None
                }
            };
            Ok(TraitReport {
                instance_id: id,
                class: cfg.classes.get(&id).cloned().unwrap_or_else(|| DEFAULT_CLASS.to_string()),
                volume_cm3: t.volume * s.powi(3),
                area_cm2: keep("area", t.area).map(|a| a * s * s),
                length_cm: keep("length", t.length).map(|l| l * s),
                width_cm: keep("width", t.width).map(|w| w * s),
                alpha: cfg.meshing.alpha(),
                loop_iterations: cfg.meshing.loop_iterations,
                k: cfg.length.k,
                n: cfg.width_strips,
                scale_cm_per_unit: s,
            })
        })
        .collect()
}

pub fn write_trait_csv<W: Write>(out: W, rows: &[TraitReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_trait_csv_file(path: &Path, rows: &[TraitReport]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trait_csv(std::io::BufWriter::new(file), rows)
}

pub fn read_trait_csv_file(path: &Path) -> Result<Vec<TraitReport>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
