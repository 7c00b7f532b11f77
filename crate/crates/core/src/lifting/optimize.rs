//! Multi-object mask inverse rendering: per-view, per-chunk gradient descent
//! of the projection loss over the mask score field.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{DensityField, MaskField};
use super::render::{loss_slope, Footprint};
use crate::error::{Error, Result};
use crate::geometry::{generate_camera_rays, CameraIntrinsics, CameraPose};
use crate::raster::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftingConfig {
    pub learning_rate: f64,
    /// Weight of the penalty on rendered mass outside the supplied mask.
    pub lambda: f64,
    pub chunk_rays: usize,
    pub passes: usize,
    pub samples_per_ray: usize,
    pub export_threshold: f64,
    pub seed: u64,
}

impl Default for LiftingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            lambda: 1.0,
            chunk_rays: 1 << 14,
            passes: 3,
            samples_per_ray: 128,
            export_threshold: 0.5,
            seed: 0,
        }
    }
}

impl LiftingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if self.chunk_rays == 0 || self.passes == 0 {
            return Err(Error::invalid("chunk_rays and passes must be positive"));
        }
        if self.samples_per_ray < 2 {
            return Err(Error::invalid("samples_per_ray must be >= 2"));
        }
        if !(self.export_threshold > 0.0 && self.export_threshold < 1.0) {
            return Err(Error::invalid("export_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One calibrated view with a soft mask per object.
#[derive(Debug, Clone)]
pub struct MaskView {
    pub pose: CameraPose,
    pub masks: Vec<GrayImage>,
}

/// Optimizes a zero-initialized [`MaskField`] against the supplied masks.
///
/// Rays of each view are processed in chunks of `cfg.chunk_rays`. Chunk
/// footprints are evaluated in parallel; their gradient contributions are
/// then applied in ray order, so the result does not depend on the chunk
/// size or on the thread count.
pub fn lift_masks(
    density: &DensityField,
    intrinsics: &CameraIntrinsics,
    views: &[MaskView],
    cfg: &LiftingConfig,
) -> Result<MaskField> {
    cfg.validate()?;
    intrinsics.validate()?;
    let n_objects = validate_views(intrinsics, views)?;
    let mut field = MaskField::zeros(*density.grid(), n_objects)?;

    for pass in 0..cfg.passes {
        let mut pass_loss = 0.0;
        for (v, view) in views.iter().enumerate() {
            let rays = generate_camera_rays(&view.pose, intrinsics)?;
            let mut view_loss = 0.0;
            for (c, chunk) in rays.chunks(cfg.chunk_rays).enumerate() {
                let offset = c * cfg.chunk_rays;
                let footprints = chunk
                    .par_iter()
                    .map(|ray| Footprint::through_field(density, ray, cfg.samples_per_ray))
                    .collect::<Result<Vec<_>>>()?;
                view_loss += chunk_loss(&field, &footprints, view, offset, cfg.lambda);
                apply_step(&mut field, &footprints, view, offset, cfg);
            }
            debug!("pass {pass} view {v}: loss {view_loss:.6}");
            pass_loss += view_loss;
        }
        info!("lift pass {}/{}: loss {pass_loss:.6}", pass + 1, cfg.passes);
    }
    Ok(field)
}

fn validate_views(intr: &CameraIntrinsics, views: &[MaskView]) -> Result<usize> {
    let first = views
        .first()
        .ok_or_else(|| Error::invalid("lift_masks needs at least one view"))?;
    let n_objects = first.masks.len();
    if n_objects == 0 {
        return Err(Error::invalid("lift_masks needs at least one object mask"));
    }
    for (v, view) in views.iter().enumerate() {
        if view.masks.len() != n_objects {
            return Err(Error::ShapeMismatch(format!(
                "view {v} has {} masks, expected {n_objects}",
                view.masks.len()
            )));
        }
        for (k, m) in view.masks.iter().enumerate() {
            if m.width() != intr.width as usize || m.height() != intr.height as usize {
                return Err(Error::ShapeMismatch(format!(
                    "view {v} object {k}: mask {}x{} vs camera {}x{}",
                    m.width(),
                    m.height(),
                    intr.width,
                    intr.height
                )));
            }
            if let Some(bad) = m.pixels().iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::invalid(format!(
                    "view {v} object {k}: mask value {bad} outside [0, 1]"
                )));
            }
        }
    }
    Ok(n_objects)
}

fn chunk_loss(
    field: &MaskField,
    footprints: &[Footprint],
    view: &MaskView,
    offset: usize,
    lambda: f64,
) -> f64 {
    footprints
        .iter()
        .enumerate()
        .filter(|(_, fp)| !fp.taps.is_empty())
        .map(|(r, fp)| {
            fp.render(field)
                .iter()
                .zip(&view.masks)
                .map(|(m, ext)| loss_slope(ext.pixels()[offset + r], lambda) * m)
                .sum::<f64>()
        })
        .sum()
}

fn apply_step(
    field: &mut MaskField,
    footprints: &[Footprint],
    view: &MaskView,
    offset: usize,
    cfg: &LiftingConfig,
) {
    let scores = field.scores_mut();
    for (r, fp) in footprints.iter().enumerate() {
        if fp.taps.is_empty() {
            continue;
        }
        for (obj, grid) in scores.iter_mut().enumerate() {
            let slope = loss_slope(view.masks[obj].pixels()[offset + r], cfg.lambda);
            if slope == 0.0 {
                continue;
            }
            let step = cfg.learning_rate * slope;
            for (tri, w) in &fp.taps {
                for &(idx, c) in &tri.corners {
                    grid[idx] -= step * (w * c);
                }
            }
        }
    }
}
