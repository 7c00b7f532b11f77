//! Point-cloud preprocessing and surface reconstruction: voxel downsampling,
//! statistical outlier removal, alpha shapes, hole filling and Loop
//! subdivision.

mod alpha;
pub mod delaunay;
mod topology;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LabeledPointCloud, NnIndex, Point3, Rgb, Vec3};

pub use alpha::alpha_shape_mesh;
pub use topology::{
    boundary_loops, euler_characteristic, fill_holes, fill_holes_with_report, icosahedron, icosphere, loop_subdivide,
    EdgeMap, FillReport, MAX_FILL_LOOP,
};

/// Fraction of a voxel below a face that still counts as the next voxel.
const VOXEL_FACE_SLACK: f64 = 1e-9;

/// Alpha as a multiple of the voxel size when none is configured.
pub const DEFAULT_ALPHA_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshingConfig {
    pub voxel_size: f64,
    pub outlier_k: usize,
    pub outlier_sigma: f64,
    /// `None` means `DEFAULT_ALPHA_FACTOR * voxel_size`.
    pub alpha: Option<f64>,
    pub loop_iterations: usize,
}

impl Default for MeshingConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.01,
            outlier_k: 20,
            outlier_sigma: 2.0,
            alpha: None,
            loop_iterations: 2,
        }
    }
}

impl MeshingConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA_FACTOR * self.voxel_size)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.voxel_size) {
            return Err(Error::invalid(format!("voxel_size must be positive, got {}", self.voxel_size)));
        }
        if self.outlier_k == 0 {
            return Err(Error::invalid("outlier_k must be positive"));
        }
        if !positive(self.outlier_sigma) {
            return Err(Error::invalid(format!("outlier_sigma must be positive, got {}", self.outlier_sigma)));
        }
        if !positive(self.alpha()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha())));
        }
        Ok(())
    }
}

/// Voxel downsampling followed by statistical outlier removal, with voxels
/// anchored at the cloud's minimum corner.
pub fn preprocess_cloud(cloud: &LabeledPointCloud, cfg: &MeshingConfig) -> Result<LabeledPointCloud> {
    let anchor = min_corner(cloud)?;
    preprocess_cloud_at(cloud, cfg, anchor)
}

/// [`preprocess_cloud`] with an explicit voxel anchor.
pub fn preprocess_cloud_at(cloud: &LabeledPointCloud, cfg: &MeshingConfig, anchor: Point3) -> Result<LabeledPointCloud> {
    cfg.validate()?;
    let down = voxel_downsample_at(cloud, cfg.voxel_size, anchor)?;
    remove_statistical_outliers(&down, cfg.outlier_k, cfg.outlier_sigma)
}

fn min_corner(cloud: &LabeledPointCloud) -> Result<Point3> {
    if cloud.is_empty() {
        return Err(Error::invalid("point cloud is empty"));
    }
    cloud.validate()?;
    Ok(cloud.points.iter().fold(cloud.points[0], |m, p| m.inf(p)))
}

pub fn voxel_downsample(cloud: &LabeledPointCloud, voxel_size: f64) -> Result<LabeledPointCloud> {
    let anchor = min_corner(cloud)?;
    voxel_downsample_at(cloud, voxel_size, anchor)
}

/// One point per occupied voxel: the centroid of its members, their
/// majority instance id (ties to the smaller id) and their mean colors.
/// Output is ordered by voxel key.
pub fn voxel_downsample_at(cloud: &LabeledPointCloud, voxel_size: f64, anchor: Point3) -> Result<LabeledPointCloud> {
    if cloud.is_empty() {
        return Err(Error::invalid("point cloud is empty"));
    }
    cloud.validate()?;
    if !(voxel_size.is_finite() && voxel_size > 0.0) {
        return Err(Error::invalid(format!("voxel size must be positive, got {voxel_size}")));
    }
    // Points within rounding of a voxel face belong to the upper voxel, so
    // lattices at the voxel pitch keep one point per voxel.
    let key = |p: &Point3| {
        let q = (p - anchor) / voxel_size;
        let k = q.map(|c| (c + VOXEL_FACE_SLACK).floor() as i64);
        [k.x, k.y, k.z]
    };
    let mut keyed: Vec<([i64; 3], usize)> = cloud.points.par_iter().enumerate().map(|(i, p)| (key(p), i)).collect();
    keyed.par_sort_unstable();

    let groups: Vec<&[([i64; 3], usize)]> = keyed.chunk_by(|a, b| a.0 == b.0).collect();
    let mean_color = |colors: &Vec<Rgb>, members: &[([i64; 3], usize)]| -> Rgb {
        let mut sum = [0u64; 3];
        for &(_, i) in members {
            for c in 0..3 {
                sum[c] += colors[i][c] as u64;
            }
        }
        let n = members.len() as u64;
        sum.map(|s| ((s + n / 2) / n) as u8)
    };

    let points = groups
        .par_iter()
        .map(|g| Point3::from(g.iter().map(|&(_, i)| cloud.points[i].coords).sum::<Vec3>() / g.len() as f64))
        .collect();
    let colors = cloud.colors.as_ref().map(|c| groups.iter().map(|g| mean_color(c, g)).collect());
    let source_colors = cloud.source_colors.as_ref().map(|c| groups.iter().map(|g| mean_color(c, g)).collect());
    let instance_ids = cloud.instance_ids.as_ref().map(|ids| {
        groups
            .iter()
            .map(|g| {
                let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
                for &(_, i) in g.iter() {
                    *votes.entry(ids[i]).or_default() += 1;
                }
                // max_by_key keeps the last maximum; iterate descending so ties go to the smaller id.
                votes.iter().rev().max_by_key(|(_, &n)| n).map(|(&id, _)| id).unwrap_or(-1)
            })
            .collect()
    });
    Ok(LabeledPointCloud {
        points,
        colors,
        instance_ids,
        source_colors,
    })
}

/// Drops points whose mean distance to their `k` nearest neighbours exceeds
/// `mean + sigma * std` of that statistic. Clouds with fewer than two points
/// are returned unchanged; `k` is capped at `len - 1`.
pub fn remove_statistical_outliers(cloud: &LabeledPointCloud, k: usize, sigma: f64) -> Result<LabeledPointCloud> {
    if cloud.is_empty() {
        return Err(Error::invalid("point cloud is empty"));
    }
    if k == 0 {
        return Err(Error::invalid("outlier k must be positive"));
    }
    let n = cloud.len();
    if n < 2 {
        return Ok(cloud.clone());
    }
    let k = k.min(n - 1);
    let index = NnIndex::new(&cloud.points);
    let mean_dist: Vec<f64> = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = index.knn_with_distances(p, k + 1)?;
            // The query point itself is among the results unless a duplicate
            // outranked it; either way skip exactly one zero-distance self hit.
            let mut skipped = false;
            let mut sum = 0.0;
            for (j, d) in nn {
                if !skipped && (j == i || d == 0.0) {
                    skipped = true;
                    continue;
                }
                sum += d;
            }
            Ok(sum / k as f64)
        })
        .collect::<Result<_>>()?;
    let mu = mean_dist.iter().sum::<f64>() / n as f64;
    let std = (mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
    let limit = mu + sigma * std;
    let keep: Vec<usize> = (0..n).filter(|&i| mean_dist[i] <= limit).collect();
    Ok(cloud.subset(&keep))
}
