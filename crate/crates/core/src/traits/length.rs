use std::cmp::Ordering;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{principal_axes, LabeledPointCloud, NnIndex, Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeafLengthConfig {
    /// Neighbours considered per step.
    pub k: usize,
    /// Largest accepted angle between a step and the principal axis, radians.
    pub theta_max: f64,
    /// Stopping distance to the far endpoint; `None` means twice the mean
    /// nearest-neighbour spacing.
    pub epsilon: Option<f64>,
    /// Maximum number of base points.
    pub m_max: usize,
}

impl Default for LeafLengthConfig {
    fn default() -> Self {
        Self {
            k: 8,
            theta_max: std::f64::consts::FRAC_PI_2,
            epsilon: None,
            m_max: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MidribTrace {
    /// Decimated walk; consecutive points are distinct and the first is `start`.
    pub base_points: Vec<Point3>,
    pub principal_axis: Vec3,
    pub start: Point3,
    pub end: Point3,
}

fn lex(a: &Point3, b: &Point3) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// Extreme point along `axis` (`sign` = -1 for the minimum). Projections
/// within rounding of the extreme tie; ties go to the point closest to the
/// axis line through `centroid`, then to the lexicographically smallest.
fn endpoint(points: &[Point3], axis: &Vec3, centroid: &Point3, sign: f64, extent: f64) -> usize {
    let proj = |p: &Point3| sign * (p - centroid).dot(axis);
    let best = points.iter().map(proj).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * extent;
    let off_axis = |p: &Point3| {
        let d = p - centroid;
        (d - axis * d.dot(axis)).norm_squared()
    };
    (0..points.len())
        .filter(|&i| proj(&points[i]) >= best - tol)
        .min_by(|&a, &b| {
            off_axis(&points[a])
                .total_cmp(&off_axis(&points[b]))
                .then(lex(&points[a], &points[b]))
        })
        .unwrap_or(0)
}

/// Unvisited points among the `k` nearest to `query`, widened to include
/// every point tied with the k-th distance, sorted by distance and then
/// coordinates.
fn unvisited_neighbours(index: &NnIndex, query: &Point3, k: usize, visited: &[bool]) -> Result<Vec<(usize, f64)>> {
    let n = index.len();
    let mut want = (2 * k).min(n);
    loop {
        let found: Vec<(usize, f64)> = index
            .knn_with_distances(query, want)?
            .into_iter()
            .filter(|&(i, _)| !visited[i])
            .collect();
        let complete = want == n || (found.len() > k && found[k].1 > found[k - 1].1);
        if complete {
            let mut out: Vec<(usize, f64)> = match found.get(k - 1) {
                Some(&(_, dk)) => found.into_iter().filter(|&(_, d)| d <= dk).collect(),
                None => found,
            };
            let pts = index.points();
            out.sort_by(|a, b| a.1.total_cmp(&b.1).then(lex(&pts[a.0], &pts[b.0])));
            return Ok(out);
        }
        want = (want * 2).min(n);
    }
}

/// Leaf length as the summed length of a greedy walk from one end of the
/// principal axis to the other.
pub fn leaf_length(cloud: &LabeledPointCloud, cfg: &LeafLengthConfig) -> Result<(f64, MidribTrace)> {
    cloud.validate()?;
    let points = &cloud.points;
    let n = points.len();
    if cfg.k == 0 {
        return Err(Error::invalid("leaf length: k must be positive"));
    }
    if n < cfg.k + 1 {
        return Err(Error::invalid(format!("leaf length needs at least {} points, got {n}", cfg.k + 1)));
    }
    if !(cfg.theta_max > 0.0) || cfg.m_max < 2 {
        return Err(Error::invalid("leaf length: theta_max must be positive and m_max at least 2"));
    }
    let pca = principal_axes(points)?;
    if !(pca.variances[0] > 0.0) {
        return Err(Error::Degenerate("zero-variance cloud has no principal axis".into()));
    }
    let axis = pca.major();
    let extent = pca.variances[0].sqrt();
    let s = endpoint(points, &axis, &pca.centroid, -1.0, extent);
    let t = endpoint(points, &axis, &pca.centroid, 1.0, extent);
    let index = NnIndex::new(points);

    let epsilon = match cfg.epsilon {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::invalid(format!("epsilon must be positive, got {e}"))),
        None => {
            let total: f64 = points
                .iter()
                .map(|p| index.knn_with_distances(p, 2).map(|nn| nn[1].1))
                .sum::<Result<f64>>()?;
            2.0 * total / n as f64
        }
    };

    let mut visited = vec![false; n];
    visited[s] = true;
    let mut walk = vec![s];
    let mut reached = (points[s] - points[t]).norm() <= epsilon;
    while !reached && walk.len() < cfg.m_max {
        let b = points[*walk.last().unwrap_or(&s)];
        let cands = unvisited_neighbours(&index, &b, cfg.k, &visited)?;
        let angle = |i: usize| {
            let d = points[i] - b;
            (d.dot(&axis) / d.norm()).clamp(-1.0, 1.0).acos()
        };
        let next = cands
            .iter()
            .map(|&(i, _)| i)
            .find(|&i| angle(i) < cfg.theta_max)
            .or_else(|| cands.iter().map(|&(i, _)| i).min_by(|&a, &b| angle(a).total_cmp(&angle(b))));
        let Some(q) = next else { break };
        visited[q] = true;
        walk.push(q);
        reached = (points[q] - points[t]).norm() <= epsilon;
    }
    if reached && *walk.last().unwrap_or(&s) != t && points[*walk.last().unwrap_or(&s)] != points[t] {
        walk.push(t);
    }
    if !reached {
        warn!("midrib walk stopped {} short of the far endpoint", (points[*walk.last().unwrap_or(&s)] - points[t]).norm());
    }

    // Keep every second base point, pinning both ends.
    let last = walk.len() - 1;
    let base_points: Vec<Point3> = walk
        .iter()
        .enumerate()
        .filter(|&(m, _)| m % 2 == 0 || m == last)
        .map(|(_, &i)| points[i])
        .collect();
    let length = base_points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    Ok((
        length,
        MidribTrace {
            base_points,
            principal_axis: axis,
            start: points[s],
            end: points[t],
        },
    ))
}
