//! Regular voxel grids: shared layout, the density field and the per-object
//! mask score field.
//!
//! Grid nodes sit on the bounds: node `(i, j, k)` lies at
//! `min + (i, j, k) * spacing` with `spacing = extent / (dims - 1)`.
//! Storage is x-fastest. Values between nodes are trilinear; outside the
//! bounds every field reads as zero.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3, Vec3};

/// The eight corner nodes of a trilinear lookup with their weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trilinear {
    pub corners: [(usize, f64); 8],
}

impl Trilinear {
    #[inline]
    pub fn sample(&self, values: &[f64]) -> f64 {
        self.corners.iter().map(|&(i, w)| w * values[i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dims: [usize; 3],
    bounds: Aabb,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], bounds: Aabb) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("grid dims must be positive, got {dims:?}")));
        }
        for axis in 0..3 {
            if dims[axis] > 1 && bounds.extent()[axis] <= 0.0 {
                return Err(Error::invalid("grid bounds are flat along a sampled axis"));
            }
        }
        Ok(Self { dims, bounds })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::from_fn(|a, _| {
            if self.dims[a] > 1 {
                e[a] / (self.dims[a] - 1) as f64
            } else {
                0.0
            }
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn node_position(&self, index: usize) -> Point3 {
        let c = self.coords(index);
        let s = self.spacing();
        Point3::new(
            self.bounds.min.x + c[0] as f64 * s.x,
            self.bounds.min.y + c[1] as f64 * s.y,
            self.bounds.min.z + c[2] as f64 * s.z,
        )
    }

    /// Trilinear stencil at `p`, or `None` outside the bounds.
    #[inline]
    pub fn trilinear(&self, p: &Point3) -> Option<Trilinear> {
        if !self.bounds.contains(p) {
            return None;
        }
        let mut base = [0usize; 3];
        let mut step = [0usize; 3];
        let mut frac = [0.0f64; 3];
        let e = self.bounds.extent();
        for a in 0..3 {
            let n = self.dims[a];
            if n == 1 {
                continue;
            }
            let f = (p[a] - self.bounds.min[a]) / e[a] * (n - 1) as f64;
            let i0 = (f.floor() as usize).min(n - 2);
            base[a] = i0;
            step[a] = 1;
            frac[a] = (f - i0 as f64).clamp(0.0, 1.0);
        }
        let sx = step[0];
        let sy = step[1] * self.dims[0];
        let sz = step[2] * self.dims[0] * self.dims[1];
        let i000 = self.index(base[0], base[1], base[2]);
        let [fx, fy, fz] = frac;
        let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
        Some(Trilinear {
            corners: [
                (i000, gx * gy * gz),
                (i000 + sx, fx * gy * gz),
                (i000 + sy, gx * fy * gz),
                (i000 + sx + sy, fx * fy * gz),
                (i000 + sz, gx * gy * fz),
                (i000 + sx + sz, fx * gy * fz),
                (i000 + sy + sz, gx * fy * fz),
                (i000 + sx + sy + sz, fx * fy * fz),
            ],
        })
    }

    pub fn sample(&self, values: &[f64], p: &Point3) -> f64 {
        self.trilinear(p).map_or(0.0, |t| t.sample(values))
    }
}

/// Scalar, non-negative density voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: GridSpec,
    sigma: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: GridSpec, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} densities for a {:?} grid",
                sigma.len(),
                grid.dims()
            )));
        }
        if let Some(bad) = sigma.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(Error::invalid(format!("density {bad} is not finite and >= 0")));
        }
        Ok(Self { grid, sigma })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sample(&self, p: &Point3) -> f64 {
        self.grid.sample(&self.sigma, p)
    }
}

/// Per-object real-valued mask scores on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskField {
    grid: GridSpec,
    scores: Vec<Vec<f64>>,
}

impl MaskField {
    pub fn zeros(grid: GridSpec, n_objects: usize) -> Result<Self> {
        if n_objects == 0 {
            return Err(Error::invalid("mask field needs at least one object"));
        }
        Ok(Self {
            grid,
            scores: vec![vec![0.0; grid.len()]; n_objects],
        })
    }

    pub fn from_scores(grid: GridSpec, scores: Vec<Vec<f64>>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("mask field needs at least one object"));
        }
        if let Some(bad) = scores.iter().find(|s| s.len() != grid.len()) {
            return Err(Error::ShapeMismatch(format!(
                "object grid of {} values for a {:?} grid",
                bad.len(),
                grid.dims()
            )));
        }
        Ok(Self { grid, scores })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_objects(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn object(&self, i: usize) -> &[f64] {
        &self.scores[i]
    }

    pub(crate) fn scores_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.scores
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            grid: self.grid,
            scores: self
                .scores
                .iter()
                .map(|s| s.iter().map(|v| v * alpha).collect())
                .collect(),
        }
    }

    /// Per-object scores at `p` (zero outside the bounds).
    pub fn sample(&self, p: &Point3) -> Vec<f64> {
        match self.grid.trilinear(p) {
            Some(t) => self.scores.iter().map(|s| t.sample(s)).collect(),
            None => vec![0.0; self.scores.len()],
        }
    }

    /// Per-node instance label: the arg-max object when its score clamped to
    /// `[0, 1]` reaches `threshold`, otherwise `-1`. Ties go to the lower index.
    pub fn node_labels(&self, threshold: f64) -> Vec<i32> {
        (0..self.grid.len())
            .map(|v| label_from_scores(self.scores.iter().map(|s| s[v]), threshold))
            .collect()
    }
}

pub(crate) fn label_from_scores(scores: impl Iterator<Item = f64>, threshold: f64) -> i32 {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    match best {
        Some((i, s)) if s.clamp(0.0, 1.0) >= threshold => i as i32,
        _ => -1,
    }
}

pub(crate) fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "grids differ: {:?} {:?} vs {:?} {:?}",
            a.dims(),
            a.bounds(),
            b.dims(),
            b.bounds()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(
            [n, n, n],
            Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn trilinear_reproduces_linear_functions() {
        let g = unit_grid(5);
        let values: Vec<f64> = (0..g.len())
            .map(|i| {
                let p = g.node_position(i);
                1.0 + 2.0 * p.x - 3.0 * p.y + 0.5 * p.z
            })
            .collect();
        for p in [
            Point3::new(0.13, 0.77, 0.5),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(0.0, 0.25, 0.999),
        ] {
            let expected = 1.0 + 2.0 * p.x - 3.0 * p.y + 0.5 * p.z;
            assert!((g.sample(&values, &p) - expected).abs() < 1e-12);
        }
        assert_eq!(g.sample(&values, &Point3::new(1.01, 0.5, 0.5)), 0.0);
    }

    #[test]
    fn weights_sum_to_one() {
        let g = unit_grid(4);
        let t = g.trilinear(&Point3::new(0.3, 0.6, 0.9)).unwrap();
        let s: f64 = t.corners.iter().map(|c| c.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_must_be_non_negative() {
        let g = unit_grid(2);
        assert!(DensityField::new(g, vec![-1.0; 8]).is_err());
        assert!(DensityField::new(g, vec![1.0; 7]).is_err());
        assert!(DensityField::new(g, vec![f64::NAN; 8]).is_err());
    }

    #[test]
    fn labels_tie_to_lowest_object() {
        assert_eq!(label_from_scores([0.7, 0.7].into_iter(), 0.5), 0);
        assert_eq!(label_from_scores([0.2, 0.3].into_iter(), 0.5), -1);
        assert_eq!(label_from_scores([0.2, 3.0].into_iter(), 0.5), 1);
    }

    #[test]
    fn index_coords_round_trip() {
        let g = GridSpec::new(
            [3, 4, 5],
            Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap(),
        )
        .unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }
}
