//! Shared geometric primitives: points, clouds, cameras, rays, meshes and
//! axis-aligned bounds.

mod camera;
mod knn;
mod pca;

pub use camera::{generate_camera_rays, CameraIntrinsics, CameraPose};
pub use knn::NnIndex;
pub use pca::{principal_axes, PrincipalAxes};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Rgb = [u8; 3];

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        let finite = min.iter().chain(max.iter()).all(|v| v.is_finite());
        if !finite || (0..3).any(|i| min[i] > max[i]) {
            return Err(Error::invalid(format!(
                "bounds min {min:?} must be finite and <= max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_points(points: &[Point3]) -> Option<Self> {
        let first = points.first()?;
        let (mut min, mut max) = (*first, *first);
        for p in points {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Slab intersection. Returns the parametric entry/exit interval clipped to
    /// `t >= 0`, or `None` when the ray misses the box.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            let o = ray.origin[i];
            let d = ray.direction[i];
            if d == 0.0 {
                if o < self.min[i] || o > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((self.min[i] - o) * inv, (self.max[i] - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Half-line with a unit-length direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Point3, direction: Vec3) -> Result<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) || !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("ray needs a finite origin and non-zero direction"));
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    #[inline]
    pub fn at(&self, t: f64) -> Point3 {
        self.origin + self.direction * t
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::invalid(format!("face {fi} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {fi} repeats a vertex: {f:?}")));
            }
        }
        if vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh vertex is not finite"));
        }
        Ok(Self { vertices, faces })
    }

    pub fn face_points(&self, f: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Returns a copy with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Point cloud with optional per-point color and instance label.
///
/// An instance id of `-1` marks unlabeled/background points. `source_colors`
/// keeps the original capture colors when `colors` has been replaced by an
/// instance palette.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Point3>,
    pub colors: Option<Vec<Rgb>>,
    pub instance_ids: Option<Vec<i32>>,
    pub source_colors: Option<Vec<Rgb>>,
}

impl LabeledPointCloud {
    pub fn new(
        points: Vec<Point3>,
        colors: Option<Vec<Rgb>>,
        instance_ids: Option<Vec<i32>>,
    ) -> Result<Self> {
        let cloud = Self {
            points,
            colors,
            instance_ids,
            source_colors: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        Self {
            points,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(Error::ShapeMismatch(format!("{} colors for {n} points", c.len())));
            }
        }
        if let Some(c) = &self.source_colors {
            if c.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} source colors for {n} points",
                    c.len()
                )));
            }
        }
        if let Some(ids) = &self.instance_ids {
            if ids.len() != n {
                return Err(Error::ShapeMismatch(format!("{} ids for {n} points", ids.len())));
            }
            if let Some(bad) = ids.iter().find(|&&id| id < -1) {
                return Err(Error::invalid(format!("instance id {bad} < -1")));
            }
        }
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Label of point `i`, `-1` when the cloud carries no labels.
    pub fn id(&self, i: usize) -> i32 {
        self.instance_ids.as_ref().map_or(-1, |ids| ids[i])
    }

    /// Sorted distinct labels other than `-1`.
    pub fn instance_labels(&self) -> Vec<i32> {
        let mut ids: Vec<i32> = self
            .instance_ids
            .iter()
            .flatten()
            .copied()
            .filter(|&id| id >= 0)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Sub-cloud of the points carrying label `id`.
    pub fn select_instance(&self, id: i32) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.id(i) == id).collect();
        self.subset(&keep)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick = |v: &Vec<Rgb>| indices.iter().map(|&i| v[i]).collect();
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self.colors.as_ref().map(pick),
            instance_ids: self
                .instance_ids
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i]).collect()),
            source_colors: self.source_colors.as_ref().map(pick),
        }
    }
}
