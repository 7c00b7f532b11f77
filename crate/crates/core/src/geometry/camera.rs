//! Pinhole cameras and per-pixel ray generation.
//!
//! Camera frame convention: the camera looks along `-z`, `+x` points right
//! and `+y` points up. Pixel `(u, v)` has column `u`, row `v` (row 0 at the
//! top) and its center sits at `(u + 0.5, v + 0.5)` in pixel coordinates.

use nalgebra::{Matrix3, Matrix4};

use super::{Point3, Ray, Vec3};
use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid("focal lengths must be positive and finite"));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Unnormalized camera-frame direction through the center of pixel `(u, v)`.
    pub fn pixel_direction(&self, u: u32, v: u32) -> Vec3 {
        Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            -(v as f64 + 0.5 - self.cy) / self.fy,
            -1.0,
        )
    }
}

/// Rigid world-from-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    world_from_camera: Matrix4<f64>,
}

impl CameraPose {
    /// Validates the upper-left block as a proper rotation and the bottom row
    /// as `(0, 0, 0, 1)`. Nothing is re-orthonormalized.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose matrix has non-finite entries"));
        }
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(Error::invalid("pose bottom row must be exactly (0, 0, 0, 1)"));
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let gram_err = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if gram_err > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "pose rotation not orthonormal with det +1 (|RᵀR - I| = {gram_err:.3e}, det = {det:.6})"
            )));
        }
        Ok(Self {
            world_from_camera: m,
        })
    }

    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 16 {
            return Err(Error::invalid(format!(
                "pose needs 16 values, got {}",
                values.len()
            )));
        }
        Self::from_matrix(Matrix4::from_row_slice(values))
    }

    pub fn identity() -> Self {
        Self {
            world_from_camera: Matrix4::identity(),
        }
    }

    /// Camera at `eye` looking at `target` with `up` roughly upward.
    pub fn look_at(eye: Point3, target: Point3, up: Vec3) -> Result<Self> {
        let back = eye - target;
        let right = up.cross(&back);
        if back.norm() == 0.0 || right.norm() < 1e-12 * back.norm() * up.norm() {
            return Err(Error::invalid("look_at: degenerate eye/target/up"));
        }
        let z = back.normalize();
        let x = right.normalize();
        let y = z.cross(&x);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 0).copy_from(&x);
        m.fixed_view_mut::<3, 1>(0, 1).copy_from(&y);
        m.fixed_view_mut::<3, 1>(0, 2).copy_from(&z);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye.coords);
        Self::from_matrix(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.world_from_camera
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.world_from_camera[(r, c)];
            }
        }
        out
    }

    pub fn origin(&self) -> Point3 {
        Point3::from(self.world_from_camera.fixed_view::<3, 1>(0, 3).into_owned())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_from_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Maps a world point into the camera frame.
    pub fn to_camera(&self, p: &Point3) -> Point3 {
        let r = self.rotation();
        Point3::from(r.transpose() * (p - self.origin()))
    }
}

/// One ray per pixel in row-major order, through each pixel center.
pub fn generate_camera_rays(pose: &CameraPose, intr: &CameraIntrinsics) -> Result<Vec<Ray>> {
    intr.validate()?;
    let rot = pose.rotation();
    let origin = pose.origin();
    let mut rays = Vec::with_capacity(intr.pixel_count());
    for v in 0..intr.height {
        for u in 0..intr.width {
            let d = rot * intr.pixel_direction(u, v);
            rays.push(Ray {
                origin,
                direction: d.normalize(),
            });
        }
    }
    Ok(rays)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_intr(w: u32, h: u32, f: f64, c: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(f, f, c, c, w, h).unwrap()
    }

    #[test]
    fn identity_single_pixel_looks_down_negative_z() {
        let rays = generate_camera_rays(&CameraPose::identity(), &unit_intr(1, 1, 1.0, 0.5)).unwrap();
        assert_eq!(rays.len(), 1);
        assert_eq!(rays[0].origin, Point3::origin());
        assert!((rays[0].direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn translated_pose_moves_origin_only() {
        let mut m = Matrix4::identity();
        m[(2, 3)] = 5.0;
        let pose = CameraPose::from_matrix(m).unwrap();
        let rays = generate_camera_rays(&pose, &unit_intr(1, 1, 1.0, 0.5)).unwrap();
        assert_eq!(rays[0].origin, Point3::new(0.0, 0.0, 5.0));
        assert!((rays[0].direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    /// Reprojects a point on each generated ray through an independent
    /// pinhole model and expects the originating pixel center back.
    #[test]
    fn rays_reproject_to_pixel_centers() {
        let intr = unit_intr(2, 2, 2.0, 1.0);
        let pose = CameraPose::look_at(
            Point3::new(1.0, 2.0, 3.0),
            Point3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let rays = generate_camera_rays(&pose, &intr).unwrap();
        assert_eq!(rays.len(), 4);
        for (i, ray) in rays.iter().enumerate() {
            let (u, v) = ((i % 2) as f64 + 0.5, (i / 2) as f64 + 0.5);
            let pc = pose.to_camera(&ray.at(3.7));
            let depth = -pc.z;
            assert!(depth > 0.0);
            let pu = intr.fx * pc.x / depth + intr.cx;
            let pv = intr.cy - intr.fy * pc.y / depth;
            assert!((pu - u).abs() < 1e-12 && (pv - v).abs() < 1e-12, "pixel {i}");
            assert!((ray.direction.norm() - 1.0).abs() < 1e-9);
        }
        // Symmetric about the optical axis.
        let axis = pose.rotation() * Vec3::new(0.0, 0.0, -1.0);
        let mean: Vec3 = rays.iter().map(|r| r.direction).sum::<Vec3>() / 4.0;
        assert!((mean.normalize() - axis).norm() < 1e-12);
        let cosines: Vec<f64> = rays.iter().map(|r| r.direction.dot(&axis)).collect();
        assert!(cosines.iter().all(|c| (c - cosines[0]).abs() < 1e-12));
    }

    #[test]
    fn pose_validation_rejects_bad_matrices() {
        let mut scaled = Matrix4::identity();
        scaled[(0, 0)] = 2.0;
        assert!(CameraPose::from_matrix(scaled).is_err());
        let mut mirror = Matrix4::identity();
        mirror[(0, 0)] = -1.0;
        assert!(CameraPose::from_matrix(mirror).is_err());
        let mut bottom = Matrix4::identity();
        bottom[(3, 0)] = 1e-3;
        assert!(CameraPose::from_matrix(bottom).is_err());
        assert!(CameraPose::from_matrix(Matrix4::zeros()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 0.5, 1, 1).is_err());
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.5, 0.5, 1, 1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.5, 0.5, 0, 1).is_err());
    }

    #[test]
    fn row_major_round_trip() {
        let pose = CameraPose::look_at(
            Point3::new(2.0, -1.0, 0.5),
            Point3::origin(),
            Vec3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let back = CameraPose::from_row_major(&pose.to_row_major()).unwrap();
        assert_eq!(pose, back);
    }
}
