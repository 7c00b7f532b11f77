use log::warn;

use super::arap::{arap_parameterize, ARAP_MAX_ITERATIONS, ARAP_TOLERANCE};
use crate::error::{Error, Result};
use crate::geometry::TriMesh;

pub const DEFAULT_WIDTH_STRIPS: usize = 100;

/// Largest extent across the main axis of the flattened mesh, in mesh units.
pub fn leaf_width(mesh: &TriMesh, n: usize) -> Result<f64> {
    let p = arap_parameterize(mesh, ARAP_MAX_ITERATIONS, ARAP_TOLERANCE)?;
    width_from_uv(&p.uv, n)
}

/// Strip-wise width of a 2D point set: `n + 1` strips of half-width
/// `range / 2n` centered at even steps along the main axis; the widest
/// strip wins. Collinear input has width 0.
pub fn width_from_uv(uv: &[[f64; 2]], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("width needs at least one strip"));
    }
    if uv.is_empty() {
        return Err(Error::invalid("width of an empty parameterization"));
    }
    let m = uv.len() as f64;
    let c = uv.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / m, a[1] + p[1] / m]);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in uv {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let eig = nalgebra::SymmetricEigen::new(nalgebra::Matrix2::new(sxx, sxy, sxy, syy));
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let (l1, l2) = (eig.eigenvalues[major], eig.eigenvalues[minor]);
    if !(l1 > 0.0) || l2 <= 1e-24 * l1 {
        warn!("parameterization is collinear; width set to 0");
        return Ok(0.0);
    }
    let w = eig.eigenvectors.column(major);
    let s: Vec<f64> = uv.iter().map(|p| p[0] * w[0] + p[1] * w[1]).collect();
    let t: Vec<f64> = uv.iter().map(|p| -p[0] * w[1] + p[1] * w[0]).collect();
    let s_min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let s_max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = s_max - s_min;
    let half = range / (2 * n) as f64;

    let mut lo = vec![f64::INFINITY; n + 1];
    let mut hi = vec![f64::NEG_INFINITY; n + 1];
    for (&si, &ti) in s.iter().zip(&t) {
        // A point can sit on the shared edge of two strips; count it in both.
        let pos = (si - s_min) / range * n as f64;
        let first = (pos - 0.5).ceil().max(0.0) as usize;
        let last = ((pos + 0.5).floor() as usize).min(n);
        for k in first..=last {
            let sk = s_min + k as f64 / n as f64 * range;
            if (si - sk).abs() <= half {
                lo[k] = lo[k].min(ti);
                hi[k] = hi[k].max(ti);
            }
        }
    }
    Ok(lo.iter().zip(&hi).filter(|(l, _)| l.is_finite()).map(|(l, h)| h - l).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::make_ribbon_leaf;
    use nalgebra::{Rotation3, Translation3, Vector3};

    #[test]
    fn flat_and_rotated_ribbon() {
        let leaf = make_ribbon_leaf(10.0, 2.0, None, 0.1, 0).unwrap();
        let w0 = leaf_width(&leaf.mesh, DEFAULT_WIDTH_STRIPS).unwrap();
        assert!((w0 - 2.0).abs() / 2.0 < 0.02, "{w0}");
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(1.0, 2.0, 0.5)), 37f64.to_radians());
        let moved = leaf.mesh.map_vertices(|p| Translation3::new(3.0, -1.0, 2.0) * (rot * p));
        let w1 = leaf_width(&moved, DEFAULT_WIDTH_STRIPS).unwrap();
        assert!((w1 - 2.0).abs() / 2.0 < 0.02, "{w1}");
        assert!((w1 - w0).abs() / w0 < 0.01);
    }

    #[test]
    fn half_cylinder_girth() {
        let leaf = make_ribbon_leaf(10.0, 4.0, Some(4.0 / std::f64::consts::PI), 0.1, 0).unwrap();
        let w = leaf_width(&leaf.mesh, DEFAULT_WIDTH_STRIPS).unwrap();
        assert!((w - 4.0).abs() / 4.0 < 0.03, "{w}");
    }

    #[test]
    fn rectangle_points_directly() {
        let uv: Vec<[f64; 2]> = (0..=50).flat_map(|i| (0..=4).map(move |j| [i as f64 * 0.2, j as f64 * 0.5])).collect();
        assert!((width_from_uv(&uv, 100).unwrap() - 2.0).abs() < 1e-12);
        let line: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert_eq!(width_from_uv(&line, 100).unwrap(), 0.0);
        assert!(width_from_uv(&[], 100).is_err());
    }
}
