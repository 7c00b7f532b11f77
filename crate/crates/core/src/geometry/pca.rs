use nalgebra::{Matrix3, SymmetricEigen};

use super::{Aabb, Point3, Vec3};
use crate::error::{Error, Result};

/// Principal axes of a point set, largest variance first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxes {
    pub centroid: Point3,
    /// Eigenvalues of the `1/N` covariance, descending.
    pub variances: [f64; 3],
    /// Unit eigenvectors matching `variances`; right-handed.
    pub axes: [Vec3; 3],
}

impl PrincipalAxes {
    pub fn major(&self) -> Vec3 {
        self.axes[0]
    }
}

/// PCA of `points`. The major axis is signed to have a non-negative dot
/// product with the coordinate axis along which the cloud extends furthest.
pub fn principal_axes(points: &[Point3]) -> Result<PrincipalAxes> {
    if points.is_empty() {
        return Err(Error::invalid("pca: empty point set"));
    }
    let n = points.len() as f64;
    let centroid = Point3::from(points.iter().map(|p| p.coords).sum::<Vec3>() / n);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let variances = order.map(|i| eig.eigenvalues[i].max(0.0));
    let mut axes = order.map(|i| eig.eigenvectors.column(i).into_owned().normalize());

    let extent = Aabb::from_points(points).map(|b| b.extent()).unwrap_or_default();
    let widest = (0..3)
        .max_by(|&a, &b| extent[a].total_cmp(&extent[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    for axis in axes.iter_mut().take(2) {
        // Fall back to the largest component when orthogonal to the widest axis.
        let reference = if axis[widest].abs() > 1e-12 {
            widest
        } else {
            axis.iamax()
        };
        if axis[reference] < 0.0 {
            *axis = -*axis;
        }
    }
    axes[2] = axes[0].cross(&axes[1]);

    Ok(PrincipalAxes {
        centroid,
        variances,
        axes,
    })
}
