//! Per-object 3D mask score fields rendered along density-weighted rays,
//! optimized against multi-view 2D masks, and exported as labeled clouds.

mod export;
mod grid;
mod optimize;
mod render;

pub use export::{export_instances, instance_color, PALETTE, UNLABELED_COLOR};
pub use grid::{DensityField, GridSpec, MaskField, Trilinear};
pub use optimize::{lift_masks, LiftingConfig, MaskView};
pub use render::{
    compute_ray_weights, projection_loss, projection_loss_gradient, ray_interval, render_mask,
    render_rays, RaySamples,
};

/// Per-object IoU between thresholded node labels and boolean ground truth,
/// counted over the nodes selected by `domain`.
pub fn occupancy_iou(
    field: &MaskField,
    truth: &[Vec<bool>],
    threshold: f64,
    domain: impl Fn(usize) -> bool,
) -> Vec<f64> {
    let labels = field.node_labels(threshold);
    truth
        .iter()
        .enumerate()
        .map(|(obj, occ)| {
            let (mut inter, mut union) = (0usize, 0usize);
            for (v, &t) in occ.iter().enumerate() {
                if !domain(v) {
                    continue;
                }
                let p = labels[v] == obj as i32;
                inter += usize::from(p && t);
                union += usize::from(p || t);
            }
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Point3, Ray};
    use rand::{Rng, SeedableRng};

    /// Analytic gradient vs central differences of loss(render(V)).
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let grid = GridSpec::new(
            [8, 8, 8],
            Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0)).unwrap(),
        )
        .unwrap();
        let density =
            DensityField::new(grid, (0..grid.len()).map(|_| rng.gen_range(0.0..2.0)).collect())
                .unwrap();
        let mut mask = MaskField::from_scores(
            grid,
            (0..2)
                .map(|_| (0..grid.len()).map(|_| rng.gen_range(-0.5..1.5)).collect())
                .collect(),
        )
        .unwrap();
        let rays: Vec<Ray> = (0..10)
            .map(|_| {
                let o = Point3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(2.5..3.5),
                );
                let target = Point3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                );
                Ray::new(o, target - o).unwrap()
            })
            .collect();
        let samples: Vec<RaySamples> = rays
            .iter()
            .map(|r| {
                let (t0, t1) = ray_interval(&grid, r).unwrap();
                compute_ray_weights(&density, r, t0, t1, 48).unwrap()
            })
            .collect();
        let m_ext: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..rays.len()).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let lambda = 0.7;
        let loss_at = |mask: &MaskField| {
            let mut rendered = vec![Vec::new(); 2];
            for (r, s) in rays.iter().zip(&samples) {
                for (o, v) in render_mask(mask, r, s).unwrap().into_iter().enumerate() {
                    rendered[o].push(v);
                }
            }
            projection_loss(&m_ext, &rendered, lambda).unwrap()
        };
        let grad = projection_loss_gradient(&mask, &rays, &samples, &m_ext, lambda).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        for obj in 0..2 {
            for v in 0..grid.len() {
                if grad[obj][v].abs() < 1e-6 {
                    continue;
                }
                let orig = mask.object(obj)[v];
                mask.scores_mut()[obj][v] = orig + h;
                let plus = loss_at(&mask);
                mask.scores_mut()[obj][v] = orig - h;
                let minus = loss_at(&mask);
                mask.scores_mut()[obj][v] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let rel = (fd - grad[obj][v]).abs() / grad[obj][v].abs();
                assert!(rel < 1e-5, "obj {obj} voxel {v}: fd {fd} vs {}", grad[obj][v]);
                checked += 1;
            }
        }
        assert!(checked > 50, "only {checked} voxels touched");
    }
}
