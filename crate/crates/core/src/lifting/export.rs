use super::grid::{label_from_scores, MaskField};
use crate::error::{Error, Result};
use crate::geometry::{LabeledPointCloud, Rgb};

/// Fixed instance palette, cycled for ids beyond its length.
pub const PALETTE: [Rgb; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

pub const UNLABELED_COLOR: Rgb = [128, 128, 128];

pub fn instance_color(id: i32) -> Rgb {
    if id < 0 {
        UNLABELED_COLOR
    } else {
        PALETTE[id as usize % PALETTE.len()]
    }
}

/// Labels each point with the arg-max object of the interpolated scores when
/// that score reaches `threshold`; other points, including those outside the
/// field bounds, get `-1`. Colors switch to the instance palette and the
/// incoming colors move to `source_colors`.
pub fn export_instances(
    mask: &MaskField,
    cloud: &LabeledPointCloud,
    threshold: f64,
) -> Result<LabeledPointCloud> {
    if cloud.is_empty() {
        return Err(Error::invalid("export_instances: empty point cloud"));
    }
    if !threshold.is_finite() {
        return Err(Error::invalid("export threshold must be finite"));
    }
    let ids: Vec<i32> = cloud
        .points
        .iter()
        .map(|p| match mask.grid().trilinear(p) {
            Some(tri) => label_from_scores(mask.scores().iter().map(|s| tri.sample(s)), threshold),
            None => -1,
        })
        .collect();
    Ok(LabeledPointCloud {
        points: cloud.points.clone(),
        colors: Some(ids.iter().map(|&id| instance_color(id)).collect()),
        source_colors: cloud.colors.clone(),
        instance_ids: Some(ids),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Point3};
    use crate::lifting::grid::GridSpec;

    fn grid() -> GridSpec {
        GridSpec::new(
            [11, 11, 11],
            Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn below_threshold_is_unlabeled() {
        let g = grid();
        let mask = MaskField::from_scores(g, vec![vec![0.3; g.len()], vec![0.49; g.len()]]).unwrap();
        let cloud = LabeledPointCloud::from_points(vec![Point3::new(0.5, 0.5, 0.5); 4]);
        let out = export_instances(&mask, &cloud, 0.5).unwrap();
        assert!(out.instance_ids.unwrap().iter().all(|&id| id == -1));
    }

    #[test]
    fn indicator_box() {
        let g = grid();
        let scores = (0..g.len())
            .map(|i| {
                let p = g.node_position(i);
                let inside = (0..3).all(|a| (0.2..=0.6).contains(&p[a]));
                if inside { 1.0 } else { 0.0 }
            })
            .collect();
        let mask = MaskField::from_scores(g, vec![scores]).unwrap();
        let cloud = LabeledPointCloud::new(
            vec![
                Point3::new(0.4, 0.4, 0.4),
                Point3::new(0.3, 0.5, 0.25),
                Point3::new(0.9, 0.9, 0.9),
                Point3::new(0.05, 0.4, 0.4),
                Point3::new(2.0, 0.4, 0.4),
            ],
            Some(vec![[1, 2, 3]; 5]),
            None,
        )
        .unwrap();
        let out = export_instances(&mask, &cloud, 0.5).unwrap();
        assert_eq!(out.instance_ids.as_deref(), Some(&[0, 0, -1, -1, -1][..]));
        assert_eq!(out.source_colors, cloud.colors);
        assert_eq!(out.colors.as_ref().unwrap()[0], PALETTE[0]);
        assert_eq!(out.colors.as_ref().unwrap()[2], UNLABELED_COLOR);
    }

    #[test]
    fn empty_cloud_rejected() {
        let g = grid();
        let mask = MaskField::zeros(g, 1).unwrap();
        assert!(export_instances(&mask, &LabeledPointCloud::default(), 0.5).is_err());
    }
}
