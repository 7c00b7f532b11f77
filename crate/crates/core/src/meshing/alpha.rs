use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{principal_axes, LabeledPointCloud, Point3, TriMesh};

use super::delaunay::{delaunay_2d, delaunay_3d, tetrahedron_circumradius, triangle_circumradius};

/// Relative thickness below which a cloud is treated as planar.
const PLANAR_TOLERANCE: f64 = 1e-9;

/// Outward faces of a positively oriented tetrahedron, opposite v0..v3.
const TET_FACES: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

/// Boundary of the alpha complex: triangles bounding exactly one Delaunay
/// tetrahedron of circumradius at most `alpha`, oriented outward. Planar
/// input yields the alpha-filtered 2D Delaunay patch instead. Vertices are
/// the cloud points used by some face, in cloud order.
pub fn alpha_shape_mesh(cloud: &LabeledPointCloud, alpha: f64) -> Result<TriMesh> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    cloud.validate()?;
    let pts = &cloud.points;
    if pts.len() < 3 {
        return Err(Error::invalid(format!("alpha shape needs at least 3 points, got {}", pts.len())));
    }
    let pca = principal_axes(pts)?;
    let spread = pca.variances[0].sqrt();
    if spread == 0.0 || pca.variances[1].sqrt() <= PLANAR_TOLERANCE * spread {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let faces = if pca.variances[2].sqrt() <= PLANAR_TOLERANCE * spread {
        planar_faces(pts, &pca.axes, &pca.centroid, alpha)?
    } else {
        solid_faces(pts, alpha)?
    };
    Ok(compact(pts, faces))
}

fn solid_faces(pts: &[Point3], alpha: f64) -> Result<Vec<[usize; 3]>> {
    let tets = delaunay_3d(pts)?;
    let mut count: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
    for t in &tets {
        let r = tetrahedron_circumradius(&pts[t[0]], &pts[t[1]], &pts[t[2]], &pts[t[3]]);
        if r > alpha {
            continue;
        }
        for f in TET_FACES {
            let face = f.map(|i| t[i]);
            let mut key = face;
            key.sort_unstable();
            count.entry(key).or_insert((0, face)).0 += 1;
        }
    }
    let mut faces: Vec<[usize; 3]> = count.into_values().filter(|(n, _)| *n == 1).map(|(_, f)| f).collect();
    faces.sort_unstable();
    Ok(faces)
}

fn planar_faces(pts: &[Point3], axes: &[crate::geometry::Vec3; 3], c: &Point3, alpha: f64) -> Result<Vec<[usize; 3]>> {
    let uv: Vec<[f64; 2]> = pts.iter().map(|p| [(p - c).dot(&axes[0]), (p - c).dot(&axes[1])]).collect();
    let mut faces: Vec<[usize; 3]> = delaunay_2d(&uv)?
        .into_iter()
        .filter(|t| triangle_circumradius(&pts[t[0]], &pts[t[1]], &pts[t[2]]) <= alpha)
        .collect();
    faces.sort_unstable();
    Ok(faces)
}

fn compact(pts: &[Point3], faces: Vec<[usize; 3]>) -> TriMesh {
    let mut remap = vec![usize::MAX; pts.len()];
    for f in &faces {
        for &v in f {
            remap[v] = 0;
        }
    }
    let mut vertices = Vec::new();
    for (i, r) in remap.iter_mut().enumerate() {
        if *r == 0 {
            *r = vertices.len();
            vertices.push(pts[i]);
        }
    }
    let faces = faces.into_iter().map(|f| f.map(|v| remap[v])).collect();
    TriMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{boundary_loops, euler_characteristic, EdgeMap};
    use crate::synth::make_sampled_sphere;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(p: Vec<Point3>) -> LabeledPointCloud {
        LabeledPointCloud::from_points(p)
    }

    fn area(m: &TriMesh) -> f64 {
        (0..m.faces.len())
            .map(|f| {
                let [a, b, c] = m.face_points(f);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    fn signed_volume(m: &TriMesh) -> f64 {
        (0..m.faces.len())
            .map(|f| {
                let [a, b, c] = m.face_points(f);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Hull facets by exhaustive search: triples with every other point on one side.
    fn brute_hull(p: &[Point3]) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        let n = p.len();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let nrm = (p[j] - p[i]).cross(&(p[k] - p[i]));
                    let side: Vec<f64> = (0..n).filter(|&m| m != i && m != j && m != k).map(|m| nrm.dot(&(p[m] - p[i]))).collect();
                    if side.iter().all(|&s| s < 0.0) || side.iter().all(|&s| s > 0.0) {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn tetrahedron_faces() {
        let s = 1.0 / 3f64.sqrt();
        let pts = vec![Point3::new(s, s, s), Point3::new(s, -s, -s), Point3::new(-s, s, -s), Point3::new(-s, -s, s)];
        let m = alpha_shape_mesh(&cloud(pts), 10.0).unwrap();
        assert_eq!(m.faces.len(), 4);
        assert!(signed_volume(&m) > 0.0);
        assert!(alpha_shape_mesh(&cloud(m.vertices.clone()), 0.5).unwrap().faces.is_empty());
    }

    #[test]
    fn too_few_or_collinear() {
        assert!(alpha_shape_mesh(&cloud(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]), 1.0).is_err());
        let line: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(alpha_shape_mesh(&cloud(line), 1.0).is_err());
        let tri = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert_eq!(alpha_shape_mesh(&cloud(tri), 1.0).unwrap().faces.len(), 1);
    }

    #[test]
    fn planar_patch_from_rotated_lattice() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let pts: Vec<Point3> = (0..=20).flat_map(|i| (0..=4).map(move |j| Point3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0))).map(|p| rot * p).collect();
        let m = alpha_shape_mesh(&cloud(pts), 0.15).unwrap();
        assert_eq!(m.faces.len(), 2 * 20 * 4);
        assert!((area(&m) - 0.8).abs() < 1e-9);
        assert_eq!(boundary_loops(&m).unwrap().len(), 1);
        // Consistent orientation: shared edges run in opposite directions.
        let mut directed = std::collections::HashSet::new();
        for f in &m.faces {
            for k in 0..3 {
                assert!(directed.insert((f[k], f[(k + 1) % 3])));
            }
        }
    }

    #[test]
    fn sampled_sphere_is_watertight() {
        let m = alpha_shape_mesh(&cloud(make_sampled_sphere(2000, 1.0, 0.0, 11).unwrap()), 0.3).unwrap();
        let edges = EdgeMap::new(&m);
        assert!(edges.faces.iter().all(|f| f.len() == 2), "not watertight");
        assert_eq!(euler_characteristic(&m), 2);
        assert!(signed_volume(&m) > 0.0);
        let a = area(&m);
        let target = 4.0 * std::f64::consts::PI;
        assert!((a - target).abs() / target < 0.05, "area {a}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn infinite_alpha_gives_convex_hull(seed in 0u64..10_000, n in 4usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..n).map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let m = alpha_shape_mesh(&cloud(pts.clone()), f64::INFINITY).unwrap();
            let mut got: Vec<[usize; 3]> = m.faces.iter().map(|f| {
                let mut g = f.map(|v| pts.iter().position(|p| *p == m.vertices[v]).unwrap());
                g.sort_unstable();
                g
            }).collect();
            got.sort_unstable();
            prop_assert_eq!(got, brute_hull(&pts));
            prop_assert!(signed_volume(&m) > 0.0);
        }
    }
}
