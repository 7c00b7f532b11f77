//! Deterministic synthetic fixtures with known ground truth: a multi-blob
//! density scene with orbiting cameras, ribbon-shaped leaves, and a rear-view
//! frame sequence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    generate_camera_rays, Aabb, CameraIntrinsics, CameraPose, LabeledPointCloud, Point3, TriMesh,
    Vec3,
};
use crate::lifting::{compute_ray_weights, ray_interval, DensityField, GridSpec, MaskField, MaskView};
use crate::raster::GrayImage;

/// Density inside blobs, in inverse scene units.
pub const BLOB_DENSITY: f64 = 50.0;
/// World-space edge length of the shortest grid axis.
pub const BLOB_SCENE_EXTENT: f64 = 0.25;
pub const ORBIT_DIAGONAL_FACTOR: f64 = 1.5;
pub const ORBIT_ELEVATION_DEG: f64 = 20.0;
/// Centers are drawn from a ball about the grid center whose radius is this
/// factor times the minimum separation times the cube root of the count.
const PLACEMENT_SPREAD: f64 = 0.6;
/// Slack around the blobs' bounding sphere when framing the cameras.
const FRAME_MARGIN: f64 = 1.05;
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
/// Blob radii as a fraction of the shortest grid axis, in nodes.
pub const RADIUS_RANGE: (f64, f64) = (0.12, 0.14);

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlobSceneConfig {
    pub n_objects: usize,
    pub dims: [usize; 3],
    pub n_views: usize,
    pub image_size: u32,
    pub samples_per_ray: usize,
    pub seed: u64,
    /// World-space edge length of the shortest grid axis.
    pub extent: f64,
    /// Blob radius bounds as a fraction of the shortest grid axis.
    pub radius_range: (f64, f64),
}

impl BlobSceneConfig {
    pub fn new(n_objects: usize, dims: [usize; 3], n_views: usize, seed: u64) -> Self {
        Self {
            n_objects,
            dims,
            n_views,
            image_size: 128,
            samples_per_ray: 128,
            seed,
            extent: BLOB_SCENE_EXTENT,
            radius_range: RADIUS_RANGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: Point3,
    pub radius: f64,
}

impl Blob {
    pub fn contains(&self, p: &Point3) -> bool {
        (p - self.center).norm() <= self.radius
    }
}

#[derive(Debug, Clone)]
pub struct BlobScene {
    pub config: BlobSceneConfig,
    pub blobs: Vec<Blob>,
    pub density: DensityField,
    /// Per-object node occupancy, same layout as the density grid.
    pub occupancy: Vec<Vec<bool>>,
    /// Boundary nodes of each blob's occupancy, labeled with the blob index.
    pub cloud: LabeledPointCloud,
    pub poses: Vec<CameraPose>,
    pub intrinsics: CameraIntrinsics,
}

impl BlobScene {
    /// Occupancy as a 0/1 mask field.
    pub fn occupancy_field(&self) -> MaskField {
        let scores = self
            .occupancy
            .iter()
            .map(|occ| occ.iter().map(|&o| f64::from(u8::from(o))).collect())
            .collect();
        MaskField::from_scores(*self.density.grid(), scores)
            .expect("occupancy grids match the density grid")
    }
}

pub fn make_blob_scene(n_objects: usize, dims: [usize; 3], n_views: usize, seed: u64) -> Result<BlobScene> {
    make_blob_scene_with(&BlobSceneConfig::new(n_objects, dims, n_views, seed))
}

pub fn make_blob_scene_with(cfg: &BlobSceneConfig) -> Result<BlobScene> {
    if cfg.n_objects == 0 {
        return Err(Error::invalid("blob scene needs at least one object"));
    }
    if cfg.dims.iter().any(|&d| d < 16) {
        return Err(Error::invalid(format!("blob scene dims must be >= 16, got {:?}", cfg.dims)));
    }
    if cfg.n_views < 4 {
        return Err(Error::invalid("blob scene needs at least 4 views"));
    }
    if cfg.image_size == 0 || cfg.samples_per_ray < 2 {
        return Err(Error::invalid("image_size must be positive and samples_per_ray >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let min_dim = *cfg.dims.iter().min().unwrap_or(&16);
    let h = cfg.extent / (min_dim - 1) as f64;
    let half = Vec3::from_fn(|a, _| 0.5 * (cfg.dims[a] - 1) as f64 * h);
    let bounds = Aabb::new(Point3::from(-half), Point3::from(half))?;
    let grid = GridSpec::new(cfg.dims, bounds)?;

    let radii: Vec<f64> = (0..cfg.n_objects)
        .map(|_| rng.gen_range(cfg.radius_range.0..cfg.radius_range.1) * min_dim as f64 * h)
        .collect();
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let centers = place_centers(&mut rng, &bounds, h, r_max, cfg.n_objects)?;
    let blobs: Vec<Blob> = centers
        .into_iter()
        .zip(&radii)
        .map(|(center, &radius)| Blob { center, radius })
        .collect();

    let occupancy: Vec<Vec<bool>> = blobs
        .iter()
        .map(|b| (0..grid.len()).map(|v| b.contains(&grid.node_position(v))).collect())
        .collect();
    let sigma = (0..grid.len())
        .map(|v| {
            if occupancy.iter().any(|o| o[v]) {
                BLOB_DENSITY
            } else {
                0.0
            }
        })
        .collect();
    let density = DensityField::new(grid, sigma)?;

    let cloud = blob_surface_cloud(&grid, &occupancy, &mut rng)?;
    let frame_radius = blobs
        .iter()
        .map(|b| (b.center - bounds.center()).norm() + b.radius)
        .fold(0.0, f64::max)
        * FRAME_MARGIN;
    let (poses, intrinsics) = orbit_cameras(&bounds, frame_radius, cfg.n_views, cfg.image_size)?;

    Ok(BlobScene {
        config: cfg.clone(),
        blobs,
        density,
        occupancy,
        cloud,
        poses,
        intrinsics,
    })
}

fn place_centers(
    rng: &mut ChaCha8Rng,
    bounds: &Aabb,
    h: f64,
    r_max: f64,
    n: usize,
) -> Result<Vec<Point3>> {
    let margin = r_max + h;
    let lo = bounds.min.coords.add_scalar(margin);
    let hi = bounds.max.coords.add_scalar(-margin);
    if (0..3).any(|a| lo[a] >= hi[a]) {
        return Err(Error::invalid("grid too small for the blob radius"));
    }
    let min_sep = 2.5 * r_max;
    let spread = PLACEMENT_SPREAD * min_sep * (n as f64).cbrt();
    let mid = bounds.center();
    let mut centers: Vec<Point3> = Vec::with_capacity(n);
    let mut since_restart = 0;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let c = Point3::from(Vec3::from_fn(|a, _| rng.gen_range(lo[a]..=hi[a])));
        let free = (c - mid).norm() <= spread && centers.iter().all(|o| (o - c).norm() >= min_sep);
        if free {
            centers.push(c);
            if centers.len() == n {
                return Ok(centers);
            }
        }
        since_restart += 1;
        if since_restart == 200 {
            centers.clear();
            since_restart = 0;
        }
    }
    Err(Error::invalid(format!(
        "could not place {n} blobs after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// Quasi-uniform points on a unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Solid-sphere sample for surface reconstruction tests: `n_surface`
/// Fibonacci points on a sphere of `radius`, each pushed radially by a
/// uniform factor in `[-noise, noise]`, plus a jittered interior lattice that
/// gives the Delaunay tetrahedra small circumspheres.
pub fn make_sampled_sphere(n_surface: usize, radius: f64, noise: f64, seed: u64) -> Result<Vec<Point3>> {
    if n_surface < 4 || !(radius > 0.0) || !(0.0..0.5).contains(&noise) {
        return Err(Error::invalid("sampled sphere needs n >= 4, radius > 0 and noise in [0, 0.5)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Point3> = fibonacci_sphere(n_surface)
        .into_iter()
        .map(|v| Point3::from(v * radius * (1.0 + rng.gen_range(-noise..=noise))))
        .collect();
    let spacing = 1.5 * radius * (4.0 * std::f64::consts::PI / n_surface as f64).sqrt();
    let inner = radius * (1.0 - noise) - spacing;
    let steps = (radius / spacing).ceil() as i64;
    for i in -steps..=steps {
        for j in -steps..=steps {
            for k in -steps..=steps {
                let jitter = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
                let p = (Vec3::new(i as f64, j as f64, k as f64) + jitter) * spacing;
                if p.norm() < inner {
                    points.push(Point3::from(p));
                }
            }
        }
    }
    Ok(points)
}

/// Boundary nodes of each blob's occupancy: occupied nodes with an
/// unoccupied or missing 6-neighbour.
fn blob_surface_cloud(
    grid: &GridSpec,
    occupancy: &[Vec<bool>],
    rng: &mut ChaCha8Rng,
) -> Result<LabeledPointCloud> {
    let dims = grid.dims();
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut ids = Vec::new();
    for (i, occ) in occupancy.iter().enumerate() {
        let base: [u8; 3] = [rng.gen_range(40..200), rng.gen_range(100..230), rng.gen_range(20..120)];
        for v in (0..grid.len()).filter(|&v| occ[v]) {
            let c = grid.coords(v);
            let exposed = (0..3).any(|a| {
                [-1i64, 1].iter().any(|&d| {
                    let n = c[a] as i64 + d;
                    if n < 0 || n >= dims[a] as i64 {
                        return true;
                    }
                    let mut nc = c;
                    nc[a] = n as usize;
                    !occ[grid.index(nc[0], nc[1], nc[2])]
                })
            });
            if exposed {
                points.push(grid.node_position(v));
                colors.push(base);
                ids.push(i as i32);
            }
        }
    }
    LabeledPointCloud::new(points, Some(colors), Some(ids))
}

/// Cameras on a circle around the bounds center at fixed elevation, at a
/// distance set by the box diagonal. The focal length fits a sphere of
/// `frame_radius` about the center into the image.
pub fn orbit_cameras(
    bounds: &Aabb,
    frame_radius: f64,
    n_views: usize,
    image_size: u32,
) -> Result<(Vec<CameraPose>, CameraIntrinsics)> {
    let center = bounds.center();
    let diag = bounds.diagonal();
    let dist = ORBIT_DIAGONAL_FACTOR * diag;
    let elev = ORBIT_ELEVATION_DEG.to_radians();
    let poses = (0..n_views)
        .map(|k| {
            let az = 2.0 * std::f64::consts::PI * k as f64 / n_views as f64;
            let eye = center + Vec3::new(az.cos() * elev.cos(), az.sin() * elev.cos(), elev.sin()) * dist;
            CameraPose::look_at(eye, center, Vec3::new(0.0, 0.0, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    if !(frame_radius > 0.0 && frame_radius < dist) {
        return Err(Error::invalid(format!("frame radius {frame_radius} outside (0, {dist})")));
    }
    let sphere_r = frame_radius;
    let tan_half = sphere_r / (dist * dist - sphere_r * sphere_r).sqrt();
    let c = image_size as f64 / 2.0;
    let f = c / tan_half;
    Ok((poses, CameraIntrinsics::new(f, f, c, c, image_size, image_size)?))
}

/// Per-view, per-object masks under the same quadrature the lifting uses:
/// `Σ_k w_k · [sample k lies in the density support of blob i]`, where the
/// support is every point whose interpolation stencil touches an occupied
/// node of that blob. Indexed `[view][object]`.
pub fn render_reference_masks(scene: &BlobScene) -> Result<Vec<Vec<GrayImage>>> {
    let intr = &scene.intrinsics;
    let grid = scene.density.grid();
    let n_obj = scene.occupancy.len();
    let (w, h) = (intr.width as usize, intr.height as usize);
    scene
        .poses
        .par_iter()
        .map(|pose| {
            let rays = generate_camera_rays(pose, intr)?;
            let mut images = vec![vec![0.0; rays.len()]; n_obj];
            for (r, ray) in rays.iter().enumerate() {
                let Some((t0, t1)) = ray_interval(grid, ray) else {
                    continue;
                };
                let s = compute_ray_weights(&scene.density, ray, t0, t1, scene.config.samples_per_ray)?;
                for (&t, &wk) in s.t_values.iter().zip(&s.weights) {
                    if wk == 0.0 {
                        continue;
                    }
                    let Some(tri) = grid.trilinear(&ray.at(t)) else {
                        continue;
                    };
                    for (obj, occ) in scene.occupancy.iter().enumerate() {
                        if tri.corners.iter().any(|&(idx, c)| c > 0.0 && occ[idx]) {
                            images[obj][r] += wk;
                        }
                    }
                }
            }
            images
                .into_iter()
                .map(|values| GrayImage::new(w, h, values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()))
                .collect()
        })
        .collect()
}

/// Pairs the scene poses with reference masks.
pub fn reference_views(scene: &BlobScene) -> Result<Vec<MaskView>> {
    Ok(scene
        .poses
        .iter()
        .zip(render_reference_masks(scene)?)
        .map(|(pose, masks)| MaskView { pose: *pose, masks })
        .collect())
}

/// Closed-form traits of a ribbon leaf fixture.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RibbonTruth {
    pub length: f64,
    pub width: f64,
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct RibbonLeaf {
    pub cloud: LabeledPointCloud,
    pub mesh: TriMesh,
    pub truth: RibbonTruth,
}

/// Rectangular strip of `length × width` sampled on a lattice, optionally
/// curled across its width onto a cylinder of radius `bend_radius` whose axis
/// runs along the length. The lattice is the mesh; the cloud holds the same
/// points in a seed-dependent order.
pub fn make_ribbon_leaf(
    length: f64,
    width: f64,
    bend_radius: Option<f64>,
    spacing: f64,
    seed: u64,
) -> Result<RibbonLeaf> {
    if !(length > 0.0 && width > 0.0 && spacing > 0.0) {
        return Err(Error::invalid("ribbon length, width and spacing must be positive"));
    }
    if let Some(r) = bend_radius {
        if !(r >= width / std::f64::consts::PI) {
            return Err(Error::invalid(format!(
                "bend radius {r} < width/π would self-intersect"
            )));
        }
    }
    let cols = ((length / spacing).round() as usize).max(1);
    let ds = length / cols as f64;
    // Across-width steps stay strictly wider than along-length steps, and the
    // count is even so a lattice row runs along the center line.
    let mut rows = 2 * ((width / ds / 2.0).ceil() as usize).max(1) - 2;
    if rows < 2 || width / rows as f64 <= ds {
        rows = rows.max(2);
        while rows > 2 && width / rows as f64 <= ds {
            rows -= 2;
        }
    }
    let dt = width / rows as f64;

    let place = |s: f64, t: f64| -> Point3 {
        match bend_radius {
            Some(r) => Point3::new(s, r * (t / r).sin(), r * (1.0 - (t / r).cos())),
            None => Point3::new(s, t, 0.0),
        }
    };
    let mut vertices = Vec::with_capacity((cols + 1) * (rows + 1));
    for j in 0..=rows {
        for i in 0..=cols {
            vertices.push(place(i as f64 * ds, -0.5 * width + j as f64 * dt));
        }
    }
    let at = |i: usize, j: usize| j * (cols + 1) + i;
    let mut faces = Vec::with_capacity(2 * cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            faces.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            faces.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    let mesh = TriMesh::new(vertices.clone(), faces)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..vertices.len()).collect();
    order.shuffle(&mut rng);
    let points: Vec<Point3> = order.iter().map(|&i| vertices[i]).collect();
    let n = points.len();
    let cloud = LabeledPointCloud::new(points, Some(vec![[46, 139, 87]; n]), Some(vec![0; n]))?;

    Ok(RibbonLeaf {
        cloud,
        mesh,
        truth: RibbonTruth {
            length,
            width,
            area: length * width,
        },
    })
}

/// A reference image plus `n_frames` frames of which `first..=last` show the
/// mirrored reference; every frame carries additive Gaussian noise of
/// standard deviation `noise_sigma` (in `[0, 1]` intensity units).
pub fn make_rear_sequence(
    width: usize,
    height: usize,
    n_frames: usize,
    rear: (usize, usize),
    noise_sigma: f64,
    seed: u64,
) -> Result<(GrayImage, Vec<GrayImage>)> {
    if rear.0 > rear.1 || rear.1 >= n_frames {
        return Err(Error::invalid("rear frame range must lie inside the sequence"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be >= 0"));
    }
    let reference = asymmetric_pattern(width, height)?;
    let mirrored = reference.flip_horizontal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let frames = (0..n_frames)
        .map(|i| {
            let base = if (rear.0..=rear.1).contains(&i) { &mirrored } else { &reference };
            let pixels = base
                .pixels()
                .iter()
                .map(|&v| {
                    let n = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (v + n).clamp(0.0, 1.0)
                })
                .collect();
            GrayImage::new(width, height, pixels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((reference, frames))
}

/// Left-heavy test card: horizontal ramp, a bright disc on the left and
/// diagonal stripes on the right.
pub fn asymmetric_pattern(width: usize, height: usize) -> Result<GrayImage> {
    let (w, h) = (width as f64, height as f64);
    GrayImage::from_fn(width, height, |x, y| {
        let (u, v) = (x as f64 / w, y as f64 / h);
        let mut val = 0.15 + 0.5 * (1.0 - u);
        let (dx, dy) = (u - 0.27, v - 0.4);
        if dx * dx + dy * dy < 0.03 {
            val = 0.95;
        }
        if u > 0.6 && ((x + 2 * y) / 6) % 2 == 0 {
            val = 0.05;
        }
        if v > 0.8 && u < 0.45 {
            val = 0.3 + 0.4 * v;
        }
        val
    })
}
