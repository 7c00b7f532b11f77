use serde::Serialize;

use super::sparse::Csr;
use crate::error::{Error, Result};
use crate::geometry::TriMesh;
use crate::meshing::{boundary_loops, euler_characteristic, EdgeMap};

pub const ARAP_MAX_ITERATIONS: usize = 100;
pub const ARAP_TOLERANCE: f64 = 1e-7;
const CG_TOLERANCE: f64 = 1e-13;

/// Flattening of a disk-topology mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parameterization2D {
    pub uv: Vec<[f64; 2]>,
    pub arap_energy: f64,
    pub iterations_used: usize,
    /// Energy of the Tutte start followed by every accepted iteration.
    pub energy_history: Vec<f64>,
}

struct Cell {
    v: [usize; 3],
    /// Triangle laid out isometrically in its own plane.
    x: [[f64; 2]; 3],
    /// Cotangent of the angle at corner `k`, weighting the opposite edge.
    cot: [f64; 3],
}

impl Cell {
    /// Edges as `(weight, i, j)` in local corner indices.
    fn edges(&self) -> [(f64, usize, usize); 3] {
        [(self.cot[0], 1, 2), (self.cot[1], 2, 0), (self.cot[2], 0, 1)]
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn rotate(r: [f64; 2], d: [f64; 2]) -> [f64; 2] {
    // r = (cos, sin)
    [r[0] * d[0] - r[1] * d[1], r[1] * d[0] + r[0] * d[1]]
}

fn cells(mesh: &TriMesh) -> Result<Vec<Cell>> {
    let scale = {
        let mut sum = 0.0;
        for f in 0..mesh.faces.len() {
            let [a, b, _] = mesh.face_points(f);
            sum += (b - a).norm_squared();
        }
        sum / mesh.faces.len() as f64
    };
    mesh.faces
        .iter()
        .enumerate()
        .map(|(fi, &v)| {
            let [p0, p1, p2] = mesh.face_points(fi);
            let e1 = p1 - p0;
            let e2 = p2 - p0;
            let cross = e1.cross(&e2).norm();
            if !(cross > 1e-12 * scale) {
                return Err(Error::Degenerate(format!("face {fi} has zero area")));
            }
            let l1 = e1.norm();
            let x = [[0.0, 0.0], [l1, 0.0], [e1.dot(&e2) / l1, cross / l1]];
            let p = [p0, p1, p2];
            let mut cot = [0.0; 3];
            for (k, c) in cot.iter_mut().enumerate() {
                let a = p[(k + 1) % 3] - p[k];
                let b = p[(k + 2) % 3] - p[k];
                *c = a.dot(&b) / cross;
            }
            Ok(Cell { v, x, cot })
        })
        .collect()
}

fn check_disk(mesh: &TriMesh) -> Result<Vec<usize>> {
    if mesh.faces.is_empty() {
        return Err(Error::Topology("mesh has no faces".into()));
    }
    let n = mesh.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut used = vec![false; n];
    for f in &mesh.faces {
        for &v in f {
            used[v] = true;
        }
        for k in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
            parent[a] = b;
        }
    }
    if let Some(v) = used.iter().position(|&u| !u) {
        return Err(Error::Topology(format!("vertex {v} belongs to no face")));
    }
    let root = find(&mut parent, 0);
    if (0..n).any(|v| find(&mut parent, v) != root) {
        return Err(Error::Topology("mesh is not connected".into()));
    }
    EdgeMap::new(mesh).check_manifold()?;
    let loops = boundary_loops(mesh)?;
    if loops.len() != 1 {
        return Err(Error::Topology(format!(
            "expected a disk with one boundary loop, found {}",
            loops.len()
        )));
    }
    if euler_characteristic(mesh) != 1 {
        return Err(Error::Topology("mesh is not a topological disk".into()));
    }
    Ok(loops.into_iter().next().unwrap_or_default())
}

fn laplacian_triplets(cells: &[Cell]) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(cells.len() * 12);
    for c in cells {
        for (w, i, j) in c.edges() {
            let (a, b) = (c.v[i], c.v[j]);
            t.push((a, a, w));
            t.push((b, b, w));
            t.push((a, b, -w));
            t.push((b, a, -w));
        }
    }
    t
}

/// Solves `L u = rhs` for the vertices not in `fixed`, with fixed values
/// taken from `u`. `u` doubles as the initial guess.
struct Reduced {
    matrix: Csr,
    free: Vec<usize>,
    coupling: Vec<(usize, usize, f64)>,
}

impl Reduced {
    fn new(n: usize, triplets: &[(usize, usize, f64)], fixed: &[bool]) -> Self {
        let free: Vec<usize> = (0..n).filter(|&v| !fixed[v]).collect();
        let mut free_index = vec![usize::MAX; n];
        for (k, &v) in free.iter().enumerate() {
            free_index[v] = k;
        }
        let mut inner = Vec::new();
        let mut coupling = Vec::new();
        for &(r, c, w) in triplets {
            if fixed[r] {
                continue;
            }
            if fixed[c] {
                coupling.push((free_index[r], c, w));
            } else {
                inner.push((free_index[r], free_index[c], w));
            }
        }
        Self {
            matrix: Csr::from_triplets(free.len(), inner),
            free,
            coupling,
        }
    }

    fn solve(&self, rhs: &[[f64; 2]], u: &mut [[f64; 2]]) -> Result<()> {
        let m = self.free.len();
        for axis in 0..2 {
            let mut b: Vec<f64> = self.free.iter().map(|&v| rhs[v][axis]).collect();
            for &(r, c, w) in &self.coupling {
                b[r] -= w * u[c][axis];
            }
            let mut x: Vec<f64> = self.free.iter().map(|&v| u[v][axis]).collect();
            self.matrix.solve_cg(&b, &mut x, CG_TOLERANCE, 20 * m + 100)?;
            for (k, &v) in self.free.iter().enumerate() {
                u[v][axis] = x[k];
            }
        }
        Ok(())
    }
}

fn best_rotations(cells: &[Cell], u: &[[f64; 2]]) -> Vec<[f64; 2]> {
    cells
        .iter()
        .map(|c| {
            // Closest rotation to S = Σ w (du)(dx)^T; the sign-corrected 2×2
            // SVD reduces to this angle.
            let (mut a, mut b) = (0.0, 0.0);
            for (w, i, j) in c.edges() {
                let du = sub(u[c.v[i]], u[c.v[j]]);
                let dx = sub(c.x[i], c.x[j]);
                a += w * (du[0] * dx[0] + du[1] * dx[1]);
                b += w * (du[1] * dx[0] - du[0] * dx[1]);
            }
            let theta = b.atan2(a);
            [theta.cos(), theta.sin()]
        })
        .collect()
}

fn energy(cells: &[Cell], u: &[[f64; 2]], rot: &[[f64; 2]]) -> f64 {
    let e: f64 = cells
        .iter()
        .zip(rot)
        .map(|(c, &r)| {
            c.edges()
                .iter()
                .map(|&(w, i, j)| {
                    let d = sub(sub(u[c.v[i]], u[c.v[j]]), rotate(r, sub(c.x[i], c.x[j])));
                    w * (d[0] * d[0] + d[1] * d[1])
                })
                .sum::<f64>()
        })
        .sum();
    e.max(0.0)
}

fn tutte(mesh: &TriMesh, cells: &[Cell], boundary: &[usize]) -> Result<Vec<[f64; 2]>> {
    let n = mesh.vertices.len();
    let mut u = vec![[0.0; 2]; n];
    let mut arc = vec![0.0; boundary.len() + 1];
    for k in 0..boundary.len() {
        let (a, b) = (boundary[k], boundary[(k + 1) % boundary.len()]);
        arc[k + 1] = arc[k] + (mesh.vertices[b] - mesh.vertices[a]).norm();
    }
    let total = arc[boundary.len()];
    let mut fixed = vec![false; n];
    for (k, &v) in boundary.iter().enumerate() {
        // The loop runs against the face orientation, so walk the circle clockwise.
        let t = -2.0 * std::f64::consts::PI * arc[k] / total;
        u[v] = [t.cos(), t.sin()];
        fixed[v] = true;
    }
    if fixed.iter().all(|&f| f) {
        return Ok(u);
    }
    let reduced = Reduced::new(n, &laplacian_triplets(cells), &fixed);
    reduced.solve(&vec![[0.0; 2]; n], &mut u)?;
    Ok(u)
}

/// As-rigid-as-possible flattening with cotangent weights, started from a
/// Tutte embedding. Stops once an iteration lowers the energy by less than
/// `tol`; a step that would raise the energy is discarded.
pub fn arap_parameterize(mesh: &TriMesh, max_iterations: usize, tol: f64) -> Result<Parameterization2D> {
    if !(tol >= 0.0) {
        return Err(Error::invalid(format!("tolerance must be non-negative, got {tol}")));
    }
    let boundary = check_disk(mesh)?;
    let cells = cells(mesh)?;
    let n = mesh.vertices.len();
    let mut u = tutte(mesh, &cells, &boundary)?;

    let triplets = laplacian_triplets(&cells);
    let mut pinned = vec![false; n];
    pinned[boundary[0]] = true;
    let global = Reduced::new(n, &triplets, &pinned);

    let mut rot = best_rotations(&cells, &u);
    let mut e = energy(&cells, &u, &rot);
    let mut history = vec![e];
    let mut used = 0;
    for _ in 0..max_iterations {
        let mut rhs = vec![[0.0; 2]; n];
        for (c, &r) in cells.iter().zip(&rot) {
            for (w, i, j) in c.edges() {
                let d = rotate(r, sub(c.x[i], c.x[j]));
                let (a, b) = (c.v[i], c.v[j]);
                rhs[a][0] += w * d[0];
                rhs[a][1] += w * d[1];
                rhs[b][0] -= w * d[0];
                rhs[b][1] -= w * d[1];
            }
        }
        let mut next = u.clone();
        global.solve(&rhs, &mut next)?;
        let next_rot = best_rotations(&cells, &next);
        let next_e = energy(&cells, &next, &next_rot);
        if next_e > e {
            break;
        }
        let decrease = e - next_e;
        u = next;
        rot = next_rot;
        e = next_e;
        history.push(e);
        used += 1;
        if decrease < tol {
            break;
        }
    }
    if u.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("parameterization is not finite".into()));
    }
    Ok(Parameterization2D {
        uv: u,
        arap_energy: e,
        iterations_used: used,
        energy_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::synth::make_ribbon_leaf;

    fn uv_area(uv: &[[f64; 2]], f: [usize; 3]) -> f64 {
        let (a, b, c) = (uv[f[0]], uv[f[1]], uv[f[2]]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    #[test]
    fn planar_mesh_is_its_own_flattening() {
        let leaf = make_ribbon_leaf(3.0, 1.0, None, 0.1, 0).unwrap();
        let p = arap_parameterize(&leaf.mesh, 500, 1e-12).unwrap();
        assert!(p.arap_energy <= 1e-6, "{}", p.arap_energy);
        assert!(p.energy_history.windows(2).all(|w| w[1] <= w[0]));
        // Rigid: all pairwise distances preserved.
        let v = &leaf.mesh.vertices;
        for (i, j) in [(0, 30), (5, 200), (17, 278), (100, 101)] {
            let d3 = (v[i] - v[j]).norm();
            let d2 = (p.uv[i][0] - p.uv[j][0]).hypot(p.uv[i][1] - p.uv[j][1]);
            assert!((d3 - d2).abs() < 1e-4, "{d3} vs {d2}");
        }
        // Orientation preserved.
        assert!(leaf.mesh.faces.iter().all(|&f| uv_area(&p.uv, f) > 0.0));
    }

    #[test]
    fn half_cylinder_unrolls() {
        let girth = 4.0;
        let leaf = make_ribbon_leaf(10.0, girth, Some(girth / std::f64::consts::PI), 0.2, 0).unwrap();
        let p = arap_parameterize(&leaf.mesh, ARAP_MAX_ITERATIONS, ARAP_TOLERANCE).unwrap();
        let total: f64 = (0..leaf.mesh.faces.len())
            .map(|f| {
                let [a, b, c] = leaf.mesh.face_points(f);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum();
        assert!(p.arap_energy <= 1e-4 * total, "{} vs {}", p.arap_energy, total);
        for (f, &face) in leaf.mesh.faces.iter().enumerate() {
            let [a, b, c] = leaf.mesh.face_points(f);
            let a3 = 0.5 * (b - a).cross(&(c - a)).norm();
            assert!((uv_area(&p.uv, face) / a3 - 1.0).abs() <= 0.01);
        }
    }

    #[test]
    fn rejects_non_disks() {
        let ico = crate::meshing::icosahedron();
        assert!(matches!(arap_parameterize(&ico, 10, 1e-7), Err(Error::Topology(_))));
        // Annulus: a ring of quads has two boundary loops.
        let mut vertices = Vec::new();
        for r in [1.0, 2.0] {
            for s in 0..8 {
                let a = s as f64 * std::f64::consts::FRAC_PI_4;
                vertices.push(Point3::new(r * a.cos(), r * a.sin(), 0.0));
            }
        }
        let mut faces = Vec::new();
        for s in 0..8 {
            let (i0, i1) = (s, (s + 1) % 8);
            faces.push([i0, i1, i1 + 8]);
            faces.push([i0, i1 + 8, i0 + 8]);
        }
        let ring = TriMesh::new(vertices, faces).unwrap();
        assert!(matches!(arap_parameterize(&ring, 10, 1e-7), Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_zero_area_faces() {
        let m = TriMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(arap_parameterize(&m, 10, 1e-7), Err(Error::Degenerate(_))));
    }
}
