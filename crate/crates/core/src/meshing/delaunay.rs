//! Incremental (Bowyer–Watson) Delaunay triangulations in 2D and 3D with
//! exact orientation and in-circle/in-sphere predicates.
//!
//! Inputs are first de-duplicated, then perturbed by a tiny seeded jitter so
//! that lattice-like inputs (co-circular or co-spherical groups) have a
//! unique triangulation. Returned simplices index the caller's points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust::{Coord, Coord3D};

use crate::error::{Error, Result};
use crate::geometry::Point3;

const NONE: usize = usize::MAX;
/// Jitter amplitude relative to the bounding-box diagonal.
const JITTER: f64 = 1e-9;
/// Super-simplex size relative to the bounding-box diagonal.
const SUPER_SCALE: f64 = 1e5;
const JITTER_SEED: u64 = 0x5eed_de1a;

fn c3(p: &[f64; 3]) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

fn c2(p: &[f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

/// Indices of the first occurrence of each distinct point, in spatial
/// (Morton) order.
fn insertion_order<const D: usize>(points: &[[f64; D]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.dedup_by(|b, a| points[*a] == points[*b]);

    let mut lo = [f64::INFINITY; D];
    let mut hi = [f64::NEG_INFINITY; D];
    for p in points {
        for a in 0..D {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let key = |p: &[f64; D]| -> u64 {
        let bits = 63 / D as u32;
        let cells = (1u64 << bits) - 1;
        let mut code = 0u64;
        let q: Vec<u64> = (0..D)
            .map(|a| {
                let span = (hi[a] - lo[a]).max(f64::MIN_POSITIVE);
                (((p[a] - lo[a]) / span) * cells as f64) as u64
            })
            .collect();
        for bit in (0..bits).rev() {
            for qa in &q {
                code = (code << 1) | ((qa >> bit) & 1);
            }
        }
        code
    };
    idx.sort_by_key(|&i| (key(&points[i]), i));
    idx
}

fn jittered<const D: usize>(points: &[[f64; D]]) -> Vec<[f64; D]> {
    let diag = {
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for p in points {
            for a in 0..D {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (0..D).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
    };
    let amp = JITTER * diag.max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    points
        .iter()
        .map(|p| {
            let mut q = *p;
            for v in &mut q {
                *v += rng.gen_range(-amp..amp);
            }
            q
        })
        .collect()
}

fn check_finite<const D: usize>(points: &[[f64; D]]) -> Result<()> {
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("triangulation input has non-finite coordinates"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Tet {
    v: [usize; 4],
    /// `n[i]` is across the face opposite `v[i]`.
    n: [usize; 4],
    alive: bool,
}

struct Mesh3 {
    pts: Vec<[f64; 3]>,
    tets: Vec<Tet>,
    free: Vec<usize>,
    last: usize,
    rng: ChaCha8Rng,
}

impl Mesh3 {
    fn orient(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        robust::orient3d(c3(&self.pts[a]), c3(&self.pts[b]), c3(&self.pts[c]), c3(&self.pts[d]))
    }

    fn in_sphere(&self, t: usize, p: usize) -> bool {
        let v = self.tets[t].v;
        robust::insphere(
            c3(&self.pts[v[0]]),
            c3(&self.pts[v[1]]),
            c3(&self.pts[v[2]]),
            c3(&self.pts[v[3]]),
            c3(&self.pts[p]),
        ) > 0.0
    }

    fn alloc(&mut self, tet: Tet) -> usize {
        match self.free.pop() {
            Some(i) => {
                self.tets[i] = tet;
                i
            }
            None => {
                self.tets.push(tet);
                self.tets.len() - 1
            }
        }
    }

    /// Visibility walk to a tetrahedron containing `p`.
    fn locate(&mut self, p: usize) -> Result<usize> {
        let mut t = self.last;
        let limit = 4 * self.tets.len() + 64;
        'walk: for _ in 0..limit {
            let start = self.rng.gen_range(0..4);
            for k in 0..4 {
                let i = (start + k) % 4;
                let mut v = self.tets[t].v;
                v[i] = p;
                if self.orient(v[0], v[1], v[2], v[3]) < 0.0 {
                    let next = self.tets[t].n[i];
                    if next == NONE {
                        return Err(Error::Degenerate("point outside the super-simplex".into()));
                    }
                    t = next;
                    continue 'walk;
                }
            }
            return Ok(t);
        }
        Err(Error::Degenerate("point location did not terminate".into()))
    }

    fn insert(&mut self, p: usize) -> Result<()> {
        let start = self.locate(p)?;
        let mut cavity = vec![start];
        let mut in_cavity = std::collections::HashSet::from([start]);
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        let mut head = 0;
        while head < cavity.len() {
            let t = cavity[head];
            head += 1;
            for i in 0..4 {
                let nb = self.tets[t].n[i];
                if nb != NONE && !in_cavity.contains(&nb) && self.in_sphere(nb, p) {
                    in_cavity.insert(nb);
                    cavity.push(nb);
                } else if nb == NONE || !in_cavity.contains(&nb) {
                    boundary.push((t, i));
                }
            }
        }

        let mut created = Vec::with_capacity(boundary.len());
        let mut edge_faces: std::collections::HashMap<(usize, usize), (usize, usize)> =
            std::collections::HashMap::with_capacity(boundary.len() * 3);
        for &(t, i) in &boundary {
            let old = self.tets[t];
            let outside = old.n[i];
            let mut v = old.v;
            v[i] = p;
            if self.orient(v[0], v[1], v[2], v[3]) <= 0.0 {
                return Err(Error::Degenerate("cavity is not star-shaped".into()));
            }
            let mut n = [NONE; 4];
            n[i] = outside;
            created.push((v, n, t, i));
        }
        for &t in &cavity {
            self.tets[t].alive = false;
        }
        let mut ids = Vec::with_capacity(created.len());
        for (v, n, _, _) in &created {
            ids.push(self.alloc(Tet {
                v: *v,
                n: *n,
                alive: true,
            }));
        }
        for (k, &(v, _, old_t, i)) in created.iter().enumerate() {
            let id = ids[k];
            let outside = self.tets[id].n[i];
            if outside != NONE {
                let slot = self.tets[outside]
                    .n
                    .iter()
                    .position(|&x| x == old_t)
                    .ok_or_else(|| Error::Degenerate("broken adjacency".into()))?;
                self.tets[outside].n[slot] = id;
            }
            for j in 0..4 {
                if j == i {
                    continue;
                }
                // Face opposite v[j] contains p and the two remaining vertices.
                let others: Vec<usize> = (0..4).filter(|&m| m != i && m != j).map(|m| v[m]).collect();
                let key = (others[0].min(others[1]), others[0].max(others[1]));
                match edge_faces.remove(&key) {
                    Some((other, oj)) => {
                        self.tets[id].n[j] = other;
                        self.tets[other].n[oj] = id;
                    }
                    None => {
                        edge_faces.insert(key, (id, j));
                    }
                }
            }
        }
        if !edge_faces.is_empty() {
            return Err(Error::Degenerate("unmatched cavity faces".into()));
        }
        // Recycled only now, so no new id aliases a cavity id during linking.
        self.free.extend(cavity);
        self.last = ids[0];
        Ok(())
    }
}

/// Delaunay tetrahedra of `points`, each positively oriented, indexing the
/// input. Duplicate points are ignored.
pub fn delaunay_3d(points: &[Point3]) -> Result<Vec<[usize; 4]>> {
    let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    check_finite(&raw)?;
    let order = insertion_order(&raw);
    if order.len() < 4 {
        return Err(Error::invalid(format!(
            "3D triangulation needs 4 distinct points, got {}",
            order.len()
        )));
    }
    let mut pts = jittered(&raw);
    let n = pts.len();
    let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
    for p in &pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let c: Vec<f64> = (0..3).map(|a| 0.5 * (lo[a] + hi[a])).collect();
    let diag = (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt().max(1.0);
    let s = SUPER_SCALE * diag;
    pts.push([c[0] - s, c[1] - s, c[2] - s]);
    pts.push([c[0] + 3.0 * s, c[1] - s, c[2] - s]);
    pts.push([c[0] - s, c[1] + 3.0 * s, c[2] - s]);
    pts.push([c[0] - s, c[1] - s, c[2] + 3.0 * s]);

    let mut mesh = Mesh3 {
        pts,
        tets: Vec::with_capacity(order.len() * 7),
        free: Vec::new(),
        last: 0,
        rng: ChaCha8Rng::seed_from_u64(JITTER_SEED),
    };
    let mut v = [n, n + 1, n + 2, n + 3];
    if mesh.orient(v[0], v[1], v[2], v[3]) < 0.0 {
        v.swap(2, 3);
    }
    mesh.tets.push(Tet {
        v,
        n: [NONE; 4],
        alive: true,
    });
    for &p in &order {
        mesh.insert(p)?;
    }
    Ok(mesh
        .tets
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [usize; 3],
    n: [usize; 3],
    alive: bool,
}

/// Delaunay triangles of 2D `points`, counter-clockwise, indexing the input.
pub fn delaunay_2d(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    check_finite(points)?;
    let order = insertion_order(points);
    if order.len() < 3 {
        return Err(Error::invalid(format!(
            "2D triangulation needs 3 distinct points, got {}",
            order.len()
        )));
    }
    let mut pts = jittered(points);
    let n = pts.len();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let s = SUPER_SCALE * ((hi[0] - lo[0]).hypot(hi[1] - lo[1])).max(1.0);
    pts.push([c[0] - s, c[1] - s]);
    pts.push([c[0] + 3.0 * s, c[1] - s]);
    pts.push([c[0] - s, c[1] + 3.0 * s]);

    let orient = |pts: &[[f64; 2]], a: usize, b: usize, c: usize| robust::orient2d(c2(&pts[a]), c2(&pts[b]), c2(&pts[c]));
    let mut tris = vec![Tri {
        v: [n, n + 1, n + 2],
        n: [NONE; 3],
        alive: true,
    }];
    let mut free: Vec<usize> = Vec::new();
    let mut last = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);

    for &p in &order {
        // Walk.
        let mut t = last;
        let mut found = false;
        'walk: for _ in 0..(4 * tris.len() + 64) {
            let start = rng.gen_range(0..3);
            for k in 0..3 {
                let i = (start + k) % 3;
                let mut v = tris[t].v;
                v[i] = p;
                if orient(&pts, v[0], v[1], v[2]) < 0.0 {
                    t = tris[t].n[i];
                    if t == NONE {
                        return Err(Error::Degenerate("point outside the super-triangle".into()));
                    }
                    continue 'walk;
                }
            }
            found = true;
            break;
        }
        if !found {
            return Err(Error::Degenerate("point location did not terminate".into()));
        }

        let in_circle = |tris: &[Tri], t: usize| {
            let v = tris[t].v;
            robust::incircle(c2(&pts[v[0]]), c2(&pts[v[1]]), c2(&pts[v[2]]), c2(&pts[p])) > 0.0
        };
        let mut cavity = vec![t];
        let mut in_cavity = std::collections::HashSet::from([t]);
        let mut boundary = Vec::new();
        let mut head = 0;
        while head < cavity.len() {
            let t = cavity[head];
            head += 1;
            for i in 0..3 {
                let nb = tris[t].n[i];
                if nb != NONE && !in_cavity.contains(&nb) && in_circle(&tris, nb) {
                    in_cavity.insert(nb);
                    cavity.push(nb);
                } else if nb == NONE || !in_cavity.contains(&nb) {
                    boundary.push((t, i));
                }
            }
        }
        let created: Vec<([usize; 3], usize, usize, usize)> = boundary
            .iter()
            .map(|&(t, i)| {
                let mut v = tris[t].v;
                v[i] = p;
                (v, tris[t].n[i], t, i)
            })
            .collect();
        if created.iter().any(|(v, ..)| orient(&pts, v[0], v[1], v[2]) <= 0.0) {
            return Err(Error::Degenerate("cavity is not star-shaped".into()));
        }
        for &t in &cavity {
            tris[t].alive = false;
        }
        let mut ids = Vec::with_capacity(created.len());
        for (v, outside, _, i) in &created {
            let mut nn = [NONE; 3];
            nn[*i] = *outside;
            let tri = Tri {
                v: *v,
                n: nn,
                alive: true,
            };
            ids.push(match free.pop() {
                Some(slot) => {
                    tris[slot] = tri;
                    slot
                }
                None => {
                    tris.push(tri);
                    tris.len() - 1
                }
            });
        }
        let mut by_vertex: std::collections::HashMap<usize, (usize, usize)> = std::collections::HashMap::new();
        for (k, &(v, outside, old_t, i)) in created.iter().enumerate() {
            let id = ids[k];
            if outside != NONE {
                let slot = tris[outside]
                    .n
                    .iter()
                    .position(|&x| x == old_t)
                    .ok_or_else(|| Error::Degenerate("broken adjacency".into()))?;
                tris[outside].n[slot] = id;
            }
            for j in 0..3 {
                if j == i {
                    continue;
                }
                // Edge opposite v[j] joins p with the third vertex.
                let other = v[3 - i - j];
                match by_vertex.remove(&other) {
                    Some((o, oj)) => {
                        tris[id].n[j] = o;
                        tris[o].n[oj] = id;
                    }
                    None => {
                        by_vertex.insert(other, (id, j));
                    }
                }
            }
        }
        if !by_vertex.is_empty() {
            return Err(Error::Degenerate("unmatched cavity edges".into()));
        }
        free.extend(cavity);
        last = ids[0];
    }
    Ok(tris
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect())
}

/// Circumradius of a triangle in 3D; infinite when degenerate.
pub fn triangle_circumradius(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let (ab, ac, bc) = ((b - a).norm(), (c - a).norm(), (c - b).norm());
    let area2 = (b - a).cross(&(c - a)).norm();
    if area2 == 0.0 {
        f64::INFINITY
    } else {
        ab * ac * bc / (2.0 * area2)
    }
}

/// Circumradius of a tetrahedron; infinite when degenerate.
pub fn tetrahedron_circumradius(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    let (u, v, w) = (b - a, c - a, d - a);
    let det = u.dot(&v.cross(&w));
    if det == 0.0 {
        return f64::INFINITY;
    }
    let num = v.cross(&w) * u.norm_squared() + w.cross(&u) * v.norm_squared() + u.cross(&v) * w.norm_squared();
    (num / (2.0 * det)).norm()
}
