use std::collections::{BTreeMap, HashMap};

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::{Point3, TriMesh, Vec3};

/// Boundary loops longer than this are left open by [`fill_holes`].
pub const MAX_FILL_LOOP: usize = 64;

/// Undirected edges of a triangle mesh with their incident faces.
#[derive(Debug, Clone)]
pub struct EdgeMap {
    /// Sorted `(min, max)` vertex pairs, in first-seen order.
    pub edges: Vec<[usize; 2]>,
    pub faces: Vec<Vec<usize>>,
    lookup: HashMap<(usize, usize), usize>,
}

impl EdgeMap {
    pub fn new(mesh: &TriMesh) -> Self {
        let mut map = Self {
            edges: Vec::new(),
            faces: Vec::new(),
            lookup: HashMap::with_capacity(mesh.faces.len() * 3 / 2 + 1),
        };
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *map.lookup.entry(key).or_insert_with(|| {
                    map.edges.push([key.0, key.1]);
                    map.faces.push(Vec::new());
                    map.edges.len() - 1
                });
                map.faces[e].push(fi);
            }
        }
        map
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn index(&self, a: usize, b: usize) -> Option<usize> {
        self.lookup.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn is_boundary(&self, e: usize) -> bool {
        self.faces[e].len() == 1
    }

    pub fn check_manifold(&self) -> Result<()> {
        match self.faces.iter().position(|f| f.len() > 2) {
            Some(e) => Err(Error::Topology(format!(
                "edge {:?} has {} incident faces",
                self.edges[e],
                self.faces[e].len()
            ))),
            None => Ok(()),
        }
    }
}

/// V - E + F over the vertices referenced by faces.
pub fn euler_characteristic(mesh: &TriMesh) -> i64 {
    let mut used = vec![false; mesh.vertices.len()];
    for f in &mesh.faces {
        for &v in f {
            used[v] = true;
        }
    }
    let v = used.iter().filter(|&&u| u).count() as i64;
    v - EdgeMap::new(mesh).len() as i64 + mesh.faces.len() as i64
}

/// Boundary loops as vertex cycles. Each loop follows the reverse of the
/// direction its edges have in their faces, so a fan over it matches the
/// mesh orientation.
pub fn boundary_loops(mesh: &TriMesh) -> Result<Vec<Vec<usize>>> {
    let edges = EdgeMap::new(mesh);
    edges.check_manifold()?;
    // Directed boundary half-edge b -> a for every face edge a -> b on the boundary.
    let mut next: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut count = 0usize;
    for (e, faces) in edges.faces.iter().enumerate() {
        if faces.len() != 1 {
            continue;
        }
        let f = mesh.faces[faces[0]];
        let [u, v] = edges.edges[e];
        let forward = (0..3).any(|k| f[k] == u && f[(k + 1) % 3] == v);
        let (a, b) = if forward { (u, v) } else { (v, u) };
        next.entry(b).or_default().push(a);
        count += 1;
    }
    for targets in next.values_mut() {
        targets.reverse();
    }
    let mut loops = Vec::new();
    let mut used = 0usize;
    while used < count {
        let start = *next.iter().find(|(_, t)| !t.is_empty()).map(|(s, _)| s).unwrap_or(&0);
        let mut cycle = vec![start];
        let mut cur = start;
        loop {
            let to = next
                .get_mut(&cur)
                .and_then(|t| t.pop())
                .ok_or_else(|| Error::Topology("boundary does not form closed loops".into()))?;
            used += 1;
            if to == start {
                break;
            }
            cycle.push(to);
            cur = to;
        }
        loops.push(cycle);
    }
    Ok(loops)
}

#[derive(Debug, Clone)]
pub struct FillReport {
    pub mesh: TriMesh,
    pub filled: usize,
    /// Lengths of loops left open because they exceed [`MAX_FILL_LOOP`].
    pub open_loops: Vec<usize>,
}

/// Fills every boundary loop of at most [`MAX_FILL_LOOP`] edges with a fan
/// around a new vertex at the loop centroid. Existing faces are kept as is.
pub fn fill_holes(mesh: &TriMesh) -> Result<TriMesh> {
    Ok(fill_holes_with_report(mesh)?.mesh)
}

pub fn fill_holes_with_report(mesh: &TriMesh) -> Result<FillReport> {
    let loops = boundary_loops(mesh)?;
    let mut out = mesh.clone();
    let mut filled = 0;
    let mut open_loops = Vec::new();
    for cycle in loops {
        if cycle.len() > MAX_FILL_LOOP {
            open_loops.push(cycle.len());
            continue;
        }
        let c = cycle.iter().map(|&v| mesh.vertices[v].coords).sum::<Vec3>() / cycle.len() as f64;
        let center = out.vertices.len();
        out.vertices.push(Point3::from(c));
        for k in 0..cycle.len() {
            out.faces.push([cycle[k], cycle[(k + 1) % cycle.len()], center]);
        }
        filled += 1;
    }
    if !open_loops.is_empty() {
        warn!("left {} boundary loop(s) open (lengths {:?})", open_loops.len(), open_loops);
    }
    Ok(FillReport {
        mesh: out,
        filled,
        open_loops,
    })
}

/// Loop subdivision, `iterations` times.
pub fn loop_subdivide(mesh: &TriMesh, iterations: usize) -> Result<TriMesh> {
    let mut m = mesh.clone();
    for _ in 0..iterations {
        m = loop_once(&m)?;
    }
    Ok(m)
}

fn loop_once(mesh: &TriMesh) -> Result<TriMesh> {
    let edges = EdgeMap::new(mesh);
    edges.check_manifold()?;
    let nv = mesh.vertices.len();
    let p = &mesh.vertices;

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let mut boundary_nb: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (e, &[a, b]) in edges.edges.iter().enumerate() {
        neighbors[a].push(b);
        neighbors[b].push(a);
        if edges.is_boundary(e) {
            boundary_nb[a].push(b);
            boundary_nb[b].push(a);
        }
    }

    let mut vertices = Vec::with_capacity(nv + edges.len());
    for v in 0..nv {
        let nb = &neighbors[v];
        let pos = match boundary_nb[v].len() {
            0 if nb.is_empty() => p[v],
            0 => {
                let n = nb.len() as f64;
                let t = 0.375 + 0.25 * (2.0 * std::f64::consts::PI / n).cos();
                let beta = (0.625 - t * t) / n;
                let sum = nb.iter().map(|&u| p[u].coords).sum::<Vec3>();
                Point3::from(p[v].coords * (1.0 - n * beta) + sum * beta)
            }
            2 => {
                let [a, b] = [boundary_nb[v][0], boundary_nb[v][1]];
                Point3::from(p[v].coords * 0.75 + (p[a].coords + p[b].coords) * 0.125)
            }
            // Pinched boundary vertex: keep it fixed like a crease corner.
            _ => p[v],
        };
        vertices.push(pos);
    }
    for (e, &[a, b]) in edges.edges.iter().enumerate() {
        let fs = &edges.faces[e];
        let pos = if fs.len() == 2 {
            let opp = |f: usize| {
                let face = mesh.faces[f];
                face.into_iter().find(|&x| x != a && x != b).unwrap_or(a)
            };
            let (c, d) = (opp(fs[0]), opp(fs[1]));
            (p[a].coords + p[b].coords) * 0.375 + (p[c].coords + p[d].coords) * 0.125
        } else {
            (p[a].coords + p[b].coords) * 0.5
        };
        vertices.push(Point3::from(pos));
    }

    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for f in &mesh.faces {
        let mid = |i: usize, j: usize| nv + edges.index(f[i], f[j]).unwrap_or(0);
        let (ab, bc, ca) = (mid(0, 1), mid(1, 2), mid(2, 0));
        faces.push([f[0], ab, ca]);
        faces.push([ab, f[1], bc]);
        faces.push([ca, bc, f[2]]);
        faces.push([ab, bc, ca]);
    }
    Ok(TriMesh { vertices, faces })
}

/// Regular icosahedron inscribed in the unit sphere, outward-oriented.
pub fn icosahedron() -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|v| Point3::from(Vec3::new(v[0], v[1], v[2]).normalize())).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriMesh { vertices, faces }
}

/// Icosahedron refined `level` times by midpoint splitting, with every
/// vertex projected onto the unit sphere.
pub fn icosphere(level: usize) -> TriMesh {
    let mut m = icosahedron();
    for _ in 0..level {
        let edges = EdgeMap::new(&m);
        let nv = m.vertices.len();
        let mut vertices = m.vertices.clone();
        for &[a, b] in &edges.edges {
            vertices.push(Point3::from(((m.vertices[a].coords + m.vertices[b].coords) * 0.5).normalize()));
        }
        let mut faces = Vec::with_capacity(m.faces.len() * 4);
        for f in &m.faces {
            let mid = |i: usize, j: usize| nv + edges.index(f[i], f[j]).unwrap_or(0);
            let (ab, bc, ca) = (mid(0, 1), mid(1, 2), mid(2, 0));
            faces.extend([[f[0], ab, ca], [ab, f[1], bc], [ca, bc, f[2]], [ab, bc, ca]]);
        }
        m = TriMesh { vertices, faces };
    }
    m
}
