//! Static k-d tree for exact k-nearest-neighbor queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Candidate ordered by squared distance, then by point index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

/// Spatial index over a point list. Query results are ordered by distance,
/// ties broken by ascending point index, and match an exhaustive scan.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

impl NnIndex {
    pub fn new(points: &[Point3]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
            root: 0,
        };
        if !points.is_empty() {
            index.root = index.build(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let slice = &self.order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[start + mid]][axis];
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes.push(Node::Split {
            axis,
            value,
            left,
            right,
        });
        self.nodes.len() - 1
    }

    /// Indices of the `k` nearest points, closest first.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<usize>> {
        Ok(self
            .knn_with_distances(query, k)?
            .into_iter()
            .map(|(i, _)| i)
            .collect())
    }

    /// `(index, distance)` pairs of the `k` nearest points, closest first.
    pub fn knn_with_distances(&self, query: &Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::invalid("knn: k must be positive"));
        }
        if self.points.is_empty() {
            return Err(Error::invalid("knn: index is empty"));
        }
        if k > self.points.len() {
            return Err(Error::invalid(format!(
                "knn: k = {k} exceeds {} indexed points",
                self.points.len()
            )));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(found
            .into_iter()
            .map(|c| (c.index, c.dist2.sqrt()))
            .collect())
    }

    fn search(&self, node: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let cand = Candidate {
                        dist2: (self.points[index] - q).norm_squared(),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if heap.peek().is_some_and(|worst| cand < *worst) {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // Equal distances must still be visited for the index tie-break.
                let must_visit = heap.len() < k
                    || heap.peek().is_some_and(|worst| diff * diff <= worst.dist2);
                if must_visit {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(points: &[Point3], q: &Point3, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn small_line() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
        ];
        let idx = NnIndex::new(&pts);
        assert_eq!(idx.knn(&Point3::new(0.9, 0.0, 0.0), 2).unwrap(), vec![1, 0]);
        assert_eq!(idx.knn(&pts[2], 1).unwrap(), vec![2]);
    }

    #[test]
    fn errors() {
        let idx = NnIndex::new(&[Point3::origin()]);
        assert!(idx.knn(&Point3::origin(), 0).is_err());
        assert!(idx.knn(&Point3::origin(), 2).is_err());
        assert!(NnIndex::new(&[]).knn(&Point3::origin(), 1).is_err());
    }

    #[test]
    fn ties_resolved_by_index() {
        // Lattice with many equal distances.
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for l in 0..3 {
                    pts.push(Point3::new(i as f64, j as f64, l as f64));
                }
            }
        }
        let idx = NnIndex::new(&pts);
        for q in [Point3::new(2.0, 2.0, 1.0), Point3::new(2.5, 2.5, 1.0)] {
            for k in [1, 4, 7, 19] {
                assert_eq!(idx.knn(&q, k).unwrap(), brute_force(&pts, &q, k));
            }
        }
    }

    #[test]
    fn two_hundred_random_points_k7() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..200)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let idx = NnIndex::new(&pts);
        for _ in 0..50 {
            let q = Point3::new(rng.gen(), rng.gen(), rng.gen());
            assert_eq!(idx.knn(&q, 7).unwrap(), brute_force(&pts, &q, 7));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn matches_exhaustive_search(
            coords in prop::collection::vec((-5i32..5, -5i32..5, -5i32..5), 1..120),
            q in (-6.0f64..6.0, -6.0f64..6.0, -6.0f64..6.0),
            k in 1usize..12,
        ) {
            // Integer coordinates force plenty of exact ties.
            let pts: Vec<Point3> = coords
                .iter()
                .map(|&(x, y, z)| Point3::new(x as f64 * 0.5, y as f64 * 0.5, z as f64 * 0.5))
                .collect();
            let k = k.min(pts.len());
            let q = Point3::new(q.0, q.1, q.2);
            let idx = NnIndex::new(&pts);
            prop_assert_eq!(idx.knn(&q, k).unwrap(), brute_force(&pts, &q, k));
        }
    }
}
