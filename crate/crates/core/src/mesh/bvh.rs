//! Axis-aligned bounding volume hierarchy over triangles for closest-point
//! queries.
//!
//! Equidistant triangles resolve to the lowest triangle index, so query
//! results do not depend on tree layout.

use super::geometry::{closest_point_on_triangle, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.lo[k] {
                self.lo[k] - p[k]
            } else if p[k] > self.hi[k] {
                p[k] - self.hi[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bbox: Aabb, start: usize, end: usize },
    Inner { bbox: Aabb, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub triangle: usize,
    pub point: Vec3,
    pub bary: [f64; 3],
    pub dist2: f64,
}

#[derive(Debug, Clone)]
pub struct TriangleBvh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl TriangleBvh {
    /// Builds the tree by median splits along the longest centroid extent.
    pub fn new(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Self {
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0)
            .collect();
        let mut bvh = TriangleBvh {
            vertices: vertices.to_vec(),
            triangles: triangles.to_vec(),
            order: (0..triangles.len()).collect(),
            nodes: Vec::new(),
        };
        if !triangles.is_empty() {
            bvh.build(0, triangles.len(), &centroids);
        }
        bvh
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let mut bbox = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &t in &self.order[start..end] {
            for &v in &self.triangles[t] {
                bbox.grow(&self.vertices[v]);
            }
            cbox.grow(&centroids[t]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bbox, start, end });
            return id;
        }
        let ext = cbox.hi - cbox.lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        self.order[start..end].sort_by(|&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let mid = start + (end - start) / 2;
        self.nodes.push(Node::Leaf { bbox, start, end });
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        self.nodes[id] = Node::Inner { bbox, left, right };
        id
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Closest point on any triangle to `p`; `None` only for an empty tree.
    pub fn closest(&self, p: &Vec3) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestHit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if let Some(b) = &best {
                if node.bbox().dist2(p) > b.dist2 {
                    continue;
                }
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let [a, b, c] = self.triangles[t];
                        let (q, bary) = closest_point_on_triangle(
                            p,
                            &self.vertices[a],
                            &self.vertices[b],
                            &self.vertices[c],
                        );
                        let d2 = (q - p).norm_squared();
                        let better = match &best {
                            None => true,
                            Some(h) => d2 < h.dist2 || (d2 == h.dist2 && t < h.triangle),
                        };
                        if better {
                            best = Some(ClosestHit {
                                triangle: t,
                                point: q,
                                bary,
                                dist2: d2,
                            });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bbox().dist2(p);
                    let dr = self.nodes[*right].bbox().dist2(p);
                    // Visit the nearer child first.
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }
}

/// Exhaustive closest-triangle scan with the same tie-breaking as the tree.
pub fn closest_brute_force(vertices: &[Vec3], triangles: &[[usize; 3]], p: &Vec3) -> Option<ClosestHit> {
    let mut best: Option<ClosestHit> = None;
    for (t, tri) in triangles.iter().enumerate() {
        let (q, bary) = closest_point_on_triangle(p, &vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
        let d2 = (q - p).norm_squared();
        if best.as_ref().is_none_or(|h| d2 < h.dist2) {
            best = Some(ClosestHit {
                triangle: t,
                point: q,
                bary,
                dist2: d2,
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force_on_random_soup() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = Vec::new();
        let mut t = Vec::new();
        for i in 0..300 {
            let c = Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0;
            for _ in 0..3 {
                v.push(c + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.3);
            }
            t.push([3 * i, 3 * i + 1, 3 * i + 2]);
        }
        let bvh = TriangleBvh::new(&v, &t);
        for _ in 0..200 {
            let p = Vec3::new(rng.random(), rng.random(), rng.random()) * 5.0 - Vec3::repeat(0.5);
            let a = bvh.closest(&p).unwrap();
            let b = closest_brute_force(&v, &t, &p).unwrap();
            assert_eq!(a.triangle, b.triangle);
            assert_eq!(a.dist2, b.dist2);
        }
    }
}
