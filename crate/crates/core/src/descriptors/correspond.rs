//! Descriptor-guided nearest-neighbor correspondences.

use crate::error::{Error, Result};
use crate::mesh::bvh::TriangleBvh;
use crate::mesh::geometry::closest_point_on_triangle;
use crate::mesh::{SurfaceMesh, Vec3};
use crate::socp::SpringPoint;

use super::hks::HksField;
use super::knn::KdTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Point on the target surface.
    pub target: Vec3,
    /// Unit target normal, interpolated from vertex normals.
    pub normal: Vec3,
    pub triangle: usize,
    pub bary: [f64; 3],
    pub confidence: f64,
}

/// One correspondence per source vertex, indexed by vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    entries: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn entries(&self) -> &[Correspondence] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.entries.iter().map(|c| c.confidence).collect()
    }

    /// Number of entries with nonzero confidence.
    pub fn active(&self) -> usize {
        self.entries.iter().filter(|c| c.confidence > 0.0).count()
    }

    pub fn spring_points(&self) -> Vec<SpringPoint> {
        self.entries
            .iter()
            .enumerate()
            .map(|(vertex, c)| SpringPoint {
                vertex,
                target: c.target,
                normal: c.normal,
            })
            .collect()
    }
}

/// Spatial indices over a target surface, reusable across searches.
#[derive(Debug, Clone)]
pub struct TargetIndex {
    mesh: SurfaceMesh,
    tree: KdTree,
    bvh: TriangleBvh,
    vertex_triangles: Vec<Vec<usize>>,
}

impl TargetIndex {
    pub fn new(target: &SurfaceMesh) -> Result<Self> {
        if target.num_vertices() == 0 || target.num_triangles() == 0 {
            return Err(Error::Validation("target surface is empty".into()));
        }
        Ok(TargetIndex {
            mesh: target.clone(),
            tree: KdTree::new(target.vertices()),
            bvh: TriangleBvh::new(target.vertices(), target.triangles()),
            vertex_triangles: target.vertex_triangles(),
        })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    fn interpolated_normal(&self, tri: usize, bary: &[f64; 3]) -> Vec3 {
        let t = self.mesh.triangles()[tri];
        let vn = self.mesh.vertex_normals();
        let n = vn[t[0]] * bary[0] + vn[t[1]] * bary[1] + vn[t[2]] * bary[2];
        let len = n.norm();
        if len > 1e-12 {
            n / len
        } else {
            self.mesh.face_normal(tri)
        }
    }

    fn make(&self, tri: usize, point: Vec3, bary: [f64; 3], confidence: f64) -> Correspondence {
        Correspondence {
            target: point,
            normal: self.interpolated_normal(tri, &bary),
            triangle: tri,
            bary,
            confidence,
        }
    }

    /// Closest point on the target surface for every source position,
    /// all with confidence 1.
    pub fn closest_points(&self, source: &[Vec3]) -> CorrespondenceSet {
        let entries = source
            .iter()
            .map(|p| {
                let hit = self.bvh.closest(p).expect("target is nonempty");
                self.make(hit.triangle, hit.point, hit.bary, 1.0)
            })
            .collect();
        CorrespondenceSet { entries }
    }

    /// Ranks the `knn` Euclidean-nearest target vertices of each source
    /// position by HKS distance and projects the winner onto its incident
    /// triangles. Confidence is `exp(−d/σ)` with σ the median candidate HKS
    /// distance; values below `threshold` become zero. With `knn = 1` this is
    /// the plain closest-point search of [`TargetIndex::closest_points`].
    pub fn find(
        &self,
        source: &[Vec3],
        source_hks: &HksField,
        target_hks: &HksField,
        knn: usize,
        threshold: f64,
    ) -> Result<CorrespondenceSet> {
        if knn == 0 {
            return Err(Error::InvalidParameter("knn must be at least 1".into()));
        }
        if knn == 1 {
            return Ok(self.closest_points(source));
        }
        if source_hks.num_vertices() != source.len() {
            return Err(Error::Dimension {
                context: "find_correspondences: source descriptors",
                expected: source.len(),
                got: source_hks.num_vertices(),
            });
        }
        if target_hks.num_vertices() != self.mesh.num_vertices() {
            return Err(Error::Dimension {
                context: "find_correspondences: target descriptors",
                expected: self.mesh.num_vertices(),
                got: target_hks.num_vertices(),
            });
        }
        if source_hks.times().len() != target_hks.times().len() {
            return Err(Error::Dimension {
                context: "find_correspondences: descriptor length",
                expected: source_hks.times().len(),
                got: target_hks.times().len(),
            });
        }
        let knn = knn.min(self.mesh.num_vertices());
        let mut all_d = Vec::with_capacity(source.len() * knn);
        let mut best = Vec::with_capacity(source.len());
        for (i, p) in source.iter().enumerate() {
            let cands = self.tree.knn(p, knn);
            let mut pick = (f64::INFINITY, usize::MAX);
            for c in &cands {
                let d = source_hks.distance(i, target_hks, c.index);
                all_d.push(d);
                if d < pick.0 {
                    pick = (d, c.index);
                }
            }
            best.push(pick);
        }
        all_d.sort_by(f64::total_cmp);
        let sigma = all_d[all_d.len() / 2];
        let entries = source
            .iter()
            .zip(&best)
            .map(|(p, &(d, v))| {
                let mut w = if sigma > 0.0 { (-d / sigma).exp() } else { 1.0 };
                if w < threshold {
                    w = 0.0;
                }
                let verts = self.mesh.vertices();
                let (tri, point, bary) = self.vertex_triangles[v]
                    .iter()
                    .map(|&t| {
                        let [a, b, c] = self.mesh.triangles()[t];
                        let (q, bary) = closest_point_on_triangle(p, &verts[a], &verts[b], &verts[c]);
                        (t, q, bary)
                    })
                    .min_by(|x, y| (x.1 - p).norm_squared().total_cmp(&(y.1 - p).norm_squared()))
                    .unwrap_or_else(|| {
                        // Isolated vertex: fall back to the nearest surface point.
                        let hit = self.bvh.closest(p).expect("target is nonempty");
                        (hit.triangle, hit.point, hit.bary)
                    });
                self.make(tri, point, bary, w)
            })
            .collect();
        Ok(CorrespondenceSet { entries })
    }
}

/// One-shot wrapper around [`TargetIndex::find`].
pub fn find_correspondences(
    source: &SurfaceMesh,
    target: &SurfaceMesh,
    source_hks: &HksField,
    target_hks: &HksField,
    knn: usize,
    threshold: f64,
) -> Result<CorrespondenceSet> {
    TargetIndex::new(target)?.find(source.vertices(), source_hks, target_hks, knn, threshold)
}
