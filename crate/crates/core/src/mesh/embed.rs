use super::bvh::TriangleBvh;
use super::geometry::Vec3;
use super::{SurfaceMesh, TetMesh};
use crate::error::{Error, Result};

/// Host boundary face and barycentric weights of one fine vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embedding {
    pub face: usize,
    pub weights: [f64; 3],
    /// Distance from the fine vertex to its projection.
    pub distance: f64,
}

/// Barycentric embedding of a fine surface into the coarse mesh boundary.
#[derive(Debug, Clone)]
pub struct EmbeddingMap {
    entries: Vec<Embedding>,
}

impl EmbeddingMap {
    pub fn entries(&self) -> &[Embedding] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// (max, mean) projection distance.
    pub fn residual_stats(&self) -> (f64, f64) {
        let max = self.entries.iter().fold(0.0f64, |m, e| m.max(e.distance));
        let mean = self.entries.iter().map(|e| e.distance).sum::<f64>() / self.entries.len().max(1) as f64;
        (max, mean)
    }
}

/// Projects every fine vertex onto the nearest coarse boundary face.
pub fn embed_surface(fine: &SurfaceMesh, coarse: &TetMesh) -> Result<EmbeddingMap> {
    let faces: Vec<[usize; 3]> = coarse.boundary_faces().iter().map(|f| f.nodes).collect();
    if faces.is_empty() {
        return Err(Error::Validation("coarse mesh has no boundary faces".into()));
    }
    let bvh = TriangleBvh::new(coarse.nodes(), &faces);
    let entries = fine
        .vertices()
        .iter()
        .map(|p: &Vec3| {
            let hit = bvh.closest(p).expect("non-empty tree");
            Embedding {
                face: hit.triangle,
                weights: hit.bary,
                distance: hit.dist2.sqrt(),
            }
        })
        .collect();
    Ok(EmbeddingMap { entries })
}
