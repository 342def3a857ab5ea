//! Synthetic beam meshes for the twist experiments: a structured coarse tet
//! beam, a fine triangulated surface of the same box, and twisted copies of
//! the surface.
//!
//! The beam spans `[−W/2, W/2]² × [−H/2, H/2]`. A twist by angle `θ` rotates
//! the cross-section at height `z` about the z axis by
//! `θ (z + H/2) / H`, so the bottom face stays fixed and the top face turns
//! by the full angle.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, TetMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub width: f64,
    pub height: f64,
    /// Coarse cells across the width.
    pub coarse_xy: usize,
    /// Coarse cells along the height.
    pub coarse_z: usize,
    /// Fine surface cells across the width.
    pub fine_xy: usize,
    /// Fine surface cells along the height.
    pub fine_z: usize,
}

impl BeamSpec {
    /// A `1 × 1 × 4` beam with `r` coarse cells across. At `r = 4` this gives
    /// 1536 tets and a 14400-triangle surface.
    pub fn with_resolution(r: usize) -> Self {
        BeamSpec {
            width: 1.0,
            height: 4.0,
            coarse_xy: r,
            coarse_z: 4 * r,
            fine_xy: 5 * r,
            fine_z: 20 * r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidParameter("beam dimensions must be positive".into()));
        }
        if self.coarse_xy < 1 || self.coarse_z < 1 || self.fine_xy < 1 || self.fine_z < 1 {
            return Err(Error::InvalidParameter("beam cell counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn num_tets(&self) -> usize {
        6 * self.coarse_xy * self.coarse_xy * self.coarse_z
    }

    pub fn num_triangles(&self) -> usize {
        2 * (2 * self.fine_xy * self.fine_xy + 4 * self.fine_xy * self.fine_z)
    }

    fn lattice(&self, i: usize, j: usize, k: usize, nxy: usize, nz: usize) -> Vec3 {
        Vec3::new(
            self.width * (i as f64 / nxy as f64 - 0.5),
            self.width * (j as f64 / nxy as f64 - 0.5),
            self.height * (k as f64 / nz as f64 - 0.5),
        )
    }
}

/// Structured tet beam, six Kuhn tets per cube.
pub fn coarse_beam(spec: &BeamSpec) -> Result<TetMesh> {
    spec.validate()?;
    let (n, nz) = (spec.coarse_xy, spec.coarse_z);
    let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=n {
            for i in 0..=n {
                nodes.push(spec.lattice(i, j, k, n, nz));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(spec.num_tets());
    for k in 0..nz {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [id(i, j, k), 0, 0, 0];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[s + 1] = id(c[0], c[1], c[2]);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    TetMesh::new(nodes, tets)
}

/// Triangulated surface of the beam box with outward orientation.
pub fn fine_beam(spec: &BeamSpec) -> Result<SurfaceMesh> {
    spec.validate()?;
    let (n, nz) = (spec.fine_xy, spec.fine_z);
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(spec.num_triangles());
    let mut vid = |c: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(c).or_insert_with(|| {
            vertices.push(spec.lattice(c[0], c[1], c[2], n, nz));
            vertices.len() - 1
        })
    };
    // (fixed axis, fixed value, outward sign); the other two axes span the face.
    let faces = [(2, 0, -1.0), (2, nz, 1.0), (0, 0, -1.0), (0, n, 1.0), (1, 0, -1.0), (1, n, 1.0)];
    for (axis, value, sign) in faces {
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let extent = |ax: usize| if ax == 2 { nz } else { n };
        for v in 0..extent(b) {
            for u in 0..extent(a) {
                let corner = |du: usize, dv: usize| {
                    let mut c = [0; 3];
                    c[axis] = value;
                    c[a] = u + du;
                    c[b] = v + dv;
                    c
                };
                let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                let q = q.map(|c| vid(c, &mut vertices));
                for mut t in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
                    let nrm = (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]]));
                    if nrm[axis] * sign < 0.0 {
                        t.swap(1, 2);
                    }
                    triangles.push(t);
                }
            }
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Applies the linear twist of `angle` radians to `points`.
pub fn twist_points(spec: &BeamSpec, points: &[Vec3], angle: f64) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| {
            let a = angle * (p.z + 0.5 * spec.height) / spec.height;
            let (s, c) = a.sin_cos();
            Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
        })
        .collect()
}

/// Frames `1..=frames` of a twist reaching `twist_degrees` at the last frame.
pub fn twist_frames(spec: &BeamSpec, surface: &SurfaceMesh, twist_degrees: f64, frames: usize) -> Result<Vec<SurfaceMesh>> {
    if frames < 1 {
        return Err(Error::InvalidParameter("need at least one frame".into()));
    }
    (1..=frames)
        .map(|j| {
            let angle = twist_degrees.to_radians() * j as f64 / frames as f64;
            surface.with_vertices(twist_points(spec, surface.vertices(), angle))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let spec = BeamSpec::with_resolution(4);
        let coarse = coarse_beam(&spec).unwrap();
        assert_eq!(coarse.num_tets(), 1536);
        let fine = fine_beam(&spec).unwrap();
        assert_eq!(fine.num_triangles(), 14400);
        assert!(fine.is_closed());
        // Roundoff from summing 14400 signed tetra volumes.
        assert!((fine.signed_volume() - 4.0).abs() < 1e-10);
        assert!((coarse.total_volume() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_twist_is_identity() {
        let spec = BeamSpec::with_resolution(2);
        let fine = fine_beam(&spec).unwrap();
        let frames = twist_frames(&spec, &fine, 0.0, 1).unwrap();
        assert_eq!(frames[0].vertices(), fine.vertices());
    }
}
