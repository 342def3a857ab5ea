//! Surface and tetrahedral meshes, their file formats, the embedding of a
//! fine surface into a coarse tet boundary, and the coarse-to-fine
//! prolongation operator.

pub mod bvh;
mod embed;
pub mod geometry;
pub mod io;
mod laplacian;
mod prolong;
mod surface;
mod tet;

pub use embed::{embed_surface, Embedding, EmbeddingMap};
pub use geometry::Vec3;
pub use io::{load_surface_mesh, load_tet_mesh, SurfaceFormat};
pub use laplacian::{LaplaceBeltrami, MAX_COTAN_WEIGHT};
pub use prolong::Prolongation;
pub use surface::SurfaceMesh;
pub use tet::{BoundaryFace, TetMesh};
