//! Heat kernel signatures and descriptor-guided correspondence search.

mod correspond;
mod hks;
pub mod knn;
mod spectral;

pub use correspond::{find_correspondences, Correspondence, CorrespondenceSet, TargetIndex};
pub use hks::{default_times, hks, HksField};
pub use knn::{knn_brute_force, KdTree, Neighbor};
pub use spectral::{spectral_basis, SpectralBasis};
