//! Sparse storage and factorization used by assembly, condensation and the
//! eigensolver. Dense work goes straight to `nalgebra`.

mod ldl;
mod sparse;

pub use ldl::{rcm_ordering, LdlFactor};
pub use sparse::CsrMatrix;
