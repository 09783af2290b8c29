//! Exact computations on positively graded DG manifolds presented as bundles
//! of curved L-infinity[1] algebras.

pub mod atiyah;
pub mod dgmod;
pub mod gen;
pub mod graded;
pub mod hochschild;
pub mod ladder;
pub mod linalg;
pub mod linfty;
pub mod manifold;
pub mod poly;
pub mod scalar;
pub mod series;
pub mod signs;
pub mod tensors;
