//! Diffusion tensors, penalty parameters, local FPM matrices and the global
//! capacity/diffusion operators.

mod diagnostics;
mod global;
mod local;
mod tensor;

pub use diagnostics::{dense_min_eigenvalue, estimate_min_eigenvalue, OperatorDiagnostics, DENSE_EIGEN_LIMIT};
pub use global::{
    assemble_global, compute_eta, weighted_eta, AssemblyOptions, GlobalOperators, PenaltyField,
};
pub use local::{
    facet_blocks, internal_boundary_matrix, point_capacity_matrix, point_diffusion_matrix, FacetBlock, FacetBlocks,
};
pub use tensor::{build_diffusion_tensor, DiffusionTensorField};
