//! Shared finite-element infrastructure: triangle quadrature rules, P1/P2
//! degree-of-freedom maps with optional periodic identification, and assembly
//! of the mass/diffusion/advection forms with constraint handling.

pub mod assemble;
pub mod dofmap;
pub mod quadrature;

pub use assemble::{
    append_zero_mean, apply_dirichlet, assemble_bilinear, assemble_cell_rhs, assemble_load,
    eval_basis, mean_vector, BasisEval, Form, MatrixCoefficient, ScalarCoefficient, TriGeom,
    VectorCoefficient,
};
pub use dofmap::{DofMap, ElementKind};
pub use quadrature::{edge_gauss4, tri_degree5, QuadPoint, TRI_DEGREE2};
