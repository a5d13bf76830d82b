//! Padé time stepping for fractional powers `A_h^(-α)` of finite element
//! discretisations of `-Δ`, with a spectral reference solution and the
//! experiment harness behind the `fracstep` binary.

pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod pade;
pub mod scalar;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use fem::{
    assemble_1d, assemble_1d_uniform, assemble_2d_tensor, data_case, l2_project, l2_project_case,
    m_inner, m_norm, DataCase, DiscreteOperator, GridFunction,
};
pub use linalg::SolverPolicy;
pub use mesh::{build_geometric_mesh, build_graded_spatial_mesh, build_uniform_mesh, TimeMesh};
pub use pade::{pade_coefficients, pade_error_bound_check, PadeRational};
pub use scalar::{exact_power, scalar_error_sweep, scalar_grm, scalar_um, ScalarRunConfig, Scheme};
pub use spectral::{eig_1d, eig_2d_tensor, SpectralDecomposition};
pub use stepper::{
    apply_pade_step, estimate_spectral_bounds, run_grm, run_um, solve_spd, SpectralBounds,
    StepperConfig,
};
