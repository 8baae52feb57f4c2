//! Numerical machinery for degenerate Kolmogorov-Fokker-Planck equations:
//! Galilean group geometry, controllability and attainable sets, Harnack
//! chains, a desk-scale finite-difference solver with rough coefficients,
//! closed-form and Monte-Carlo reference kernels, and empirical verification
//! of the Harnack inequality and the strong maximum principle.

pub mod chain;
pub mod controllability;
pub mod error;
pub mod fundamental;
pub mod group;
pub mod quad;
pub mod solver;
pub mod verification;

pub use chain::{build_chain, cover_compact, derive_h, HarnackChain};
pub use controllability::{
    attainable_membership, attainable_unit_box, integrate_curve, kalman_rank,
    minimal_energy_control, Attainability, ControlCurve, KolmogorovStructure,
};
pub use error::{CoreError, Result};
pub use fundamental::{density_estimate, gamma_l0, langevin_mc, GaussianKernelParams};
pub use group::{compose, dilate, inverse, BoxKind, BoxSpec, GroupPoint, HarnackConstants};
pub use solver::{solve, sup_inf_on_box, weak_residual, GridSpec, OperatorSpec, SolutionField};
pub use verification::{
    empirical_m, geometric_harnack_check, harnack_ratio, pullback_operator,
    strong_max_principle_check, HarnackReport,
};
