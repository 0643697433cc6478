//! Quantum Fisher information and the Bures metric for parameterized
//! density-matrix families, including their behaviour where the rank of the
//! state changes.
//!
//! Start from a [`StateFamily`], build a [`DerivativeBundle`] at a point with
//! [`evaluate_bundle`], then ask for [`qfi_spectral`], [`continuous_qfi`],
//! [`jump`] and friends.

pub mod discontinuity;
pub mod error;
pub mod extrapolate;
pub mod families;
pub mod family;
pub mod hermitian;
pub mod metrology;

pub use discontinuity::{
    continuity_verdict, directional_limit, directional_taylor_zeroth, jump, jump_confirmed,
    regularization_limit, regularize, track_branch_curvatures, vanishing_branch_hessians,
    BranchHessian, ContinuityVerdict, DirectionVector, DirectionalLimit, JumpReport,
    RegularizationTrace,
};
pub use error::{Error, Result};
pub use families::{builtin_family, BUILTIN_FAMILIES};
pub use family::{
    evaluate, evaluate_bundle, reparametrize, reparametrize_as, CoordinateMap, DerivativeBundle,
    Domain, Family, FiniteDifferenceConfig, ParameterPoint, Smoothness, StateFamily,
};
pub use hermitian::{eigh, CMatrix, DensityMatrix, EigenDecomposition, DEFAULT_TOL_ZERO};
pub use metrology::{
    bures_distance_sq, continuous_qfi, cramer_rao_lower_bound, kernel_hessian_sum,
    kernel_hessian_sum_direct, numeric_bures_metric, qfi_from_sld, qfi_spectral, sld,
    truncated_metric, uhlmann_fidelity, CramerRaoBound, MetricMatrix, MetricRole, SldSet,
};
