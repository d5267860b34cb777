//! Accessibility and controllability rank conditions for the statistical
//! linearization of control-affine SDEs.
//!
//! The symbolic side (polynomial vector fields, lifted brackets on
//! mean/covariance space, bracket saturation, biaffine closed forms) is
//! exact over the rationals. The numeric side integrates the mean/covariance
//! ODE, evaluates the Lyapunov closed form and runs Euler-Maruyama Monte
//! Carlo for cross-validation.

pub mod biaffine;
pub mod cli;
pub mod error;
pub mod field;
pub mod lift;
pub mod linalg;
pub mod poly;
pub mod rank;
pub mod rational;
pub mod simulate;
pub mod spec_file;
pub mod system;

pub use error::{Error, Result};
pub use field::{ad_iter, lie_bracket, PolyMatrixMap, PolyVectorField};
pub use lift::{
    eval_lifted, lift_control, lift_drift, lifted_bracket, lifted_dim, phi_p, vectorize,
    LiftedField, StatePoint, SymPolyMatrix, TangentValue,
};
pub use linalg::{exact_rank, numerical_rank, QMatrix};
pub use poly::{Monomial, Polynomial};
pub use rank::{
    check_condition_1, check_condition_2, check_hormander_lifted, check_rank_at_state, saturate,
    BracketMode, CheckOptions, ConditionId, RankReport, Verdict,
};
pub use rational::{parse_rational, Rational};
pub use simulate::{
    empirical_accessibility, euler_maruyama, genericity_experiment, integrate_statlin,
    lyapunov_closed_form, CompiledSystem, ControlSignal, SimulationResult,
};
pub use system::ControlAffineSystem;
