//! Data-driven state-feedback design for single-input discrete-time bilinear
//! systems `x⁺ = A x + B u + D x u`, with a certified ellipsoidal region of
//! attraction.
//!
//! The pipeline runs one offline experiment ([`experiment`]), assembles the
//! design inequalities ([`lmi`]), solves a determinant-maximization problem
//! ([`solver`]) and checks the resulting certificate by sampling
//! ([`verify`]). A model-based baseline using the true matrices is available
//! for comparison.

// `!(x > 0.0)` style comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_loop;
pub mod design;
pub mod ellipsoid;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod lmi;
pub mod solver;
pub mod system;
pub mod verify;

pub use closed_loop::{closed_loop_matrix_data, nd_matrix, ClosedLoopData, NdEvaluator};
pub use design::{
    best_design, default_eps1_grid, design_data_based, design_model_based, sweep_eps1, DesignConfig,
    DesignResult, Provenance, SweepRow, SweepTable, SweepTarget,
};
pub use ellipsoid::{sample_ellipsoid, sample_rng, Ellipsoid, SampleMode, SampleRng};
pub use error::{Error, Result};
pub use experiment::{diagnose, run_experiment, run_seeded_experiment, DataDiagnostics, DataRecord};
pub use linalg::{Mat, Vector};
pub use lmi::{AffineSymmetricForm, MaxDetProblem};
pub use solver::{check_solution, solve, Solution, SolveStatus, SolverOptions};
pub use system::{delta_from_system, BilinearSystem, EXAMPLE_DELTA, EXAMPLE_T};
pub use verify::{verify_all, verify_basin, verify_decrease, verify_robust, VerificationReport, VerifyConfig};
