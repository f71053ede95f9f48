//! Matrix inequalities: affine parametric forms for the solver and numeric
//! certificate matrices for audits.

mod builders;
mod certificates;
mod form;
mod problem;

pub use builders::{
    build_data_lmi, build_model_lmi, build_model_lmi_with, data_blocks, DataLmiVars, DesignIneqInputs,
    ModelGainBlock, ModelLmiVars,
};
pub use certificates::{
    build_mi_with_d, build_mi_without_d, find_petersen_multiplier, petersen_certificate_matrix, petersen_lhs,
};
pub use form::{AffineSymmetricForm, Block};
pub use problem::{LinearEquality, MatVar, MaxDetProblem, SymMatVar, Variables};
