//! Dense matrices, probability primitives, the adaptive-moment optimizer and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
mod matrix;
mod prob;

pub use adam::{AdamHyper, OptimizerState};
pub use gradcheck::{check_gradient, GradientCheck, RELATIVE_ERROR_FLOOR};
pub use matrix::{dot, norm, squared_distance, Matrix};
pub use prob::{
    argmax, cosine_similarity, entropy, kl_divergence, softmax, validate_prob_row, ProbRow,
    PROB_FLOOR, ROW_SUM_TOLERANCE,
};
pub(crate) use prob::{d_ln, d_p_ln_p, floored_ln, kl_unchecked, softmax_backward, softmax_in_place};
