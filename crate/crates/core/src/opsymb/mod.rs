//! Operator-valued symbol estimates for the normal-direction operators.
//!
//! The operator `A_n` at a frozen base point `(x', xi')` is conjugated by
//! the unitary dilation `kappa_<xi'>` and its Schwartz seminorms are tracked
//! along a ladder of `<xi'>` rungs. Growth exponents are obtained by log-log
//! regression and compared with the order of the amplitude.

mod family;
mod group;
mod pairing;

pub use family::{
    certify_symbol_orders, conjugated_family, derivative_indices, estimate_symbol_order, integrand_derivative, FamilyConfig,
    FamilySweep, OrderFit, ORDER_SLACK,
};
pub use group::{apply_group_action, schwartz_seminorm, seminorm_system, GroupAction, SeminormGrid};
pub use pairing::{check_lemma_structure, lemma_amplitude, transpose_check, LemmaReport, TransposeReport, LEMMA_SLACK};
