//! Regularized phase `*Phi` and the regular SG phase conditions P1 to P3,
//! with uniformity over base points and a `(k, K)` calibration search.

mod conditions;
mod cutoff;
mod phase;

pub use conditions::{
    calibrate, check_uniformity, phase_constants, verify_p1, verify_p2, verify_p3, BaseSamples, Bound, Certificate, Margins, P1Entry,
    P2Bounds, P3Bound, PhaseConstants, Spread, UniformityReport, SEARCH_STEPS, SPREAD_ZERO,
};
pub use cutoff::Cutoff;
pub use phase::{build_star_phi, slot, RegularizedPhase, SgGrid, ORDER_BOUND};
