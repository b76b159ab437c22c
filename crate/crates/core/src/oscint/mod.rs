//! Oscillatory integrals: adaptive quadrature, test functions on the line
//! and the half-line, and the normal operators they are fed to.

mod functions;
mod normal;
mod quad;

pub use functions::{
    fourier_transform, half_line_ft, hermite_poly, hermite_value, line_space, measure_decay, Analytic, AnalyticTerm, DecayCertificate,
    DecayFit, HalfLineFn, SchwartzFn, CERT_ORDER,
};
pub use quad::{integrate, integrate_panels, integrate_vec, QuadResult, Tolerance, VecQuadResult, ROUNDOFF};
pub use normal::{
    apply_normal_op, apply_truncated_op, Mode, NormalOperatorSpec, QuadratureSpec, SampledFunction, DIRECT_DECAY, HALF_LINE_DECAY,
    MAX_RADIUS,
};
