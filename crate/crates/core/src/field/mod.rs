//! Random fields `f(x) = ∫₀¹ V(B^x(t)) dB^x(t)` over flat parameter spaces,
//! their excursion sets, and the kinematic-formula right-hand sides.
//!
//! `B^x(t) = Σ_k e_k(x) W_k(t)` with a finite cosine/sine basis, so
//! `Cov(B^x(s), B^y(t)) = (s ∧ t)·C(x, y)` holds exactly on the grid.

mod ec;
mod gkf;
mod sim;
mod space;

pub use ec::{
    ec_mc, euler_char, excursion_mc, half_boundary_length, volume_fraction, EcEstimate, ExcursionStats, FieldStudy,
    MIN_REPS,
};
pub use gkf::{
    check_assumptions, crofton_from_parts, crofton_lkc_rhs, gkf_from_parts, gkf_rhs, AssumptionReport, RhsEstimate,
    RhsStudy,
};
pub use sim::{simulate_field, FieldSample, FieldSimulator, FIELD_FORMAT};
pub use space::{flag_coefficient, lkc, unit_ball_volume, ParamSpace, SpatialCov, Wave};
