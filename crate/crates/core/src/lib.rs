//! Modal participation analysis of linear and smooth nonlinear autonomous
//! systems near an equilibrium.
//!
//! The crate covers
//!
//! * [`eigensystem`]: eigenvalues with biorthogonal left/right eigenvectors,
//! * [`participation`]: classic, averaging-based and state-in-mode
//!   participation factors together with Monte-Carlo estimators,
//! * [`resonance`]: eigenvalue resonances, resonant monomials and the
//!   hyperbolicity / Siegel diagnostics that decide which linearization
//!   theorem applies,
//! * [`normalform`]: order-by-order Poincaré–Dulac normal forms of
//!   polynomial vector fields,
//! * [`dynamics`]: trajectory integration, conjugacy checks and empirical
//!   nonlinear participation estimates.

pub mod dynamics;
pub mod eigensystem;
pub mod error;
pub mod normalform;
pub mod participation;
pub mod poly;
pub mod resonance;
pub mod sampling;

pub use num_complex::Complex64;

pub use dynamics::{
    empirical_mode_in_state, integrate, verify_conjugacy, EmpiricalParticipation, Integrator,
    Trajectory,
};
pub use eigensystem::{eigendecompose, modal_coordinates, EigenSystem, StateMatrix};
pub use error::{Error, Result};
pub use normalform::{
    compute_normal_form, evaluate_map, invert_map, mode_in_state_nonlinear, to_modal,
    NormalFormTransform,
};
pub use participation::{
    classic_pf, mode_in_state_mc, mode_in_state_symmetric, state_in_mode_closed, state_in_mode_mc,
    Kind, Method, NonlinearBasis, ParticipationMatrix,
};
pub use poly::{MultiIndex, Polynomial, PolynomialMap, PolynomialVectorField};
pub use resonance::{
    detect_resonances, regime, resonant_monomials, RegimeReport, ResonanceReport, Theorem,
};
pub use sampling::{InitialConditionModel, Marginal, SampleStream};
