//! Discrete-time SEASQHRD epidemic dynamics for Lombardy together with the
//! tooling built on top of them: disease-free stability analysis, Google
//! mobility regression, adherence ensembles and a receding-horizon
//! probabilistic model predictive controller for social-distancing policy.
//!
//! The model and stability math are generic over [`Scalar`] (`f32`/`f64`).
//! Statistics, ensembles and the controller work in `f64`; the aliases below
//! name the concrete types they use.

pub mod ensemble;
pub mod error;
pub mod format;
pub mod mobility;
pub mod model;
pub mod mpc;
pub mod scalar;
pub mod schedule;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Number of policy-controllable activities: RR, G, P, T, W, SU.
pub const ACTIVITIES: usize = 6;

/// Curtail level per controllable activity, in restriction units (0 = none, 1 = full).
pub type ActivityVector = [f64; ACTIVITIES];

pub type State = model::CompartmentState<f64>;
pub type Params = model::EpiParams<f64>;
pub type Control = model::ControlInput<f64>;
pub type Schedule = schedule::EpiParamSchedule<f64>;
pub type CharPoly = stability::CharPoly3<f64>;
pub type Jury = stability::JuryReport<f64>;
