//! Numerical laboratory for shadowing, super-shadowing and limit
//! super-shadowing of finite-dimensional complex linear operators, together
//! with supercyclic orbit-density analytics.
//!
//! Every numerical routine is generic over [`Real`] (implemented for `f32`
//! and `f64`); the `*64` aliases at the crate root fix double precision,
//! which is what the command-line runner uses.

pub mod cser;
pub mod density;
pub mod error;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod pseudotraj;
pub mod rng;
pub mod scalar;
pub mod shadow;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::{c, cr, CMatrix, CVector, NormKind, Real, C};

pub type OperatorSpec64 = operator::OperatorSpec<f64>;
pub type OperatorSpec32 = operator::OperatorSpec<f32>;
pub type Trajectory64 = pseudotraj::Trajectory<f64>;
pub type Trajectory32 = pseudotraj::Trajectory<f32>;
pub type Witness64 = shadow::Witness<f64>;
pub type Witness32 = shadow::Witness<f32>;
pub type HyperbolicSplitting64 = spectral::HyperbolicSplitting<f64>;
pub type CorrectorSystem64 = shadow::CorrectorSystem<f64>;
pub type ChainPath64 = pseudotraj::ChainPath<f64>;
pub type Verdict64 = spectral::Verdict<f64>;
