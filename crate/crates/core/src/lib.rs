//! Statistical certification of regions of attraction.
//!
//! Given an ODE `dx/dt = f(x)` with a stable origin and a Gram-form Lyapunov
//! candidate `V(x) = z(x)ᵀ Q z(x)`, this crate bounds the worst-case Lie
//! derivative `max V̇` on the level set `{V = ρ}` with high statistical
//! confidence:
//!
//! 1. projected Langevin chains climb `V̇` on the level set ([`sampler`]),
//! 2. block maxima of the chain endpoints are fitted with a Weibull-class
//!    generalized extreme value law ([`evt`]),
//! 3. a bootstrap upper confidence bound on the fitted right endpoint decides
//!    whether the sublevel set is certified ([`certifier`]).
//!
//! A bisection over `ρ` ([`certifier::binary_search_rho`]) finds the largest
//! certifiable sublevel set. Deterministic ground-truth maximizers live in
//! [`oracle`] and an offline Gram-matrix fitter in [`synthesis`].

pub mod certifier;
pub mod dynamics;
pub mod error;
pub mod evt;
pub mod lyapunov;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod synthesis;

pub use error::{Result, ScoreError};

/// A point in state space.
pub type StateVector = nalgebra::DVector<f64>;
