//! Linear precoder design for the MIMO wiretap channel with finite-alphabet inputs.
//!
//! The crate covers the full pipeline:
//!
//! * [`matcore`] — dense complex primitives and the generalized singular value
//!   decomposition (GSVD) of a channel pair in the block form the precoders need;
//! * [`constellation`] — finite signal sets and joint symbol-vector enumeration;
//! * [`channel`] — i.i.d. and Kronecker-correlated channel generation, Laplacian
//!   transmit-correlation synthesis, and correlation estimation from realizations;
//! * [`miengine`] — Monte-Carlo mutual information, MMSE matrices, and gradients
//!   for Gaussian-noise channels with discrete inputs;
//! * [`pg_inst`] — the instantaneous-CSI pipeline: GSVD baseline precoder,
//!   per-group GSVD construction, secrecy-rate evaluation, and gradient-ascent
//!   optimization of the group power/unitary parameters;
//! * [`pg_stat`] — the statistical-CSI pipeline: ergodic secrecy-rate lower
//!   bound with a closed-form eavesdropper bound, its gradients, the matching
//!   optimizer, and null-space artificial-noise injection.
//!
//! All samplers and estimators take explicit seeds and are deterministic given
//! them; thread count changes execution schedule only, never sampled values.

// index loops mirror the matrix subscripts of the formulas they implement
#![allow(clippy::needless_range_loop)]

pub mod channel;
pub mod constellation;
pub mod error;
pub mod matcore;
pub mod miengine;
pub mod pg_inst;
pub mod pg_stat;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
