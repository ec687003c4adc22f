//! Polarization-gradient cooling of trapped ions: semiclassical rate
//! model, four-level master-equation simulation, Coulomb-crystal normal
//! modes and carrier-Rabi thermometry.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod crystal;
pub mod direct;
pub mod error;
pub mod fit;
pub mod lindblad;
pub mod physics;
pub mod semiclassical;
pub mod thermometry;

pub use error::{Error, Result};
