//! Simulator for a pulsed, driven-dissipative two-mode Kerr resonator.
//!
//! The field of each mode is split into a coherent amplitude integrated from
//! c-number equations ([`meanfield`]) and a weak quantum fluctuation whose
//! density matrix evolves under a Lindblad master equation
//! ([`fluctuations`]). Photon statistics follow from [`correlations`], and
//! [`instrument`] models detector resolution and photon counting.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlations;
pub mod error;
pub mod fluctuations;
pub mod hilbert;
pub mod instrument;
mod kernel;
pub mod meanfield;
pub mod squeezing;

pub use error::{Error, Result};
pub use hilbert::{FockCutoff, Mode, Operator, C64};
pub use meanfield::{MeanFieldState, MeanFieldTrajectory, PulseSpec, SystemParams};
