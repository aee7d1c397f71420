//! Correctly truncated, gauge-invariant light-matter Hamiltonians for cavity
//! QED with lossy and dispersive media.
//!
//! Units: ħ = ε₀ = 1 and all frequencies are in units of a reference
//! frequency chosen by the caller.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod detect;
pub mod dynamics;
pub mod error;
pub mod gaugecheck;
pub mod hamiltonians;
pub mod hilbert;
pub mod matter;
pub mod modes;
pub mod quadrature;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
