//! Vortex-blob simulation of two-dimensional ideal flow outside a smooth
//! obstacle, with diagnostics for the conserved and slowly growing moments of
//! the vorticity.
//!
//! The obstacle is described by the inverse of its exterior conformal map
//! ([`geometry`]). Velocities come from the mapped Biot-Savart law with image
//! vortices plus a harmonic circulation field ([`kernels`]); blobs are
//! advanced with RK4 ([`dynamics`]) and measured by [`diagnostics`]. The
//! [`harness`] module holds the config format, preset scenarios and CSV
//! output used by the `exflow` binary.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernels;

pub use dynamics::{SimulationConfig, VortexEnsemble};
pub use error::{Error, Result};
pub use geometry::{ExteriorMapSpec, Point};
pub use kernels::KernelContext;
