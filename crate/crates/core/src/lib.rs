//! Poincaré-covariant positive operator valued measures for the spacetime
//! coordinates of a quantum event.
//!
//! States are sampled momentum-space wave functions on mass-shell grids
//! ([`state`]); the measure is fixed by a discrete family of kernels
//! ([`kernel`]) combined with principal-series matrix elements of SL(2,C)
//! ([`lorentz`]). The [`engine`] turns state and kernel into intertwined
//! fields, densities, probabilities, moments and Galerkin matrices, and
//! [`verify`] binds each structural property to a numerical check.

pub mod engine;
pub mod error;
pub mod kernel;
pub mod lorentz;
pub mod scenario;
pub mod special;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
