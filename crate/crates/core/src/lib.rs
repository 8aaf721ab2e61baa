//! Reconstruction of two-mode SU(1,1) states.
//!
//! A state with fixed photon-number difference `q` is sent through a simulated
//! non-degenerate parametric amplifier; the probability of finding `q` photons
//! in mode `a` and none in mode `b` is recorded over a grid of amplifier
//! settings `(y, phi)`. The density matrix in the reduced Fock basis
//! `|n+q, n>` is then recovered by a phase Fourier transform followed by a
//! truncated-SVD polynomial least-squares fit, one off-diagonal band at a time.
//!
//! Pipeline: [`states`] → [`forward`] → [`simulation`] → [`transforms`] →
//! [`diagnostics`] / [`inversion`], orchestrated by [`experiment`].

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod inversion;
pub mod math;
pub mod simulation;
pub mod states;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64;
