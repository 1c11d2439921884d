//! Covariant Lyapunov vectors, tangent and adjoint shadowing directions, and
//! sensitivities of long-time-averaged objectives for hyperbolic flows and
//! diffeomorphisms.
//!
//! The pipeline is:
//!
//! 1. [`dynamics`]: build a [`Trajectory`] on the attractor of a [`System`].
//! 2. [`tangent`]: linearize along it ([`Linearization`]) and compute the
//!    covariant Lyapunov vectors ([`ClvBasis`]) with the two-pass QR method.
//! 3. [`adjoint`]: obtain the adjoint CLV frame as the dual basis.
//! 4. [`shadowing`]: assemble tangent and adjoint shadowing directions in CLV
//!    coordinates and check their defining properties.
//! 5. [`sensitivity`]: turn them into `d<J>/ds`, with a finite-difference
//!    reference.

pub mod adjoint;
pub mod dynamics;
mod error;
pub mod io;
pub mod linalg;
pub mod sensitivity;
pub mod series;
pub mod shadowing;
pub mod tangent;
pub mod verify;

pub use adjoint::{AdjointClvBasis, AdjointSolution};
pub use dynamics::{System, SystemKind, Trajectory};
pub use error::{Error, Result};
pub use sensitivity::{Method, SensitivityResult};
pub use shadowing::{AdjointShadowing, MapShadowing, TangentShadowing};
pub use tangent::{ClvBasis, ClvOptions, Linearization, Subspace, TangentSolution};
