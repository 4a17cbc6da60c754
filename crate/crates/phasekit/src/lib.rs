//! Phase factors of isolated hypersurface singularities.
//!
//! This crate computes the two sides of the story for simple singularities
//! of type `A_mu` (and user-supplied Milnor lattices): the closed-form side,
//! where phase factors are matrix polylogarithms of the monodromy acting on
//! the lattice, and the analytic side, where they arise as symplectic
//! pairings of oscillatory period integrals continued along paths.  The
//! library checks the two against each other, verifies locality and
//! integrality of the resulting cocycles, transports everything along loops
//! by Picard-Fuchs integration, and exponentiates the quadratic phase data
//! on a truncated Fock space.
//!
//! Entry points:
//! - [`lattice`]: Milnor lattices from Seifert matrices, intersection form,
//!   monodromy, reflections, vanishing classes.
//! - [`polylog`]: scalar and operator-valued polylogarithms with explicit
//!   branch tracking along paths.
//! - [`periods`]: oscillatory periods at the conformal point, A-basis
//!   pairings, residue pairings from the Seifert form.
//! - [`phase`]: the phase-factor series, its closed form, locality and
//!   pole-structure checks.
//! - [`continuation`]: Picard-Fuchs continuation in the deformation space,
//!   loop monodromy, vanishing-cycle loop integrals.
//! - [`fock`]: truncated Fock-space composition of the exponentiated phase
//!   data and operator-product extraction.
//! - [`cli`]: the machinery behind the `phasekit` binary.

pub mod continuation;
pub mod error;
pub mod fock;
pub mod lattice;
pub mod linalg;
pub mod opcalc;
pub mod periods;
pub mod phase;
pub mod polylog;

pub use error::{Error, Result};
