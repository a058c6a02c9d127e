//! Numerical companion to Nekhoroshev-type stability estimates for
//! Hamiltonians with a stiff transverse coupling,
//!
//! ```text
//! H(z, ζ) = ⟨α, I(z)⟩ + ½⟨A I(z), I(z)⟩ + f_κ(z, ζ) + κ Λ(ζ).
//! ```
//!
//! The crate provides exact polynomial Poisson algebra ([`polyalg`]), system
//! definitions and hypothesis checks ([`hamiltonian`]), simultaneous
//! Diophantine approximation ([`diophantine`]), the averaging normal form and
//! its explicit constants ([`normalform`]), a symplectic integrator
//! ([`integrator`]) and desk-scale numerical studies ([`experiments`]).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diophantine;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod integrator;
pub mod normalform;
pub mod polyalg;

pub use error::{Error, Result};
pub use hamiltonian::{actions, hamiltonian_value, ActionVector, PhasePoint, SystemSpec};
pub use polyalg::{parse_polynomial, Ambient, Polynomial};
