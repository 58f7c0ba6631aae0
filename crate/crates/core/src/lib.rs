//! Energy-extracting inputs and optimal loads for square nonlinear
//! state-space systems `ẋ = f(x,u)`, `y = h(x,u)` driven against a source
//! signal `y_S`.
//!
//! The optimal input minimizes `P(u) = ∫₀ᵀ (y − y_S)ᵀu dt`. It is found by
//! inverting the Hamiltonian input-output system `Σ⁺` in its input and
//! shooting on the costate until `p(T) = 0`. Every result can be checked
//! independently: adjoint gradients, a descent oracle, perturbation trials,
//! a positive-real test for linear systems and structure checks for
//! port-Hamiltonian and gradient loads.

pub mod cli;
pub mod error;
pub mod expr;
pub mod hamiltonian;
pub mod linalg;
pub mod loads;
pub mod model;
pub mod ode;
pub mod power;
pub mod signal;
pub mod solver;
pub mod trajectory;
pub mod variational;

pub use error::{Error, Result};
