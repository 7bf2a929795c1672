//! Time-optimal control of nonlocal continuity equations on particle measures.
//!
//! Measures are finitely supported clouds; the controlled dynamics move every
//! particle with a velocity that depends on its own position, on the whole
//! cloud and on a (relaxed) control. On top of that sit hitting times for
//! target sets, upper-bound estimates of the minimal time, the Hamiltonian and
//! first-order nonsmooth tests on measure space, and a closed-form mean-drift
//! problem used as ground truth.

pub mod dynamics;
pub mod error;
pub mod example;
pub mod hjb;
pub mod measures;
pub mod target;
pub mod value;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
