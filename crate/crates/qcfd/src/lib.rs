//! Variational quantum solver for one-dimensional transport equations,
//! emulated exactly on a statevector simulator, with a finite-difference
//! twin for every step.
//!
//! [`cases::run_case`] is the usual entry point. The guide in `book/`
//! walks through the layers from [`statevector`] up.

pub mod ansatz;
pub mod cases;
pub mod cost;
pub mod fd;
pub mod hadamard;
pub mod metrics;
pub mod optimizer;
pub mod problem;
pub mod qnpu;
pub mod statevector;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/statevector.md")]
    mod statevector {}
    #[doc = include_str!("../../../book/src/ansatz.md")]
    mod ansatz {}
    #[doc = include_str!("../../../book/src/shift-operators.md")]
    mod shift_operators {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/cost.md")]
    mod cost {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/cases.md")]
    mod cases {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
