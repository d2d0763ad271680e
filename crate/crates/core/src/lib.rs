//! Numerical toolkit for deterministic and stochastic chordal Loewner chains.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod driving;
pub mod error;
pub mod exec;
pub mod flow;
pub mod hull;
pub mod minimizers;
pub mod ode;
pub mod optim;
pub mod quadrature;
pub mod restriction;
pub mod sle;
pub mod welding;
pub mod zipper;

pub use driving::{DrivingFunction, EnergyReport};
pub use error::{LoewnerError, Result};
pub use exec::Execution;
