//! Simulation and verification engine for self-similar measure-valued
//! population models and their coalescent duals.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coalescent;
pub mod config;
pub mod dual;
pub mod duality;
pub mod error;
pub mod generator;
pub mod lambda;
pub mod lamperti;
pub mod levy;
pub mod measures;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
