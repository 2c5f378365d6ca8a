//! Orthogonal polynomials, Hankel determinants and Painleve identities for the
//! Laguerre weight `x^alpha e^{-x} |x-t|^gamma (A + B theta(x-t))`, computed at
//! configurable precision.

pub mod cli;
pub mod error;
pub mod fluid;
pub mod ladder;
pub mod numerics;
pub mod opsys;
pub mod painleve;
pub mod weight;

pub use error::{Error, Result};
