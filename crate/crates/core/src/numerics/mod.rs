//! Configurable-precision numeric kernel.

pub mod cheb;
pub mod context;
pub mod diff;
pub mod gamma;
pub mod norm;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod rules;

pub use cheb::ChebGrid;
pub use context::{make_context, pow10, PrecisionContext, MIN_DIGITS};
pub use diff::{central_derivative, first_from_stencil, second_from_stencil, stencil_points};
pub use gamma::{incomplete_gamma, incomplete_gamma_ladder, GammaKind};
pub use norm::{residual_of, Residual};
pub use ode::{ode_integrate, ode_integrate_partial, ode_integrate_until, OdeOptions, OdeTrajectory};
pub use quad::{integrate_factored, quad_singular, quad_tail, Factor};
pub use roots::{poly_eval, poly_real_roots, poly_real_roots_mult, RealRoot};
pub use rules::{QuadratureRule, RuleKind};
