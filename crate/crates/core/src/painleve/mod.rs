//! Identity catalogue for the auxiliary quantities `R_n`, `r_n`, `H_n`,
//! `sigma_n`, with residual evaluation and trajectory integration.

mod catalogue;
mod intrep;
mod riccati;
mod snapshot;
mod sweep;

pub use catalogue::{IdentityId, ToleranceClass, ToleranceLadder};
pub use intrep::{int_rep_adaptive, int_rep_sweep, residual_int_rep, IntRepResult};
pub use riccati::{
    beta_from_r, h_from_r, integrate_pv, integrate_riccati, integrate_riccati_partial, mobius, riccati_at, riccati_field, RiccatiTrajectory,
};
pub use snapshot::{residual_discrete, residual_identity, residual_painleve, residual_riccati, Discrete, Painleve, Snapshot};
pub use sweep::{verify_point, ResidualReport, SweepOptions};
