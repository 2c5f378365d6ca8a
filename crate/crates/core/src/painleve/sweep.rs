use rug::Float;
use serde::Serialize;

use super::catalogue::{IdentityId, ToleranceLadder};
use super::intrep::int_rep_adaptive;
use super::snapshot::Snapshot;
use crate::error::{Error, Result};
use crate::ladder::{ladder_sweep, ladder_tolerance};
use crate::numerics::{PrecisionContext, Residual};
use crate::opsys::{build_for_params, BuildOptions, VERIFY_GUARD};
use crate::weight::WeightParams;

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub id: String,
    pub n: usize,
    pub t: f64,
    pub residual_abs: f64,
    pub residual_rel: f64,
    pub tol: f64,
    pub pass: bool,
    pub route_provenance: String,
    pub digits: u32,
}

impl ResidualReport {
    fn new(id: String, n: usize, t: f64, r: Residual, tol: f64, provenance: String, digits: u32) -> Self {
        ResidualReport {
            id,
            n,
            t,
            residual_abs: r.abs,
            residual_rel: r.rel,
            tol,
            pass: r.rel <= tol,
            route_provenance: provenance,
            digits,
        }
    }

    fn failed(id: String, n: usize, t: f64, tol: f64, e: &Error, digits: u32) -> Self {
        ResidualReport {
            id,
            n,
            t,
            residual_abs: f64::NAN,
            residual_rel: f64::NAN,
            tol,
            pass: false,
            route_provenance: format!("error: {e}"),
            digits,
        }
    }
}

/// Which inputs an identity draws from which route.
pub fn provenance(id: IdentityId) -> &'static str {
    use IdentityId::*;
    match id {
        Rh1 | Rh2 | Hntex => "R,r:quadrature; H:t dlnD/dt",
        Exbe | Beta | Rn | Rnt | Betan | Hd | Hnd | SigmaJmo | SigmaDiscrete => "R,r:quadrature; H:-t sum R_j",
        Td1 | Td2 => "D:moments",
        IntRep => "R:recurrence; D:moments",
        _ => "R,r:quadrature; h,alpha,beta,p:moments",
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub ids: Vec<IdentityId>,
    pub tolerances: ToleranceLadder,
    pub build: BuildOptions,
    /// Ladder evaluation points; empty skips the ladder families.
    pub zs: Vec<f64>,
    /// The integral check runs over `[int_rep_from * t, t]`.
    pub int_rep_from: f64,
    /// Largest Chebyshev grid for the integral check.
    pub int_rep_max_points: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            ids: IdentityId::ALL.to_vec(),
            tolerances: ToleranceLadder::default(),
            build: BuildOptions::default(),
            zs: vec![-0.5, -1.0, -5.0],
            int_rep_from: 0.5,
            int_rep_max_points: 257,
        }
    }
}

/// Every selected identity for `n` in `n_list` at `t = p.t()`, plus the ladder
/// families when `opts.zs` is non-empty. Precision failures abort; other
/// per-identity errors become failing rows.
pub fn verify_point(p: &WeightParams, n_list: &[usize], ctx: &PrecisionContext, opts: &SweepOptions) -> Result<Vec<ResidualReport>> {
    let digits = ctx.digits();
    let t = p.t().to_f64();
    let n_hi = n_list.iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    let point_ids: Vec<IdentityId> = opts.ids.iter().copied().filter(|i| *i != IdentityId::IntRep).collect();
    if !point_ids.is_empty() {
        let snap = Snapshot::build(p, n_hi, ctx, &opts.build)?;
        for &id in &point_ids {
            let tol = opts.tolerances.tolerance(id, digits);
            for &n in n_list {
                if id.needs_previous() && n == 0 {
                    continue;
                }
                let row = match snap.residual(id, n) {
                    Ok(r) => ResidualReport::new(id.to_string(), n, t, r, tol, provenance(id).into(), digits),
                    Err(e @ Error::PrecisionFailure { .. }) => return Err(e),
                    Err(e) => ResidualReport::failed(id.to_string(), n, t, tol, &e, digits),
                };
                out.push(row);
            }
        }
    }
    if opts.ids.contains(&IdentityId::IntRep) {
        let tol = opts.tolerances.tolerance(IdentityId::IntRep, digits);
        let bits = ctx.bits();
        let t1 = Float::with_val(bits, p.t());
        let t0 = Float::with_val(bits, &t1 * opts.int_rep_from);
        let list: Vec<usize> = n_list.to_vec();
        match int_rep_adaptive(&list, &t0, &t1, p, tol / 100.0, opts.int_rep_max_points, ctx, &opts.build) {
            Ok((rs, _)) => {
                for r in rs {
                    out.push(ResidualReport::new(
                        "int_rep".into(),
                        r.n,
                        t,
                        r.worst(),
                        tol,
                        provenance(IdentityId::IntRep).into(),
                        digits,
                    ));
                }
            }
            Err(e @ Error::PrecisionFailure { .. }) => return Err(e),
            Err(e) => {
                for &n in n_list {
                    out.push(ResidualReport::failed("int_rep".into(), n, t, tol, &e, digits));
                }
            }
        }
    }
    if !opts.zs.is_empty() {
        let inner = ctx.with_extra_digits(VERIFY_GUARD);
        let ops = build_for_params(p, n_hi + 1, &inner, &opts.build)?;
        for c in ladder_sweep(&ops, p, n_list, &opts.zs, ctx)? {
            let id = if c.family == "eq1" || c.family == "eq2" || c.family == "expansion" {
                c.family.to_string()
            } else {
                format!("{}[z={}]", c.family, c.z)
            };
            let tol = opts
                .tolerances
                .lookup(c.family)
                .or_else(|| opts.tolerances.lookup(family_of(c.family)))
                .unwrap_or_else(|| ladder_tolerance(family_of(c.family), digits));
            out.push(ResidualReport::new(id, c.n, t, c.residual, tol, "A,B:quadrature".into(), digits));
        }
    }
    Ok(out)
}

fn family_of(row: &str) -> &str {
    match row {
        "eq1" | "eq2" => "prop",
        "S1" | "S2" | "S2prime" => "compat",
        f => f,
    }
}

/// One identity at one `(n, t)`, all inputs from the quadrature route.
pub fn residual_identity(id: IdentityId, n: usize, p: &WeightParams, ctx: &PrecisionContext) -> Result<ResidualReport> {
    if id.needs_previous() && n == 0 {
        return Err(Error::invalid(format!("{id} needs n >= 1")));
    }
    let opts = SweepOptions { ids: vec![id], zs: vec![], ..Default::default() };
    let mut rows = verify_point(p, &[n], ctx, &opts)?;
    rows.pop().ok_or_else(|| Error::invalid("no report produced"))
}
