use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::{ode_integrate_until, OdeOptions, OdeTrajectory, PrecisionContext};
use crate::opsys::{build_for_params, cauchy_bundle, r_from_bundle, BuildOptions, VERIFY_GUARD};
use crate::weight::WeightParams;

#[derive(Clone, Debug)]
pub struct RiccatiTrajectory {
    pub n: usize,
    pub t_grid: Vec<Float>,
    pub big_r: Vec<Float>,
    pub small_r: Vec<Float>,
    /// `H_n` rebuilt from `R_n` and `R_n'`, the latter from the field.
    pub h_reconstructed: Vec<Float>,
    /// `beta_n` rebuilt from `R_n` and `r_n`.
    pub beta_reconstructed: Vec<Float>,
    pub sigma: Vec<Float>,
    pub local_error_estimates: Vec<Float>,
}

/// `x / (x - 1)`; an involution.
pub fn mobius(x: &Float) -> Float {
    Float::with_val(x.prec(), x / Float::with_val(x.prec(), x - 1u32))
}

struct Consts {
    a: Float,
    g: Float,
    k1: Float,
    nna: Float,
    n: u32,
}

fn consts(n: usize, p: &WeightParams, bits: u32) -> Consts {
    let a = Float::with_val(bits, p.alpha());
    let g = Float::with_val(bits, p.gamma());
    let nn = n as u32;
    let ag = Float::with_val(bits, &a + &g);
    Consts {
        k1: ag + 2 * nn,
        nna: (a.clone() + nn) * nn,
        a,
        g,
        n: nn,
    }
}

fn guard(r: &Float, t: &Float, thr: &Float) -> Result<()> {
    let bits = r.prec();
    if Float::with_val(bits, r.abs_ref()) < *thr || Float::with_val(bits, r - 1u32).abs() < *thr {
        return Err(Error::SingularityEncountered {
            t_last: t.to_f64(),
            detail: "R_n reached 0 or 1".into(),
        });
    }
    Ok(())
}

/// Right-hand side `(R_n', r_n')` of the coupled Riccati system.
pub fn riccati_field(n: usize, p: &WeightParams, ctx: &PrecisionContext) -> impl Fn(&Float, &[Float]) -> Result<Vec<Float>> {
    let c = consts(n, p, ctx.bits());
    let thr = ctx.sqrt_eps();
    move |t: &Float, y: &[Float]| {
        let (rr, r) = (&y[0], &y[1]);
        guard(rr, t, &thr)?;
        let dr = (t.clone() * rr * rr + (c.k1.clone() - t) * rr + r.clone() * 2u32 - &c.g) / t;
        let r2g = r.clone() * r - c.g.clone() * r;
        let ds = (r2g.clone() / rr - (r2g + (c.k1.clone() * r + &c.nna) * rr) / (1u32 - rr.clone())) / t;
        Ok(vec![dr, ds])
    }
}

/// `(R_n(t), r_n(t))` from their defining integrals.
pub fn riccati_at(n: usize, p: &WeightParams, ctx: &PrecisionContext) -> Result<(Float, Float)> {
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let ops = build_for_params(p, n + 1, &inner, &BuildOptions::default())?;
    let b = cauchy_bundle(&ops, n, None, &inner)?;
    let (big_r, small_r) = r_from_bundle(&ops, &b, inner.bits());
    let bits = ctx.bits();
    Ok((Float::with_val(bits, &big_r[n]), Float::with_val(bits, &small_r[n])))
}

/// `H_n` from `R_n` and `R_n'`.
pub fn h_from_r(n: usize, p: &WeightParams, t: &Float, rr: &Float, dr: &Float) -> Float {
    let bits = rr.prec();
    let c = consts(n, p, bits);
    let tt = t.clone() * t;
    let r2 = rr.clone() * rr;
    let r3 = r2.clone() * rr;
    let r4 = r3.clone() * rr;
    let ag = Float::with_val(bits, &c.a + &c.g) - t;
    let two_n_g = c.g.clone() + 2 * c.n;
    let num = tt.clone() * dr * dr - tt * &r4 - t.clone() * (c.k1.clone() - t) * &r3 * 2u32
        + (t.clone() * &two_n_g * 2u32 - ag.clone() * &ag) * &r2
        + c.g.clone() * &ag * rr * 2u32
        - c.g.clone() * &c.g;
    num / (rr.clone() * (rr.clone() - 1u32) * 4u32)
}

/// `beta_n` from `R_n` and `r_n`.
pub fn beta_from_r(n: usize, p: &WeightParams, rr: &Float, r: &Float) -> Float {
    let c = consts(n, p, rr.prec());
    let one_r = 1u32 - rr.clone();
    let r2g = r.clone() * r - c.g.clone() * r;
    r2g / (rr.clone() * &one_r) + (c.k1.clone() * r + &c.nna) / one_r
}

/// `t R_n'` from the first Riccati equation; regular at `R_n = 0`.
fn t_dr(c: &Consts, t: &Float, rr: &Float, r: &Float) -> Float {
    t.clone() * rr * rr + (c.k1.clone() - t) * rr + r.clone() * 2u32 - &c.g
}

/// Per-step error bound as a fraction of the requested accuracy; perturbations
/// near small `t` grow by about `10^5` before `t = 3`.
const LOCAL_FACTOR: f64 = 1e-6;

fn local_tol(tol: &Float, ctx: &PrecisionContext) -> Float {
    let floor = Float::with_val(ctx.bits(), ctx.eps() * 1000u32);
    Float::with_val(ctx.bits(), tol * LOCAL_FACTOR).max(&floor)
}

/// Below this `|R_n|` (or `|S_n|`) the integrators switch to local coordinates.
const NEAR: f64 = 0.05;

/// The Riccati system in `(R_n, q)` with `r_n = c + q R_n`, `c` in `{0, gamma}`.
/// The solution can cross `R_n = 0` only where `r_n` is `0` or `gamma`, and
/// there the `(R_n, r_n)` form has a removable `1/R_n`; this chart is regular.
fn near_field(n: usize, p: &WeightParams, ctx: &PrecisionContext) -> impl Fn(&Float, &[Float], &Float) -> Result<Vec<Float>> {
    let c = consts(n, p, ctx.bits());
    move |t: &Float, y: &[Float], off: &Float| {
        let (rr, q) = (&y[0], &y[1]);
        let bits = rr.prec();
        let r = Float::with_val(bits, q * rr) + off;
        let dr = t_dr(&c, t, rr, &r) / t;
        let one_r = Float::with_val(bits, 1u32 - rr);
        let lin = Float::with_val(bits, off * 2u32) - &c.g + &c.k1 - Float::with_val(bits, one_r.square_ref()) * t;
        let num = q.clone() * q + lin * q + Float::with_val(bits, off * &c.k1) + &c.nna;
        let dq = num / (-one_r * t);
        Ok(vec![dr, dq])
    }
}

/// Integrates a two-component system whose first component may pass through
/// a removable zero, switching to local coordinates while it is small. States
/// in and out are in the plain coordinates.
#[allow(clippy::too_many_arguments)]
fn integrate_charted<P, N, To, From>(
    plain: P,
    near: N,
    to_near: To,
    from_near: From,
    y0: &[Float],
    t0: &Float,
    t1: &Float,
    tol: &Float,
    ctx: &PrecisionContext,
) -> (OdeTrajectory, Option<Error>)
where
    P: Fn(&Float, &[Float]) -> Result<Vec<Float>>,
    N: Fn(&Float, &[Float], &Float) -> Result<Vec<Float>>,
    To: Fn(&Float, &[Float]) -> (Float, Vec<Float>),
    From: Fn(&Float, &[Float], &Float) -> Vec<Float>,
{
    let bits = ctx.bits();
    let small = |y: &[Float], lim: f64| Float::with_val(bits, y[0].abs_ref()) < lim;
    let mut out = OdeTrajectory {
        t_grid: vec![Float::with_val(bits, t0)],
        states: vec![y0.to_vec()],
        local_error_estimates: vec![Float::with_val(bits, 0)],
    };
    let opts = OdeOptions::default();
    loop {
        let t = out.last_t().clone();
        let y = out.last_state().to_vec();
        let (seg, err, switched, states) = if small(&y, NEAR) {
            let (off, z) = to_near(&t, &y);
            let (seg, err, sw) = ode_integrate_until(|t: &Float, z: &[Float]| near(t, z, &off), |_, z| !small(z, 2.0 * NEAR), &z, &t, t1, tol, ctx, &opts);
            let states: Vec<Vec<Float>> = seg.t_grid.iter().zip(&seg.states).map(|(t, z)| from_near(t, z, &off)).collect();
            (seg, err, sw, states)
        } else {
            let (seg, err, sw) = ode_integrate_until(&plain, |_, y| small(y, NEAR), &y, &t, t1, tol, ctx, &opts);
            let states = seg.states.clone();
            (seg, err, sw, states)
        };
        out.t_grid.extend(seg.t_grid[1..].iter().cloned());
        out.states.extend(states.into_iter().skip(1));
        out.local_error_estimates.extend(seg.local_error_estimates[1..].iter().cloned());
        if err.is_some() || !switched || seg.t_grid.len() < 2 {
            return (out, err);
        }
    }
}

/// `(R_n, r_n)` from `t0` to `t1`.
fn riccati_segment(n: usize, p: &WeightParams, y0: &[Float], t0: &Float, t1: &Float, ctx: &PrecisionContext, tol: &Float) -> (OdeTrajectory, Option<Error>) {
    let g = Float::with_val(ctx.bits(), p.gamma());
    let to_near = |_: &Float, y: &[Float]| {
        let bits = y[0].prec();
        let d0 = Float::with_val(bits, y[1].abs_ref());
        let dg = Float::with_val(bits, &y[1] - &g).abs();
        let off = if d0 <= dg { Float::with_val(bits, 0) } else { g.clone() };
        let q = Float::with_val(bits, &y[1] - &off) / &y[0];
        (off, vec![y[0].clone(), q])
    };
    let from_near = |_: &Float, z: &[Float], off: &Float| vec![z[0].clone(), Float::with_val(z[0].prec(), &z[1] * &z[0]) + off];
    integrate_charted(riccati_field(n, p, ctx), near_field(n, p, ctx), to_near, from_near, y0, t0, t1, tol, ctx)
}

fn reconstruct(n: usize, p: &WeightParams, ctx: &PrecisionContext, traj: &OdeTrajectory) -> Result<RiccatiTrajectory> {
    let c = consts(n, p, ctx.bits());
    let mut out = RiccatiTrajectory {
        n,
        t_grid: traj.t_grid.clone(),
        big_r: Vec::new(),
        small_r: Vec::new(),
        h_reconstructed: Vec::new(),
        beta_reconstructed: Vec::new(),
        sigma: Vec::new(),
        local_error_estimates: traj.local_error_estimates.clone(),
    };
    for (t, y) in traj.t_grid.iter().zip(&traj.states) {
        let (rr, r) = (&y[0], &y[1]);
        let dr = t_dr(&c, t, rr, r) / t;
        let h = h_from_r(n, p, t, rr, &dr);
        out.sigma.push(h.clone() - c.g.clone() * c.n);
        out.h_reconstructed.push(h);
        out.beta_reconstructed.push(beta_from_r(n, p, rr, r));
        out.big_r.push(rr.clone());
        out.small_r.push(r.clone());
    }
    Ok(out)
}

fn seeds(n: usize, p: &WeightParams, t0: &Float, ctx: &PrecisionContext) -> Result<(Float, Float)> {
    if !(*t0 > 0) {
        return Err(Error::invalid("integration starts at t0 > 0"));
    }
    riccati_at(n, &p.with_t(t0.clone()), ctx)
}

/// Integrates the Riccati system from quadrature seeds at `t0`. `tol` is the
/// accuracy asked of the trajectory, not the per-step bound.
pub fn integrate_riccati(n: usize, p: &WeightParams, t0: &Float, t1: &Float, ctx: &PrecisionContext, tol: &Float) -> Result<RiccatiTrajectory> {
    let (traj, err) = integrate_riccati_partial(n, p, &[t0.clone(), t1.clone()], ctx, tol, true)?;
    match err {
        None => Ok(traj),
        Some(e) => Err(e),
    }
}

/// Integrates through the increasing times `grid` (seeded at `grid[0]`). With
/// `dense` every accepted step is kept, otherwise only the grid points. A
/// singularity ends the trajectory early and is returned alongside it.
pub fn integrate_riccati_partial(
    n: usize,
    p: &WeightParams,
    grid: &[Float],
    ctx: &PrecisionContext,
    tol: &Float,
    dense: bool,
) -> Result<(RiccatiTrajectory, Option<Error>)> {
    let bits = ctx.bits();
    let t0 = grid.first().ok_or_else(|| Error::invalid("empty time grid"))?;
    let (rr0, r0) = seeds(n, p, t0, ctx)?;
    let y0 = vec![rr0, r0];
    let tol = &local_tol(tol, ctx);
    let mut full = OdeTrajectory {
        t_grid: vec![Float::with_val(bits, t0)],
        states: vec![y0.clone()],
        local_error_estimates: vec![Float::with_val(bits, 0)],
    };
    let mut y = y0;
    let mut stop = None;
    for w in grid.windows(2) {
        let (seg, err) = riccati_segment(n, p, &y, &w[0], &w[1], ctx, tol);
        let reached = seg.last_t() == &w[1];
        if dense {
            full.t_grid.extend(seg.t_grid[1..].iter().cloned());
            full.states.extend(seg.states[1..].iter().cloned());
            full.local_error_estimates.extend(seg.local_error_estimates[1..].iter().cloned());
        } else if reached {
            let e = seg.local_error_estimates.iter().fold(Float::with_val(bits, 0), |m, x| if *x > m { x.clone() } else { m });
            full.t_grid.push(w[1].clone());
            full.states.push(seg.last_state().to_vec());
            full.local_error_estimates.push(e);
        }
        if let Some(e) = err {
            stop = Some(e);
            break;
        }
        y = seg.last_state().to_vec();
    }
    Ok((reconstruct(n, p, ctx, &full)?, stop))
}

/// Integrates the second-order equation for `S_n = R_n/(R_n - 1)` as the
/// system `(S, S')`.
pub fn integrate_pv(n: usize, p: &WeightParams, t0: &Float, t1: &Float, ctx: &PrecisionContext, tol: &Float) -> Result<OdeTrajectory> {
    let bits = ctx.bits();
    let (rr, r) = seeds(n, p, t0, ctx)?;
    let c = consts(n, p, bits);
    let rm1 = Float::with_val(bits, &rr - 1u32);
    let s = mobius(&rr);
    let ds = -(t_dr(&c, t0, &rr, &r) / t0 / (rm1.clone() * &rm1));
    let thr = ctx.sqrt_eps();
    let plain = |t: &Float, y: &[Float]| -> Result<Vec<Float>> {
        let (s, ds) = (&y[0], &y[1]);
        guard(s, t, &thr)?;
        let s1 = s.clone() - 1u32;
        let tt = t.clone() * t;
        let poly = c.a.clone() * &c.a * s / 2u32 - c.g.clone() * &c.g / (s.clone() * 2u32);
        let dds = (s.clone() * 3u32 - 1u32) * ds * ds / (s.clone() * &s1 * 2u32) - ds.clone() / t
            + s1.clone() * &s1 / &tt * poly
            - (c.k1.clone() + 1u32) * s / t
            - s.clone() * (s.clone() + 1u32) / (s1 * 2u32);
        Ok(vec![ds.clone(), dds])
    };
    // Near S = 0 the solution has t S' = e gamma with e = +-1; in
    // U = (t S' - e gamma) / S the 1/S terms cancel.
    let near = |t: &Float, y: &[Float], off: &Float| -> Result<Vec<Float>> {
        let (s, u) = (&y[0], &y[1]);
        let s1 = s.clone() - 1u32;
        if Float::with_val(bits, s1.abs_ref()) < thr {
            return Err(Error::SingularityEncountered { t_last: t.to_f64(), detail: "S_n reached 1".into() });
        }
        let ds = (s.clone() * u + off) / t;
        let gg = c.g.clone() * &c.g;
        let kt = c.k1.clone() * t * 2u32;
        let tt = t.clone() * t;
        let two_t = t.clone() * 2u32;
        let lin = gg.clone() + &kt + &tt + &two_t;
        let num = c.a.clone() * &c.a * Float::with_val(bits, s1.clone() * &s1) * &s1 - lin * s
            + u.clone() * u * (s.clone() + 1u32)
            + u.clone() * off * 4u32
            + gg * 3u32
            + kt
            - tt
            + two_t;
        let du = num / (t.clone() * &s1 * 2u32);
        Ok(vec![ds, du])
    };
    let to_near = |t: &Float, y: &[Float]| {
        let tds = Float::with_val(bits, t * &y[1]);
        let off = if tds.is_sign_negative() { -c.g.clone() } else { c.g.clone() };
        let u = (tds - &off) / &y[0];
        (off, vec![y[0].clone(), u])
    };
    let from_near = |t: &Float, z: &[Float], off: &Float| vec![z[0].clone(), (Float::with_val(bits, &z[0] * &z[1]) + off) / t];
    let (traj, err) = integrate_charted(plain, near, to_near, from_near, &[s, ds], t0, t1, &local_tol(tol, ctx), ctx);
    match err {
        None => Ok(traj),
        Some(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_context;

    #[test]
    fn near_chart_matches_riccati_field() {
        let ctx = make_context(40).unwrap();
        let bits = ctx.bits();
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let t = Float::with_val(bits, 0.7);
        let (rr, r) = riccati_at(2, &p.with_t(t.clone()), &ctx).unwrap();
        let a = riccati_field(2, &p, &ctx)(&t, &[rr.clone(), r.clone()]).unwrap();
        for off in [0.0, 2.0] {
            let off = Float::with_val(bits, off);
            let q = Float::with_val(bits, &r - &off) / &rr;
            let b = near_field(2, &p, &ctx)(&t, &[rr.clone(), q.clone()], &off).unwrap();
            let dq = (a[1].clone() - q * &a[0]) / &rr;
            assert!((a[0].clone() - &b[0]).abs().to_f64() < 1e-35);
            assert!((dq - &b[1]).abs().to_f64() < 1e-33);
        }
    }
}
