//! Ladder-operator coefficients `A_n(z)`, `B_n(z)` by quadrature, and the
//! residuals of the identities they satisfy.

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{first_from_stencil, residual_of, stencil_points, PrecisionContext, Residual};
use crate::opsys::{cauchy_bundle, eval_pn, CauchyBundle, OPSystem, VERIFY_GUARD};
use crate::opsys::cauchy_bundle_parts;
use crate::weight::WeightParams;

#[derive(Clone, Debug)]
pub struct LadderEval {
    pub n: usize,
    pub z: Float,
    pub big_a: Float,
    pub big_b: Float,
    pub small_a: Float,
    pub small_b: Float,
    pub digits: u32,
}

/// `A_j(z), B_j(z), a_j(z,t), b_j(z,t)` for `j = 0..=top` at one `z`.
#[derive(Clone, Debug)]
pub struct LadderColumn {
    pub z: Float,
    pub big_a: Vec<Float>,
    pub big_b: Vec<Float>,
    pub small_a: Vec<Float>,
    pub small_b: Vec<Float>,
}

fn check_inputs(ops: &OPSystem, p: &WeightParams, z: &Float) -> Result<()> {
    if ops.params.key() != p.key() {
        return Err(Error::invalid("parameters differ from those the system was built for"));
    }
    if !(*z < 0) {
        return Err(Error::invalid("ladder coefficients are evaluated at z < 0 only"));
    }
    if !(p.t() > &0) {
        return Err(Error::invalid("ladder coefficients need t > 0"));
    }
    Ok(())
}

/// Assembles the coefficients from the `z`-free integrals of `base` and the
/// `z`-dependent integrals of `zb`.
fn column(ops: &OPSystem, base: &CauchyBundle, zb: &CauchyBundle, z: &Float, bits: u32) -> LadderColumn {
    let p = &ops.params;
    let alpha = Float::with_val(bits, p.alpha());
    let gamma = Float::with_val(bits, p.gamma());
    let top = zb.sq_z.len() - 1;
    let az = Float::with_val(bits, &alpha / z);
    let mut col = LadderColumn {
        z: z.clone(),
        big_a: Vec::with_capacity(top + 1),
        big_b: Vec::with_capacity(top + 1),
        small_a: Vec::with_capacity(top + 1),
        small_b: Vec::with_capacity(top + 1),
    };
    for j in 0..=top {
        let h = &ops.h[j];
        let sa = Float::with_val(bits, &zb.sq_z[j] * &gamma) / h;
        let a = Float::with_val(bits, &base.sq_y[j] * &az) / h + &sa;
        col.big_a.push(a);
        col.small_a.push(sa);
        if j == 0 {
            col.big_b.push(Float::with_val(bits, 0));
            col.small_b.push(Float::with_val(bits, 0));
        } else {
            let h = &ops.h[j - 1];
            let sb = Float::with_val(bits, &zb.mx_z[j] * &gamma) / h;
            let b = Float::with_val(bits, &base.mx_y[j] * &az) / h + &sb;
            col.big_b.push(b);
            col.small_b.push(sb);
        }
    }
    col
}

/// The coefficient column at `z` together with the `z`-free bundle it used.
pub fn ladder_column(ops: &OPSystem, p: &WeightParams, top: usize, z: &Float, ctx: &PrecisionContext) -> Result<(LadderColumn, CauchyBundle)> {
    check_inputs(ops, p, z)?;
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let bits = inner.bits();
    let zz = Float::with_val(bits, z);
    let b = cauchy_bundle(ops, top, Some(&zz), &inner)?;
    let col = column(ops, &b, &b, &zz, bits);
    Ok((col, b))
}

/// Column at a shifted `z`, reusing the `z`-free integrals of `base`.
fn column_shifted(ops: &OPSystem, base: &CauchyBundle, top: usize, z: &Float, inner: &PrecisionContext) -> Result<LadderColumn> {
    let zb = cauchy_bundle_parts(ops, top, Some(z), false, inner)?;
    Ok(column(ops, base, &zb, z, inner.bits()))
}

pub fn eval_ladder(ops: &OPSystem, p: &WeightParams, n: usize, z: &Float, ctx: &PrecisionContext) -> Result<LadderEval> {
    let (col, _) = ladder_column(ops, p, n, z, ctx)?;
    Ok(LadderEval {
        n,
        z: col.z.clone(),
        big_a: col.big_a[n].clone(),
        big_b: col.big_b[n].clone(),
        small_a: col.small_a[n].clone(),
        small_b: col.small_b[n].clone(),
        digits: ctx.digits() + VERIFY_GUARD,
    })
}

fn v0p(p: &WeightParams, z: &Float, bits: u32) -> Float {
    1 - Float::with_val(bits, p.alpha() / z)
}

fn mul(a: &Float, b: &Float) -> Float {
    Float::with_val(a.prec().max(b.prec()), a * b)
}

fn lowering_terms(ops: &OPSystem, col: &LadderColumn, n: usize) -> Result<Vec<Float>> {
    let z = &col.z;
    let pv = ops.eval_all(n, z);
    let d = eval_pn(ops, n, z, 1)?;
    Ok(vec![
        d,
        mul(&col.big_b[n], &pv[n]),
        -mul(&mul(&ops.beta(n), &col.big_a[n]), &pv[n - 1]),
    ])
}

fn raising_terms(ops: &OPSystem, col: &LadderColumn, n: usize) -> Result<Vec<Float>> {
    let z = &col.z;
    let bits = z.prec();
    let pv = ops.eval_all(n, z);
    let d = eval_pn(ops, n - 1, z, 1)?;
    Ok(vec![
        d,
        -mul(&col.big_b[n], &pv[n - 1]),
        -mul(&v0p(&ops.params, z, bits), &pv[n - 1]),
        mul(&col.big_a[n - 1], &pv[n]),
    ])
}

fn s1_terms(ops: &OPSystem, col: &LadderColumn, n: usize) -> Vec<Float> {
    let z = &col.z;
    let bits = z.prec();
    let za = Float::with_val(bits, z - ops.alpha(n));
    vec![
        col.big_b[n + 1].clone(),
        col.big_b[n].clone(),
        -mul(&za, &col.big_a[n]),
        v0p(&ops.params, z, bits),
    ]
}

fn s2_terms(ops: &OPSystem, col: &LadderColumn, n: usize) -> Vec<Float> {
    let z = &col.z;
    let bits = z.prec();
    let za = Float::with_val(bits, z - ops.alpha(n));
    let mut t = vec![
        Float::with_val(bits, 1),
        mul(&za, &col.big_b[n + 1]),
        -mul(&za, &col.big_b[n]),
        -mul(&ops.beta(n + 1), &col.big_a[n + 1]),
    ];
    if n > 0 {
        t.push(mul(&ops.beta(n), &col.big_a[n - 1]));
    }
    t
}

fn s2p_terms(ops: &OPSystem, col: &LadderColumn, n: usize) -> Vec<Float> {
    let z = &col.z;
    let bits = z.prec();
    let b = &col.big_b[n];
    let mut t = vec![mul(b, b), mul(&v0p(&ops.params, z, bits), b)];
    let mut s = Float::with_val(bits, 0);
    for a in &col.big_a[..n] {
        s += a;
    }
    t.push(s);
    if n > 0 {
        t.push(-mul(&mul(&ops.beta(n), &col.big_a[n]), &col.big_a[n - 1]));
    }
    t
}

fn eq1_terms(ops: &OPSystem, b: &CauchyBundle, n: usize, bits: u32) -> Vec<Float> {
    let p = &ops.params;
    vec![
        b.sq[n].clone(),
        -Float::with_val(bits, &b.sq_y[n] * p.alpha()),
        -Float::with_val(bits, &b.sq_t[n] * p.gamma()),
    ]
}

fn eq2_terms(ops: &OPSystem, b: &CauchyBundle, n: usize, bits: u32) -> Vec<Float> {
    let p = &ops.params;
    let h = &ops.h[n - 1];
    vec![
        Float::with_val(bits, &b.mx[n] / h),
        -Float::with_val(bits, &b.mx_y[n] * p.alpha()) / h,
        Float::with_val(bits, -(n as i64)),
        -Float::with_val(bits, &b.mx_t[n] * p.gamma()) / h,
    ]
}

pub fn residual_lowering(ops: &OPSystem, p: &WeightParams, n: usize, z: &Float, ctx: &PrecisionContext) -> Result<Residual> {
    if n == 0 || n > ops.n_max {
        return Err(Error::invalid("lowering residual needs 1 <= n <= n_max"));
    }
    let (col, _) = ladder_column(ops, p, n, z, ctx)?;
    Ok(residual_of(&lowering_terms(ops, &col, n)?))
}

pub fn residual_raising(ops: &OPSystem, p: &WeightParams, n: usize, z: &Float, ctx: &PrecisionContext) -> Result<Residual> {
    if n == 0 || n > ops.n_max {
        return Err(Error::invalid("raising residual needs 1 <= n <= n_max"));
    }
    let (col, _) = ladder_column(ops, p, n, z, ctx)?;
    Ok(residual_of(&raising_terms(ops, &col, n)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropEq {
    Eq1,
    Eq2,
}

pub fn residual_prop(ops: &OPSystem, p: &WeightParams, n: usize, which: PropEq, ctx: &PrecisionContext) -> Result<Residual> {
    if n > ops.n_max || (which == PropEq::Eq2 && n == 0) {
        return Err(Error::invalid("n out of range for this identity"));
    }
    if ops.params.key() != p.key() {
        return Err(Error::invalid("parameters differ from those the system was built for"));
    }
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let b = cauchy_bundle(ops, n, None, &inner)?;
    let terms = match which {
        PropEq::Eq1 => eq1_terms(ops, &b, n, inner.bits()),
        PropEq::Eq2 => eq2_terms(ops, &b, n, inner.bits()),
    };
    Ok(residual_of(&terms))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Compat {
    S1,
    S2,
    S2Prime,
}

pub fn residual_compat(ops: &OPSystem, p: &WeightParams, n: usize, z: &Float, which: Compat, ctx: &PrecisionContext) -> Result<Residual> {
    let top = match which {
        Compat::S2Prime => n,
        _ => n + 1,
    };
    if top > ops.n_max {
        return Err(Error::invalid("n out of range for this identity"));
    }
    let (col, _) = ladder_column(ops, p, top, z, ctx)?;
    let terms = match which {
        Compat::S1 => s1_terms(ops, &col, n),
        Compat::S2 => s2_terms(ops, &col, n),
        Compat::S2Prime => s2p_terms(ops, &col, n),
    };
    Ok(residual_of(&terms))
}

/// Absolute remainders of the three-term large-`z` truncations of `A_n`, `B_n`.
pub fn residual_expansion(ops: &OPSystem, p: &WeightParams, n: usize, z_large: &Float, ctx: &PrecisionContext) -> Result<(Float, Float)> {
    if !(*z_large <= -1000) {
        return Err(Error::invalid("expansion check needs z <= -1000"));
    }
    if n > ops.n_max {
        return Err(Error::invalid("n exceeds n_max"));
    }
    let (col, b) = ladder_column(ops, p, n, z_large, ctx)?;
    Ok(expansion_remainders(ops, &col, &b, n))
}

fn expansion_remainders(ops: &OPSystem, col: &LadderColumn, b: &CauchyBundle, n: usize) -> (Float, Float) {
    let z = &col.z;
    let bits = z.prec();
    let p = &ops.params;
    let t = Float::with_val(bits, p.t());
    let g = Float::with_val(bits, p.gamma());
    let rn = Float::with_val(bits, &b.sq_t[n] * &g) / &ops.h[n];
    let small_r = if n == 0 {
        Float::with_val(bits, 0)
    } else {
        Float::with_val(bits, &b.mx_t[n] * &g) / &ops.h[n - 1]
    };
    let z2 = Float::with_val(bits, z * z);
    let z3 = Float::with_val(bits, &z2 * z);
    let tr = Float::with_val(bits, &t * &rn);
    let a2 = Float::with_val(bits, &g + &tr);
    let a3 = Float::with_val(bits, &g * ops.alpha(n)) + Float::with_val(bits, &g * &t) + Float::with_val(bits, &tr * &t);
    let ta = Float::with_val(bits, 1 / z) + Float::with_val(bits, &a2 / &z2) + Float::with_val(bits, &a3 / &z3);
    let ts = Float::with_val(bits, &t * &small_r);
    let b3 = Float::with_val(bits, &g * &ops.beta(n)) + Float::with_val(bits, &ts * &t);
    let tb = Float::with_val(bits, -(n as i64)) / z + Float::with_val(bits, &ts / &z2) + Float::with_val(bits, &b3 / &z3);
    let ra = Float::with_val(bits, &col.big_a[n] - &ta).abs();
    let rb = Float::with_val(bits, &col.big_b[n] - &tb).abs();
    (ra, rb)
}

fn ode_terms(ops: &OPSystem, col: &LadderColumn, da: &[Float], db: &[Float], n: usize, sqrt_eps: &Float) -> Result<Vec<Float>> {
    let z = &col.z;
    let bits = z.prec();
    let a = &col.big_a[n];
    if Float::with_val(bits, a.abs_ref()) < *sqrt_eps {
        return Err(Error::IllConditioned(format!("A_{n}(z) vanishes at z = {}", z.to_f64())));
    }
    let p0 = eval_pn(ops, n, z, 0)?;
    let p1 = eval_pn(ops, n, z, 1)?;
    let p2 = eval_pn(ops, n, z, 2)?;
    let v = v0p(&ops.params, z, bits);
    let mut s = Float::with_val(bits, 0);
    for aj in &col.big_a[..n] {
        s += aj;
    }
    let b = &col.big_b[n];
    Ok(vec![
        mul(a, &p2),
        -mul(&mul(&v, a), &p1),
        -mul(&da[n], &p1),
        mul(&mul(&db[n], a), &p0),
        -mul(&mul(b, &da[n]), &p0),
        mul(&mul(a, &s), &p0),
    ])
}

/// z-derivatives of `A_j`, `B_j`, `j <= top`, by the five-point stencil.
fn z_derivatives(ops: &OPSystem, base: &CauchyBundle, top: usize, z: &Float, ctx: &PrecisionContext) -> Result<(Vec<Float>, Vec<Float>)> {
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let bits = inner.bits();
    let h = Float::with_val(bits, ctx.fd_step());
    let mut cols = Vec::with_capacity(5);
    for (k, zk) in stencil_points(z, &h, bits).into_iter().enumerate() {
        if k == 2 {
            cols.push(None);
            continue;
        }
        cols.push(Some(column_shifted(ops, base, top, &zk, &inner)?));
    }
    let zero = Float::with_val(bits, 0);
    let deriv = |pick: &dyn Fn(&LadderColumn) -> &Vec<Float>, j: usize| {
        let v: Vec<Float> = cols
            .iter()
            .map(|c| c.as_ref().map(|c| pick(c)[j].clone()).unwrap_or_else(|| zero.clone()))
            .collect();
        first_from_stencil(&v, &h)
    };
    let da = (0..=top).map(|j| deriv(&|c| &c.big_a, j)).collect();
    let db = (0..=top).map(|j| deriv(&|c| &c.big_b, j)).collect();
    Ok((da, db))
}

pub fn residual_ode_pn(ops: &OPSystem, p: &WeightParams, n: usize, z: &Float, ctx: &PrecisionContext) -> Result<Residual> {
    if n > ops.n_max {
        return Err(Error::invalid("n exceeds n_max"));
    }
    let (col, base) = ladder_column(ops, p, n, z, ctx)?;
    let (da, db) = z_derivatives(ops, &base, n, &col.z, ctx)?;
    let se = ctx.sqrt_eps();
    Ok(residual_of(&ode_terms(ops, &col, &da, &db, n, &se)?))
}

/// One ladder check in a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct LadderCheck {
    pub family: &'static str,
    pub n: usize,
    pub z: f64,
    pub residual: Residual,
    pub tol: f64,
    pub pass: bool,
}

/// Tolerance exponents (as fractions of the digit count) for the ladder families.
pub fn ladder_tolerance(family: &str, digits: u32) -> f64 {
    let d = digits as f64;
    match family {
        "ode_pn" => 10f64.powf(-d / 3.0),
        "expansion" => 2f64.log10(),
        _ => 10f64.powf(-d / 2.0),
    }
}

pub const LADDER_FAMILIES: [&str; 6] = ["lowering", "raising", "prop", "compat", "expansion", "ode_pn"];

fn push(out: &mut Vec<LadderCheck>, family: &'static str, n: usize, z: f64, r: Residual, digits: u32) {
    let fam = match family {
        "eq1" | "eq2" => "prop",
        "S1" | "S2" | "S2prime" => "compat",
        f => f,
    };
    let tol = ladder_tolerance(fam, digits);
    out.push(LadderCheck { family, n, z, residual: r, tol, pass: r.rel <= tol });
}

/// Every ladder family for `n` in `n_list` at each `z` in `zs`, sharing one
/// quadrature bundle per `z`. Needs `ops.n_max >= max(n_list) + 1`.
pub fn ladder_sweep(ops: &OPSystem, p: &WeightParams, n_list: &[usize], zs: &[f64], ctx: &PrecisionContext) -> Result<Vec<LadderCheck>> {
    let n_hi = n_list.iter().copied().max().unwrap_or(0);
    let top = n_hi + 1;
    if top > ops.n_max {
        return Err(Error::invalid(format!("ladder sweep to n = {n_hi} needs n_max >= {top}")));
    }
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let bits = inner.bits();
    let digits = ctx.digits();
    let se = ctx.sqrt_eps();
    let mut out = Vec::new();
    let mut base: Option<CauchyBundle> = None;
    for &zf in zs {
        let z = Float::with_val(bits, zf);
        let (col, b) = ladder_column(ops, p, top, &z, ctx)?;
        let (da, db) = z_derivatives(ops, &b, n_hi, &col.z, ctx)?;
        for &n in n_list {
            if n >= 1 {
                push(&mut out, "lowering", n, zf, residual_of(&lowering_terms(ops, &col, n)?), digits);
                push(&mut out, "raising", n, zf, residual_of(&raising_terms(ops, &col, n)?), digits);
            }
            push(&mut out, "S1", n, zf, residual_of(&s1_terms(ops, &col, n)), digits);
            push(&mut out, "S2", n, zf, residual_of(&s2_terms(ops, &col, n)), digits);
            push(&mut out, "S2prime", n, zf, residual_of(&s2p_terms(ops, &col, n)), digits);
            push(&mut out, "ode_pn", n, zf, residual_of(&ode_terms(ops, &col, &da, &db, n, &se)?), digits);
        }
        if base.is_none() {
            base = Some(b);
        }
    }
    let Some(base) = base else { return Ok(out) };
    for &n in n_list {
        push(&mut out, "eq1", n, 0.0, residual_of(&eq1_terms(ops, &base, n, bits)), digits);
        if n >= 1 {
            push(&mut out, "eq2", n, 0.0, residual_of(&eq2_terms(ops, &base, n, bits)), digits);
        }
    }
    // two-point slope of the truncation remainder
    let z1 = Float::with_val(bits, -1000);
    let z2 = Float::with_val(bits, -10000);
    let c1 = column_shifted(ops, &base, n_hi, &z1, &inner)?;
    let c2 = column_shifted(ops, &base, n_hi, &z2, &inner)?;
    for &n in n_list {
        let (a1, b1) = expansion_remainders(ops, &c1, &base, n);
        let (a2, b2) = expansion_remainders(ops, &c2, &base, n);
        let slope = |r1: &Float, r2: &Float| {
            if r2.is_zero() {
                f64::INFINITY
            } else {
                (crate::opsys::log10(r1) - crate::opsys::log10(r2) - 4.0).abs()
            }
        };
        let dev = slope(&a1, &a2).max(if n == 0 { 0.0 } else { slope(&b1, &b2) });
        let abs = a1.to_f64().max(b1.to_f64());
        push(&mut out, "expansion", n, -1000.0, Residual { abs, rel: dev }, digits);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opsys::{build_for_params, BuildOptions};
    use crate::numerics::make_context;

    fn setup(digits: u32, p: &WeightParams, n_max: usize) -> (PrecisionContext, OPSystem) {
        let ctx = make_context(digits).unwrap();
        let ops = build_for_params(p, n_max, &ctx.with_extra_digits(VERIFY_GUARD), &BuildOptions::default()).unwrap();
        (ctx, ops)
    }

    #[test]
    fn alpha_integral_cross_check() {
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let (ctx, ops) = setup(40, &p, 3);
        let inner = ctx.with_extra_digits(VERIFY_GUARD);
        let b = cauchy_bundle(&ops, 3, None, &inner).unwrap();
        for n in 0..=3 {
            let lhs = Float::with_val(inner.bits(), &b.sq_y[n] * p.alpha()) / &ops.h[n];
            let rn = Float::with_val(inner.bits(), &b.sq_t[n] * p.gamma()) / &ops.h[n];
            let d = Float::with_val(inner.bits(), lhs + rn) - 1u32;
            assert!(d.abs() < 1e-30);
        }
    }

    #[test]
    fn identities_hold_at_one_point() {
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let (ctx, ops) = setup(40, &p, 4);
        let z = ctx.num(-1);
        let tol = 1e-20;
        for n in 1..=3 {
            assert!(residual_lowering(&ops, &p, n, &z, &ctx).unwrap().rel < tol);
            assert!(residual_raising(&ops, &p, n, &z, &ctx).unwrap().rel < tol);
            assert!(residual_compat(&ops, &p, n, &z, Compat::S1, &ctx).unwrap().rel < tol);
            assert!(residual_compat(&ops, &p, n, &z, Compat::S2, &ctx).unwrap().rel < tol);
            assert!(residual_prop(&ops, &p, n, PropEq::Eq2, &ctx).unwrap().rel < tol);
            assert!(residual_ode_pn(&ops, &p, n, &z, &ctx).unwrap().rel < 1e-13);
        }
        assert!(residual_compat(&ops, &p, 0, &z, Compat::S2Prime, &ctx).unwrap().rel < tol);
        assert!(residual_prop(&ops, &p, 0, PropEq::Eq1, &ctx).unwrap().rel < tol);
        assert!(residual_ode_pn(&ops, &p, 0, &z, &ctx).unwrap().rel < 1e-13);
    }

    #[test]
    fn leading_coefficients() {
        let p = WeightParams::new(1.3, 2.0, 1.0, 1.0, 0.7);
        let (ctx, ops) = setup(40, &p, 2);
        let z = ctx.num(-1e6);
        let e = eval_ladder(&ops, &p, 2, &z, &ctx).unwrap();
        let za = Float::with_val(ctx.bits(), &e.big_a * &z) - 1u32;
        let zb = Float::with_val(ctx.bits(), &e.big_b * &z) + 2u32;
        assert!(za.abs() < 1e-4);
        assert!(zb.abs() < 1e-4);
    }

    #[test]
    fn rejects_nonnegative_z() {
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let (ctx, ops) = setup(30, &p, 2);
        assert!(eval_ladder(&ops, &p, 1, &ctx.num(0.5), &ctx).is_err());
    }

    #[test]
    fn sweep_passes() {
        let p = WeightParams::new(1.3, 1.5, 1.0, 1.0, 1.0);
        let (ctx, ops) = setup(40, &p, 4);
        let checks = ladder_sweep(&ops, &p, &[1, 2, 3], &[-1.0, -5.0], &ctx).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
    }
}
