//! Lower and upper incomplete gamma functions.

use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::context::PrecisionContext;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaKind {
    Lower,
    Upper,
}

/// `gamma(a, x)` or `Gamma(a, x)` to relative accuracy about `ctx.eps()`.
pub fn incomplete_gamma(a: &Float, x: &Float, kind: GammaKind, ctx: &PrecisionContext) -> Result<Float> {
    if !(*a > 0) {
        return Err(Error::invalid("incomplete gamma needs a > 0"));
    }
    if x.is_sign_negative() && !x.is_zero() {
        return Err(Error::invalid("incomplete gamma needs x >= 0"));
    }
    let bits = ctx.bits();
    if x.is_zero() {
        return Ok(match kind {
            GammaKind::Lower => Float::with_val(bits, 0),
            GammaKind::Upper => Float::with_val(bits, a.gamma_ref()),
        });
    }
    let af = a.to_f64();
    let xf = x.to_f64();
    match kind {
        GammaKind::Lower => {
            if xf <= af + 1.0 {
                lower_series(a, x, bits)
            } else {
                // Subtracting from Gamma(a) loses about log2(Gamma(a)/gamma(a,x)) bits; here gamma ~ Gamma.
                let up = upper_cf(a, x, bits + 16).or_else(|_| {
                    let g = lower_series(a, x, bits + 16)?;
                    Ok::<Float, Error>(Float::with_val(bits + 16, Float::with_val(bits + 16, a.gamma_ref()) - g))
                })?;
                let full = Float::with_val(bits + 16, a.gamma_ref());
                Ok(Float::with_val(bits, full - up))
            }
        }
        GammaKind::Upper => {
            if xf > af + 1.0 {
                if let Ok(v) = upper_cf(a, x, bits) {
                    return Ok(v);
                }
            }
            // ln Gamma(a,x) ~ (a-1) ln x - x for x > a, else ln Gamma(a)
            let ln_full = ln_gamma_f64(af);
            let ln_up = if xf > af { (af - 1.0) * xf.ln() - xf } else { ln_full - 1.0 };
            let loss = ((ln_full - ln_up) / std::f64::consts::LN_2).max(0.0).ceil() as u32 + 32;
            let p = bits + loss;
            let g = lower_series(&Float::with_val(p, a), &Float::with_val(p, x), p)?;
            let full = Float::with_val(p, Float::with_val(p, a).gamma_ref());
            let v = Float::with_val(p, full - g);
            if !(v > 0) {
                return Err(Error::precision("upper incomplete gamma lost all significance"));
            }
            Ok(Float::with_val(bits, v))
        }
    }
}

fn ln_gamma_f64(a: f64) -> f64 {
    Float::with_val(64, a).ln_gamma().to_f64()
}

/// `x^a e^{-x} sum_k x^k / (a (a+1) ... (a+k))`.
fn lower_series(a: &Float, x: &Float, bits: u32) -> Result<Float> {
    let p = bits + 16;
    let a = Float::with_val(p, a);
    let x = Float::with_val(p, x);
    let mut term = Float::with_val(p, a.recip_ref());
    let mut sum = term.clone();
    let max_iter = 100_000 + 10 * (x.to_f64() as usize);
    let xf = x.to_f64();
    let af = a.to_f64();
    for k in 1..max_iter {
        term *= &x;
        term /= Float::with_val(p, &a + k as u32);
        sum += &term;
        if (k as f64) + af > xf {
            let rel = Float::with_val(p, &term / &sum);
            if rel.get_exp().map_or(true, |e| e < -(p as i32)) {
                let pre = Float::with_val(p, Float::with_val(p, x.ln_ref()) * &a) - &x;
                return Ok(Float::with_val(bits, sum * pre.exp()));
            }
        }
    }
    Err(Error::precision("lower incomplete gamma series did not converge"))
}

/// Modified Lentz evaluation of the continued fraction for `Gamma(a, x)`.
fn upper_cf(a: &Float, x: &Float, bits: u32) -> Result<Float> {
    let p = bits + 16;
    let a = Float::with_val(p, a);
    let x = Float::with_val(p, x);
    let tiny = Float::with_val(p, Float::with_val(p, 2).pow(-(p as i32) * 4));
    let mut b = Float::with_val(p, Float::with_val(p, &x + 1u32) - &a);
    let mut c = Float::with_val(p, tiny.recip_ref());
    let mut d = Float::with_val(p, b.recip_ref());
    let mut h = d.clone();
    let max_iter = 20 * p as usize + 1000;
    for i in 1..max_iter {
        let i_f = Float::with_val(p, i as u32);
        let an = -Float::with_val(p, Float::with_val(p, &i_f - &a) * &i_f);
        b += 2u32;
        d = Float::with_val(p, Float::with_val(p, &an * &d) + &b);
        if d.is_zero() {
            d = tiny.clone();
        }
        c = Float::with_val(p, Float::with_val(p, &an / &c) + &b);
        if c.is_zero() {
            c = tiny.clone();
        }
        d = d.recip();
        let del = Float::with_val(p, &d * &c);
        h *= &del;
        let dev = Float::with_val(p, del - 1u32).abs();
        if dev.is_zero() || dev.get_exp().map_or(true, |e| e < -(p as i32) + 2) {
            let pre = Float::with_val(p, Float::with_val(p, x.ln_ref()) * &a) - &x;
            return Ok(Float::with_val(bits, h * pre.exp()));
        }
    }
    Err(Error::precision("upper incomplete gamma continued fraction did not converge"))
}

/// `Gamma(a0 + m, x)` and `gamma(a0 + m, x)` for `m = 0..count`, by the
/// stable directions of the two recurrences: upward for the upper function,
/// downward for the lower one.
pub fn incomplete_gamma_ladder(a0: &Float, x: &Float, count: usize, ctx: &PrecisionContext) -> Result<(Vec<Float>, Vec<Float>)> {
    let bits = ctx.bits();
    if count == 0 {
        return Ok((vec![], vec![]));
    }
    let p = bits + 16;
    let inner = ctx.at_digits(ctx.digits() + 5)?;
    let x = Float::with_val(p, x);
    let a_at = |m: usize| Float::with_val(p, a0 + m as u32);
    // x^a e^{-x} at a = a0 + m
    let lnx = Float::with_val(p, x.ln_ref());
    let kernel = |a: &Float| -> Float {
        if x.is_zero() {
            return Float::with_val(p, 0);
        }
        Float::with_val(p, Float::with_val(p, &lnx * a) - &x).exp()
    };
    let mut upper = Vec::with_capacity(count);
    let mut u = incomplete_gamma(&a_at(0), &x, GammaKind::Upper, &inner)?;
    u.set_prec(p);
    for m in 0..count {
        if m > 0 {
            let a = a_at(m - 1);
            u = Float::with_val(p, &u * &a) + kernel(&a);
        }
        upper.push(Float::with_val(bits, &u));
    }
    let mut lower = vec![Float::with_val(bits, 0); count];
    let mut l = incomplete_gamma(&a_at(count - 1), &x, GammaKind::Lower, &inner)?;
    l.set_prec(p);
    for m in (0..count).rev() {
        if m + 1 < count {
            let a = a_at(m);
            l = (l + kernel(&a)) / &a;
        }
        lower[m] = Float::with_val(bits, &l);
    }
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::context::make_context;

    fn rel(a: &Float, b: &Float) -> f64 {
        let d = Float::with_val(a.prec(), a - b).abs();
        Float::with_val(a.prec(), d / b).abs().to_f64()
    }

    #[test]
    fn exponential_case() {
        let ctx = make_context(60).unwrap();
        let x = Float::with_val(ctx.bits(), 2).ln();
        let v = incomplete_gamma(&ctx.num(1), &x, GammaKind::Lower, &ctx).unwrap();
        assert!(rel(&v, &ctx.num(0.5)) < 1e-58);
        let u = incomplete_gamma(&ctx.num(1), &ctx.num(0), GammaKind::Upper, &ctx).unwrap();
        assert_eq!(u, 1);
    }

    #[test]
    fn lower_plus_upper_is_gamma() {
        let ctx = make_context(80).unwrap();
        for a in [0.5, 1.3, 7.25] {
            for x in [0.1, 1.0, 3.0, 9.0, 30.0] {
                let a = ctx.num(a);
                let x = ctx.num(x);
                let l = incomplete_gamma(&a, &x, GammaKind::Lower, &ctx).unwrap();
                let u = incomplete_gamma(&a, &x, GammaKind::Upper, &ctx).unwrap();
                let s = Float::with_val(ctx.bits(), &l + &u);
                let g = Float::with_val(ctx.bits(), a.gamma_ref());
                assert!(rel(&s, &g) < 1e-78, "a={a} x={x}");
            }
        }
    }

    #[test]
    fn ladder_matches_direct() {
        let ctx = make_context(50).unwrap();
        let a0 = ctx.num(2.3);
        let x = ctx.num(12.0);
        let (lo, up) = incomplete_gamma_ladder(&a0, &x, 30, &ctx).unwrap();
        for m in [0usize, 7, 15, 29] {
            let a = Float::with_val(ctx.bits(), &a0 + m as u32);
            let l = incomplete_gamma(&a, &x, GammaKind::Lower, &ctx).unwrap();
            let u = incomplete_gamma(&a, &x, GammaKind::Upper, &ctx).unwrap();
            assert!(rel(&lo[m], &l) < 1e-48, "lower m={m}");
            assert!(rel(&up[m], &u) < 1e-48, "upper m={m}");
        }
    }
}
