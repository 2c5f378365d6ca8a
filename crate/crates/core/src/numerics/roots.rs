//! Real roots of real polynomials.
//!
//! Critical points are found recursively from the derivative; between
//! consecutive critical points the polynomial is monotone, so every sign change
//! brackets exactly one root. Critical points where the polynomial nearly
//! vanishes are reported as multiple roots.

use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::context::PrecisionContext;

#[derive(Clone, Debug)]
pub struct RealRoot {
    pub value: Float,
    pub multiplicity: usize,
}

/// Horner evaluation; coefficients in ascending degree.
pub fn poly_eval(coeffs: &[Float], x: &Float) -> Float {
    let p = x.prec();
    let mut acc = Float::with_val(p, 0);
    for c in coeffs.iter().rev() {
        acc *= x;
        acc += c;
    }
    acc
}

/// `sum |c_k| |x|^k`, the natural scale of `p(x)`.
pub fn poly_scale(coeffs: &[Float], x: &Float) -> Float {
    let p = x.prec();
    let ax = Float::with_val(p, x.abs_ref());
    let mut acc = Float::with_val(p, 0);
    for c in coeffs.iter().rev() {
        acc *= &ax;
        acc += Float::with_val(p, c.abs_ref());
    }
    acc
}

pub fn poly_derivative(coeffs: &[Float]) -> Vec<Float> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| Float::with_val(c.prec(), c * k as u32))
        .collect()
}

/// All distinct real roots, ascending, with multiplicity estimates.
pub fn poly_real_roots_mult(coeffs: &[Float], ctx: &PrecisionContext) -> Result<Vec<RealRoot>> {
    let mut c: Vec<Float> = coeffs.iter().map(|v| Float::with_val(ctx.bits(), v)).collect();
    while c.len() > 1 && c.last().map_or(false, |v| v.is_zero()) {
        c.pop();
    }
    if c.len() < 2 {
        return Err(Error::invalid("polynomial of degree 0 has no roots to find"));
    }
    if coeffs.last().map_or(true, |v| v.is_zero()) {
        return Err(Error::invalid("leading coefficient must be nonzero"));
    }
    Ok(roots_rec(&c, ctx))
}

/// Distinct real roots, ascending.
pub fn poly_real_roots(coeffs: &[Float], ctx: &PrecisionContext) -> Result<Vec<Float>> {
    Ok(poly_real_roots_mult(coeffs, ctx)?.into_iter().map(|r| r.value).collect())
}

fn roots_rec(c: &[Float], ctx: &PrecisionContext) -> Vec<RealRoot> {
    let bits = ctx.bits();
    let deg = c.len() - 1;
    if deg == 1 {
        let v = Float::with_val(bits, -&c[0]) / &c[1];
        return vec![RealRoot { value: v, multiplicity: 1 }];
    }
    let crit = roots_rec(&poly_derivative(c), ctx);
    let lead = Float::with_val(bits, c[deg].abs_ref());
    let mut bound = Float::with_val(bits, 0);
    for v in &c[..deg] {
        let r = Float::with_val(bits, v.abs_ref()) / &lead;
        if r > bound {
            bound = r;
        }
    }
    bound += 1u32;
    let mut grid = vec![Float::with_val(bits, -&bound)];
    grid.extend(crit.iter().map(|r| r.value.clone()));
    grid.push(bound);

    let sqrt_eps = ctx.sqrt_eps();
    let mut out: Vec<RealRoot> = Vec::new();
    for w in grid.windows(2) {
        let fa = poly_eval(c, &w[0]);
        let fb = poly_eval(c, &w[1]);
        if fa.is_zero() || fb.is_zero() || fa.is_sign_negative() == fb.is_sign_negative() {
            continue;
        }
        let r = bracketed_root(c, &w[0], &w[1], fa.is_sign_negative(), bits);
        out.push(RealRoot { value: r, multiplicity: 1 });
    }
    for cr in &crit {
        let v = poly_eval(c, &cr.value);
        let scale = poly_scale(c, &cr.value);
        let small = v.is_zero() || Float::with_val(bits, v.abs_ref()) <= Float::with_val(bits, &scale * &sqrt_eps);
        if !small {
            continue;
        }
        let close = |x: &Float| {
            let d = Float::with_val(bits, x - &cr.value).abs();
            let s = Float::with_val(bits, cr.value.abs_ref()) + 1u32;
            d <= Float::with_val(bits, s * &sqrt_eps)
        };
        if out.iter().any(|r| close(&r.value)) {
            continue;
        }
        out.push(RealRoot { value: cr.value.clone(), multiplicity: cr.multiplicity + 1 });
    }
    out.sort_by(|a, b| a.value.partial_cmp(&b.value).expect("finite roots"));
    out
}

/// Safeguarded Newton iteration inside a sign-change bracket.
fn bracketed_root(c: &[Float], lo: &Float, hi: &Float, lo_negative: bool, bits: u32) -> Float {
    let dc = poly_derivative(c);
    let mut a = lo.clone();
    let mut b = hi.clone();
    let mut x = Float::with_val(bits, &a + &b) / 2u32;
    for _ in 0..(4 * bits as usize + 200) {
        let fx = poly_eval(c, &x);
        if fx.is_zero() {
            return x;
        }
        if fx.is_sign_negative() == lo_negative {
            a = x.clone();
        } else {
            b = x.clone();
        }
        let width = Float::with_val(bits, &b - &a);
        let mag = Float::with_val(bits, x.abs_ref()) + 1u32;
        if width.is_zero() || width.get_exp().unwrap_or(i32::MIN) < mag.get_exp().unwrap_or(0) - bits as i32 + 2 {
            return x;
        }
        let d = poly_eval(&dc, &x);
        let cand = if d.is_zero() {
            None
        } else {
            let n = Float::with_val(bits, &x - Float::with_val(bits, &fx / &d));
            if n > a && n < b {
                Some(n)
            } else {
                None
            }
        };
        let next = cand.unwrap_or_else(|| Float::with_val(bits, &a + &b) / 2u32);
        if next == x {
            return x;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::context::make_context;

    fn coeffs(ctx: &PrecisionContext, v: &[f64]) -> Vec<Float> {
        v.iter().map(|&x| ctx.num(x)).collect()
    }

    #[test]
    fn difference_of_squares() {
        let ctx = make_context(40).unwrap();
        let r = poly_real_roots(&coeffs(&ctx, &[-1.0, 0.0, 1.0]), &ctx).unwrap();
        assert_eq!(r.len(), 2);
        assert!(Float::with_val(ctx.bits(), &r[0] + 1u32).abs() < 1e-38);
        assert!(Float::with_val(ctx.bits(), &r[1] - 1u32).abs() < 1e-38);
    }

    #[test]
    fn triple_root() {
        let ctx = make_context(40).unwrap();
        let r = poly_real_roots_mult(&coeffs(&ctx, &[0.0, 0.0, 0.0, 1.0]), &ctx).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].value.is_zero());
        assert_eq!(r[0].multiplicity, 3);
    }

    #[test]
    fn degree_zero_rejected() {
        let ctx = make_context(40).unwrap();
        assert!(poly_real_roots(&coeffs(&ctx, &[3.0]), &ctx).is_err());
    }

    #[test]
    fn close_simple_roots_separate() {
        let ctx = make_context(40).unwrap();
        // (x - 1)(x - 1.001)(x + 2)
        let c = coeffs(&ctx, &[2.002, -0.001 - 2.0 * 2.001 + 1.001, 2.001 - 2.0 - 0.0, 1.0]);
        let c = {
            // expand exactly in multiprecision
            let b = ctx.bits();
            let r1 = ctx.num(1);
            let r2 = Float::with_val(b, 1.001);
            let r3 = ctx.num(-2);
            let s1 = Float::with_val(b, &r1 + &r2) + &r3;
            let s2 = Float::with_val(b, &r1 * &r2) + Float::with_val(b, &r1 * &r3) + Float::with_val(b, &r2 * &r3);
            let s3 = Float::with_val(b, &r1 * &r2) * &r3;
            let _ = c;
            vec![-s3, s2, -s1, ctx.num(1)]
        };
        let r = poly_real_roots(&c, &ctx).unwrap();
        assert_eq!(r.len(), 3);
    }
}
