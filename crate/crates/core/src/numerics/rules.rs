//! Gauss rules at arbitrary precision.
//!
//! Nodes are located in double precision by Sturm-sequence bisection on the
//! Jacobi matrix of the weight, then refined by Newton iteration on the
//! classical polynomial at the working precision.

use std::sync::Arc;

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::context::PrecisionContext;

/// Family of a Gauss rule.
///
/// `Jacobi { lo, hi }` carries the exponents of `(1+x)^lo (1-x)^hi` on
/// `[-1, 1]`, so `lo` belongs to the left endpoint. `ExpTail { exponent }` is
/// generalized Gauss-Laguerre for `x^exponent e^{-x}` on `[0, inf)`.
#[derive(Clone, Debug, PartialEq)]
pub enum RuleKind {
    Legendre,
    Jacobi { lo: Float, hi: Float },
    ExpTail { exponent: Float },
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
    pub order: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct RuleKey {
    tag: u8,
    lo: String,
    hi: String,
    order: usize,
    bits: u32,
}

/// Gauss-Legendre rule of `order` nodes on `[-1, 1]`.
pub fn legendre(order: usize, ctx: &PrecisionContext) -> Result<Arc<QuadratureRule>> {
    let zero = Float::new(64);
    jacobi_rule(&zero, &zero, order, ctx)
}

/// Gauss-Jacobi rule for `(1+x)^lo (1-x)^hi` on `[-1, 1]`.
pub fn jacobi(lo: &Float, hi: &Float, order: usize, ctx: &PrecisionContext) -> Result<Arc<QuadratureRule>> {
    if !(*lo > -1) || !(*hi > -1) {
        return Err(Error::invalid("Jacobi exponents must exceed -1"));
    }
    jacobi_rule(lo, hi, order, ctx)
}

fn jacobi_rule(lo: &Float, hi: &Float, order: usize, ctx: &PrecisionContext) -> Result<Arc<QuadratureRule>> {
    if order == 0 {
        return Err(Error::invalid("rule order must be positive"));
    }
    let tag = if lo.is_zero() && hi.is_zero() { 0 } else { 1 };
    let key = RuleKey {
        tag,
        lo: lo.to_string_radix(16, None),
        hi: hi.to_string_radix(16, None),
        order,
        bits: ctx.bits(),
    };
    ctx.rules().get_or_insert(key, || {
        // Classical parameters: weight (1-x)^a (1+x)^b.
        let bits = ctx.bits();
        let fa = Float::with_val(bits, hi);
        let fb = Float::with_val(bits, lo);
        let guesses = jacobi_guesses(fa.to_f64(), fb.to_f64(), order);
        let constant = jacobi_weight_constant(&fa, &fb, order, bits);
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for g in guesses {
            let x = newton_refine(g, bits, |x, p| {
                let (pm, dpm) = jacobi_eval(&Float::with_val(p, &fa), &Float::with_val(p, &fb), order, x);
                (pm, dpm)
            })?;
            let (_, d) = jacobi_eval(&fa, &fb, order, &x);
            let one_minus = Float::with_val(bits, 1 - Float::with_val(bits, &x * &x));
            let denom = Float::with_val(bits, &one_minus * &d) * &d;
            weights.push(Float::with_val(bits, &constant / &denom));
            nodes.push(x);
        }
        let kind = if tag == 0 {
            RuleKind::Legendre
        } else {
            RuleKind::Jacobi { lo: fb, hi: fa }
        };
        Ok(QuadratureRule { kind, nodes, weights, order })
    })
}

/// Generalized Gauss-Laguerre rule for `x^exponent e^{-x}` on `[0, inf)`.
pub fn exp_tail(exponent: &Float, order: usize, ctx: &PrecisionContext) -> Result<Arc<QuadratureRule>> {
    if order == 0 {
        return Err(Error::invalid("rule order must be positive"));
    }
    if !(*exponent > -1) {
        return Err(Error::invalid("Laguerre exponent must exceed -1"));
    }
    let key = RuleKey {
        tag: 2,
        lo: exponent.to_string_radix(16, None),
        hi: String::new(),
        order,
        bits: ctx.bits(),
    };
    ctx.rules().get_or_insert(key, || {
        let bits = ctx.bits();
        let a = Float::with_val(bits, exponent);
        let guesses = laguerre_guesses(a.to_f64(), order);
        // Gamma(m+a+1)/m!
        let lg = Float::with_val(bits, Float::with_val(bits, &a + (order as u32 + 1)).ln_gamma_ref());
        let lf = Float::with_val(bits, Float::with_val(bits, order as u32 + 1).ln_gamma_ref());
        let constant = Float::with_val(bits, lg - lf).exp();
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for g in guesses {
            let x = newton_refine(g, bits, |x, p| laguerre_eval(&Float::with_val(p, &a), order, x))?;
            let (_, d) = laguerre_eval(&a, order, &x);
            let denom = Float::with_val(bits, &x * &d) * &d;
            weights.push(Float::with_val(bits, &constant / &denom));
            nodes.push(x);
        }
        Ok(QuadratureRule { kind: RuleKind::ExpTail { exponent: a }, nodes, weights, order })
    })
}

/// Newton iteration with precision doubling, starting from a double guess.
fn newton_refine<F>(guess: f64, bits: u32, eval: F) -> Result<Float>
where
    F: Fn(&Float, u32) -> (Float, Float),
{
    let mut prec = 64u32;
    let mut x = Float::with_val(prec, guess);
    loop {
        prec = (prec * 2).min(bits + 16);
        x.set_prec(prec);
        let passes = if prec >= bits + 16 { 3 } else { 2 };
        for _ in 0..passes {
            let (p, d) = eval(&x, prec);
            if d.is_zero() {
                return Err(Error::precision("vanishing derivative while refining a Gauss node"));
            }
            let step = Float::with_val(prec, &p / &d);
            x -= step;
        }
        if prec >= bits + 16 {
            break;
        }
    }
    x.set_prec(bits);
    Ok(x)
}

/// `P_m^{(a,b)}(x)` and its derivative; weight `(1-x)^a (1+x)^b`.
fn jacobi_eval(a: &Float, b: &Float, m: usize, x: &Float) -> (Float, Float) {
    let p = x.prec();
    let ab = Float::with_val(p, a + b);
    let mut prev = Float::with_val(p, 1);
    let mut cur = Float::with_val(p, Float::with_val(p, &ab + 2u32) * x);
    cur += Float::with_val(p, a - b);
    cur /= 2u32;
    if m == 0 {
        return (prev, Float::with_val(p, 0));
    }
    let a2b2 = Float::with_val(p, Float::with_val(p, a * a) - Float::with_val(p, b * b));
    for n in 2..=m {
        let nf = n as u32;
        let two_n_ab = Float::with_val(p, &ab + 2 * nf);
        let c1 = Float::with_val(p, 2 * nf) * Float::with_val(p, &ab + nf) * Float::with_val(p, &two_n_ab - 2u32);
        let c2 = Float::with_val(p, &two_n_ab - 1u32);
        let c3 = Float::with_val(p, &two_n_ab * Float::with_val(p, &two_n_ab - 2u32)) * x + &a2b2;
        let c4 = Float::with_val(p, 2u32)
            * Float::with_val(p, a + (nf - 1))
            * Float::with_val(p, b + (nf - 1))
            * &two_n_ab;
        let next = (Float::with_val(p, &c2 * &c3) * &cur - Float::with_val(p, &c4 * &prev)) / c1;
        prev = cur;
        cur = next;
    }
    // (2m+a+b)(1-x^2) P_m' = m[(a-b) - (2m+a+b)x] P_m + 2(m+a)(m+b) P_{m-1}
    let mf = m as u32;
    let tmab = Float::with_val(p, &ab + 2 * mf);
    let lhs = Float::with_val(p, &tmab * Float::with_val(p, 1 - Float::with_val(p, x * x)));
    let t1 = Float::with_val(p, Float::with_val(p, a - b) - Float::with_val(p, &tmab * x)) * mf * &cur;
    let t2 = Float::with_val(p, 2u32) * Float::with_val(p, a + mf) * Float::with_val(p, b + mf) * &prev;
    let d = Float::with_val(p, t1 + t2) / lhs;
    (cur, d)
}

/// `L_m^{(a)}(x)` and its derivative.
fn laguerre_eval(a: &Float, m: usize, x: &Float) -> (Float, Float) {
    let p = x.prec();
    let mut prev = Float::with_val(p, 1);
    let mut cur = Float::with_val(p, Float::with_val(p, a + 1u32) - x);
    if m == 0 {
        return (prev, Float::with_val(p, 0));
    }
    for k in 1..m {
        let kf = k as u32;
        let c = Float::with_val(p, Float::with_val(p, a + (2 * kf + 1)) - x);
        let next = (Float::with_val(p, &c * &cur) - Float::with_val(p, a + kf) * &prev) / (kf + 1);
        prev = cur;
        cur = next;
    }
    // x L_m' = m L_m - (m+a) L_{m-1}
    let mf = m as u32;
    let d = (Float::with_val(p, &cur * mf) - Float::with_val(p, a + mf) * &prev) / x;
    (cur, d)
}

fn jacobi_weight_constant(a: &Float, b: &Float, m: usize, bits: u32) -> Float {
    let mf = m as u32;
    let lg = |v: Float| Float::with_val(bits, v.ln_gamma_ref());
    let num = lg(Float::with_val(bits, a + (mf + 1))) + lg(Float::with_val(bits, b + (mf + 1)));
    let den = lg(Float::with_val(bits, Float::with_val(bits, a + b) + (mf + 1))) + lg(Float::with_val(bits, mf + 1));
    let ln2 = Float::with_val(bits, Constant::Log2);
    let pw = Float::with_val(bits, Float::with_val(bits, a + b) + 1u32) * ln2;
    Float::with_val(bits, num - den + pw).exp()
}

/// Eigenvalues of a symmetric tridiagonal matrix by Sturm bisection.
fn tridiagonal_eigenvalues(diag: &[f64], off2: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let m = diag.len();
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..m {
            let prev = if q == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { q };
            q = diag[i] - x - off2[i - 1] / prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    (0..m)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if count_below(mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

fn jacobi_guesses(a: f64, b: f64, m: usize) -> Vec<f64> {
    let mut diag = Vec::with_capacity(m);
    let mut off2 = Vec::with_capacity(m.saturating_sub(1));
    for k in 0..m {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        diag.push(if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        });
    }
    for k in 1..m {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let beta = if k == 1 {
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
        } else {
            4.0 * kf * (kf + a) * (kf + b) * (kf + a + b) / (s * s * (s + 1.0) * (s - 1.0))
        };
        off2.push(beta);
    }
    tridiagonal_eigenvalues(&diag, &off2, -1.0, 1.0)
}

fn laguerre_guesses(a: f64, m: usize) -> Vec<f64> {
    let diag: Vec<f64> = (0..m).map(|k| 2.0 * k as f64 + a + 1.0).collect();
    let off2: Vec<f64> = (1..m).map(|k| k as f64 * (k as f64 + a)).collect();
    let hi = 4.0 * m as f64 + 2.0 * a.abs() + 10.0;
    tridiagonal_eigenvalues(&diag, &off2, 0.0, hi)
}

/// `Float` power with shortcuts for integer exponents.
pub(crate) fn powf(base: &Float, e: &Float) -> Float {
    let p = base.prec().max(e.prec());
    if e.is_zero() {
        return Float::with_val(p, 1);
    }
    if e.is_integer() && e.to_f64().abs() < 64.0 {
        let k = e.to_f64() as i32;
        return Float::with_val(p, base.pow(k));
    }
    Float::with_val(p, base.pow(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::context::make_context;

    fn close(a: &Float, b: &Float, tol: f64) -> bool {
        let d = Float::with_val(a.prec(), a - b).abs();
        let s = Float::with_val(a.prec(), b.abs_ref()).max(&Float::with_val(a.prec(), 1e-300));
        d <= Float::with_val(a.prec(), &s * tol)
    }

    #[test]
    fn legendre_integrates_monomials() {
        let ctx = make_context(50).unwrap();
        for m in 1..=20usize {
            let rule = legendre(m, &ctx).unwrap();
            assert_eq!(rule.nodes.len(), m);
            assert!(rule.weights.iter().all(|w| *w > 0));
            for k in 0..(2 * m) as u32 {
                let mut s = Float::with_val(ctx.bits(), 0);
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    s += Float::with_val(ctx.bits(), x.pow(k)) * w;
                }
                let exact = if k % 2 == 1 {
                    Float::with_val(ctx.bits(), 0)
                } else {
                    Float::with_val(ctx.bits(), 2) / (k + 1)
                };
                let d = Float::with_val(ctx.bits(), &s - &exact).abs();
                assert!(d < 1e-48, "m={m} k={k}");
            }
        }
    }

    #[test]
    fn jacobi_integrates_against_weight() {
        let ctx = make_context(40).unwrap();
        let bits = ctx.bits();
        let lo = Float::with_val(bits, -0.5);
        let hi = Float::with_val(bits, 1.5);
        for m in [1usize, 3, 8, 20] {
            let rule = jacobi(&lo, &hi, m, &ctx).unwrap();
            assert!(rule.weights.iter().all(|w| *w > 0));
            // int (1+x)^{-1/2} (1-x)^{3/2} (1+x)^k dx = 2^{k+2} B(k+1/2, 5/2)
            for k in 0..(2 * m) as u32 {
                let mut s = Float::with_val(bits, 0);
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    s += Float::with_val(bits, Float::with_val(bits, x + 1u32).pow(k)) * w;
                }
                let a = Float::with_val(bits, k as f64 + 0.5);
                let b = Float::with_val(bits, 2.5);
                let lb = Float::with_val(bits, a.ln_gamma_ref()) + Float::with_val(bits, b.ln_gamma_ref())
                    - Float::with_val(bits, Float::with_val(bits, &a + &b).ln_gamma_ref());
                let exact = Float::with_val(bits, lb.exp()) * Float::with_val(bits, Float::with_val(bits, 2).pow(k + 2));
                assert!(close(&s, &exact, 1e-38), "m={m} k={k}");
            }
        }
    }

    #[test]
    fn laguerre_integrates_moments() {
        let ctx = make_context(40).unwrap();
        let bits = ctx.bits();
        let a = Float::with_val(bits, 0.3);
        for m in [1usize, 5, 16] {
            let rule = exp_tail(&a, m, &ctx).unwrap();
            for k in 0..(2 * m) as u32 {
                let mut s = Float::with_val(bits, 0);
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    s += Float::with_val(bits, x.pow(k)) * w;
                }
                let exact = Float::with_val(bits, Float::with_val(bits, &a + (k + 1)).gamma_ref());
                assert!(close(&s, &exact, 1e-37), "m={m} k={k}");
            }
        }
    }

    #[test]
    fn large_order_weights_sum() {
        let ctx = make_context(30).unwrap();
        let rule = legendre(512, &ctx).unwrap();
        let s: Float = rule.weights.iter().fold(Float::with_val(ctx.bits(), 0), |acc, w| acc + w);
        let d = Float::with_val(ctx.bits(), s - 2u32).abs();
        assert!(d < 1e-29);
        for w in rule.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}
