//! Adaptive Gauss quadrature for integrands of the form
//! `prod |y - a_k|^{e_k} * g(y)` with `g` smooth away from a finite set of
//! points.
//!
//! The interval is cut into panels whose width is bounded by the distance to
//! the nearest singular point, so each panel sees an analytic integrand.
//! Factors sitting on a panel endpoint are absorbed into a Gauss-Jacobi weight.
//! Every panel escalates its rule order until two successive orders agree.

use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::context::PrecisionContext;
use crate::numerics::rules::{self, powf, QuadratureRule};

/// Rule orders tried in sequence on every panel.
pub const ORDERS: [usize; 19] = [
    8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024, 1536, 2048, 3072, 4096,
];

/// Width of a panel relative to its distance from the nearest singular point.
const GRADING: f64 = 1.0;

const MAX_PANELS: usize = 20_000;

/// An algebraic factor `|y - at|^exponent` of the integrand.
#[derive(Clone, Debug)]
pub struct Factor {
    pub at: Float,
    pub exponent: Float,
}

impl Factor {
    pub fn new(at: Float, exponent: Float) -> Self {
        Factor { at, exponent }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Side {
    Lo,
    Hi,
}

#[derive(Clone, Debug)]
struct Panel {
    a: Float,
    b: Float,
    /// Factors absorbed into the rule weight, with the endpoint they sit on.
    absorbed: Vec<(usize, Side)>,
}

/// Integrates the vector-valued `g` times the factors over `[lo, hi]`, or over
/// `[lo, inf)` when `hi` is `None`. `poles` lists points near the contour where
/// `g` is not analytic. `decay` bounds the exponential decay rate of the
/// integrand in the tail and sets the largest tail panel.
pub fn integrate_factored<G>(
    g: &G,
    dim: usize,
    lo: &Float,
    hi: Option<&Float>,
    factors: &[Factor],
    poles: &[Float],
    decay: f64,
    ctx: &PrecisionContext,
) -> Result<Vec<Float>>
where
    G: Fn(&Float, &mut [Float]) + ?Sized,
{
    let bits = ctx.bits();
    let active: Vec<usize> = (0..factors.len())
        .filter(|&k| !factors[k].exponent.is_zero())
        .collect();
    let mut singular: Vec<Float> = active.iter().map(|&k| factors[k].at.clone()).collect();
    singular.extend(poles.iter().cloned());

    let lo = Float::with_val(bits, lo);
    let mut engine = Engine::new(g, dim, factors, ctx);

    // Interior factor points become breakpoints, including those with a zero
    // exponent, which may still mark a jump of `g`.
    let mut breaks: Vec<Float> = factors
        .iter()
        .map(|f| f.at.clone())
        .filter(|a| *a > lo && hi.map_or(true, |h| *a < *h))
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    breaks.dedup();

    let mut left = lo.clone();
    for bp in &breaks {
        finite_segment(&mut engine, &active, &singular, &left, bp)?;
        left = bp.clone();
    }
    match hi {
        Some(hi) => {
            let hi = Float::with_val(bits, hi);
            if hi < lo {
                return Err(Error::invalid("integration bounds out of order"));
            }
            if hi > left {
                finite_segment(&mut engine, &active, &singular, &left, &hi)?;
            }
        }
        None => {
            let lo_f: Vec<usize> = active.iter().copied().filter(|&k| factors[k].at == left).collect();
            let wmax = 64.0 / decay;
            let mut a = left.clone();
            let mut first = true;
            let mut prev_l1: Option<Vec<Float>> = None;
            let mut count = 0usize;
            loop {
                count += 1;
                if count > MAX_PANELS {
                    return Err(Error::precision("tail integral did not truncate"));
                }
                let exclude: Vec<Float> = if first && !lo_f.is_empty() { vec![a.clone()] } else { vec![] };
                let w = panel_width_forward(&a, exclude.iter(), &singular, wmax, bits);
                let b = Float::with_val(bits, &a + w);
                let absorbed = if first { lo_f.iter().map(|&k| (k, Side::Lo)).collect() } else { vec![] };
                let l1 = engine.run(&Panel { a: a.clone(), b: b.clone(), absorbed })?;
                first = false;
                let past_peak = match &prev_l1 {
                    Some(prev) => l1.iter().zip(prev).all(|(c, p)| c <= p),
                    None => false,
                };
                if past_peak && engine.negligible(&l1) {
                    break;
                }
                prev_l1 = Some(l1);
                a = b;
            }
        }
    }
    Ok(engine.total)
}

fn finite_segment<G>(
    engine: &mut Engine<'_, G>,
    active: &[usize],
    singular: &[Float],
    lo: &Float,
    hi: &Float,
) -> Result<()>
where
    G: Fn(&Float, &mut [Float]) + ?Sized,
{
    let bits = engine.ctx.bits();
    let factors = engine.factors;
    let on = |x: &Float| -> Vec<usize> { active.iter().copied().filter(|&k| factors[k].at == *x).collect() };
    let lo_f = on(lo);
    let hi_f = on(hi);
    let crowded = singular.iter().any(|s| s != lo && s != hi && near(s, lo, hi));
    if !lo_f.is_empty() && !hi_f.is_empty() && !crowded {
        let mut absorbed: Vec<(usize, Side)> = lo_f.iter().map(|&k| (k, Side::Lo)).collect();
        absorbed.extend(hi_f.iter().map(|&k| (k, Side::Hi)));
        engine.run(&Panel { a: lo.clone(), b: hi.clone(), absorbed })?;
    } else if !hi_f.is_empty() && lo_f.is_empty() {
        for p in graded_from_hi(lo, hi, &hi_f, singular, bits) {
            engine.run(&p)?;
        }
    } else if !lo_f.is_empty() && !hi_f.is_empty() {
        let mid = Float::with_val(bits, lo + hi) / 2u32;
        for p in graded_from_lo(lo, &mid, &lo_f, singular, f64::INFINITY, bits) {
            engine.run(&p)?;
        }
        for p in graded_from_hi(&mid, hi, &hi_f, singular, bits) {
            engine.run(&p)?;
        }
    } else {
        for p in graded_from_lo(lo, hi, &lo_f, singular, f64::INFINITY, bits) {
            engine.run(&p)?;
        }
    }
    Ok(())
}

/// Whether `s` is close enough to `[lo, hi]` to require grading.
fn near(s: &Float, lo: &Float, hi: &Float) -> bool {
    let len = Float::with_val(lo.prec(), hi - lo);
    let dl = Float::with_val(lo.prec(), s - lo).abs();
    let dh = Float::with_val(lo.prec(), s - hi).abs();
    dl < len || dh < len
}

/// Largest admissible width of a panel starting at `a` and extending right.
fn panel_width_forward<'a, I>(a: &Float, excluded: I, singular: &[Float], wmax: f64, bits: u32) -> Float
where
    I: Iterator<Item = &'a Float> + Clone,
{
    let mut w = Float::with_val(bits, wmax);
    if !wmax.is_finite() {
        w = Float::with_val(bits, f64::MAX);
    }
    for s in singular {
        if excluded.clone().any(|e| e == s) && s == a {
            continue;
        }
        let d = Float::with_val(bits, s - a);
        let lim = if d > 0 {
            d * (GRADING / (1.0 + GRADING))
        } else if d < 0 {
            Float::with_val(bits, -d) * GRADING
        } else {
            continue;
        };
        if lim < w {
            w = lim;
        }
    }
    w
}

fn panel_width_backward<'a, I>(b: &Float, excluded: I, singular: &[Float], bits: u32) -> Float
where
    I: Iterator<Item = &'a Float> + Clone,
{
    let mut w = Float::with_val(bits, f64::MAX);
    for s in singular {
        if excluded.clone().any(|e| e == s) && s == b {
            continue;
        }
        let d = Float::with_val(bits, b - s);
        let lim = if d > 0 {
            d * (GRADING / (1.0 + GRADING))
        } else if d < 0 {
            Float::with_val(bits, -d) * GRADING
        } else {
            continue;
        };
        if lim < w {
            w = lim;
        }
    }
    w
}

/// Panels covering `[lo, end]`, geometric away from `lo`.
fn graded_from_lo(lo: &Float, end: &Float, lo_f: &[usize], singular: &[Float], wmax: f64, bits: u32) -> Vec<Panel> {
    let lo_pts: Vec<Float> = if lo_f.is_empty() { vec![] } else { vec![lo.clone()] };
    let mut out = Vec::new();
    let mut a = lo.clone();
    let mut first = true;
    while a < *end {
        let w = if first {
            panel_width_forward(&a, lo_pts.iter(), singular, wmax, bits)
        } else {
            panel_width_forward(&a, std::iter::empty(), singular, wmax, bits)
        };
        let mut b = Float::with_val(bits, &a + &w);
        // Avoid a sliver at the end of the segment.
        let rest = Float::with_val(bits, end - &b);
        if b >= *end || rest < Float::with_val(bits, &w * 0.25) {
            b = end.clone();
        }
        let absorbed = if first { lo_f.iter().map(|&k| (k, Side::Lo)).collect() } else { vec![] };
        out.push(Panel { a: a.clone(), b: b.clone(), absorbed });
        first = false;
        a = b;
        if out.len() > MAX_PANELS {
            break;
        }
    }
    out
}

/// Panels covering `[start, hi]`, geometric away from `hi`.
fn graded_from_hi(start: &Float, hi: &Float, hi_f: &[usize], singular: &[Float], bits: u32) -> Vec<Panel> {
    let hi_pts = [hi.clone()];
    let mut out = Vec::new();
    let mut b = hi.clone();
    let mut first = true;
    while b > *start {
        let w = if first {
            panel_width_backward(&b, hi_pts.iter(), singular, bits)
        } else {
            panel_width_backward(&b, std::iter::empty(), singular, bits)
        };
        let mut a = Float::with_val(bits, &b - &w);
        let rest = Float::with_val(bits, &a - start);
        if a <= *start || rest < Float::with_val(bits, &w * 0.25) {
            a = start.clone();
        }
        let absorbed = if first { hi_f.iter().map(|&k| (k, Side::Hi)).collect() } else { vec![] };
        out.push(Panel { a: a.clone(), b: b.clone(), absorbed });
        first = false;
        b = a;
        if out.len() > MAX_PANELS {
            break;
        }
    }
    out.reverse();
    out
}

struct Engine<'g, G: ?Sized> {
    g: &'g G,
    dim: usize,
    factors: &'g [Factor],
    ctx: &'g PrecisionContext,
    total: Vec<Float>,
    total_l1: Vec<Float>,
    start_idx: usize,
}

impl<'g, G> Engine<'g, G>
where
    G: Fn(&Float, &mut [Float]) + ?Sized,
{
    fn new(g: &'g G, dim: usize, factors: &'g [Factor], ctx: &'g PrecisionContext) -> Self {
        let bits = ctx.bits();
        Engine {
            g,
            dim,
            factors,
            ctx,
            total: vec![Float::with_val(bits, 0); dim],
            total_l1: vec![Float::with_val(bits, 0); dim],
            start_idx: 0,
        }
    }

    fn negligible(&self, l1: &[Float]) -> bool {
        let bits = self.ctx.bits();
        let thr = Float::with_val(bits, self.ctx.eps() / 100u32);
        l1.iter().zip(&self.total_l1).all(|(p, t)| {
            if t.is_zero() {
                p.is_zero()
            } else {
                Float::with_val(bits, p / t) <= thr
            }
        })
    }

    /// Integrates one panel to convergence; returns its per-component L1 mass.
    fn run(&mut self, panel: &Panel) -> Result<Vec<Float>> {
        let bits = self.ctx.bits();
        let tol_scale = Float::with_val(bits, self.ctx.eps() * 10u32);
        let mut idx = self.start_idx.saturating_sub(1);
        let mut prev: Option<Vec<Float>> = None;
        loop {
            if idx >= ORDERS.len() {
                return Err(Error::precision(format!(
                    "panel [{}, {}] did not converge at order {}",
                    panel.a.to_f64(),
                    panel.b.to_f64(),
                    ORDERS[ORDERS.len() - 1]
                )));
            }
            let (val, l1) = self.apply(panel, ORDERS[idx])?;
            if let Some(p) = &prev {
                let ok = (0..self.dim).all(|c| {
                    let d = Float::with_val(bits, &val[c] - &p[c]).abs();
                    let scale = if l1[c] > self.total_l1[c] { &l1[c] } else { &self.total_l1[c] };
                    d <= Float::with_val(bits, scale * &tol_scale)
                });
                if ok {
                    self.start_idx = idx;
                    for c in 0..self.dim {
                        self.total[c] += &val[c];
                        self.total_l1[c] += &l1[c];
                    }
                    return Ok(l1);
                }
            }
            prev = Some(val);
            idx += 1;
        }
    }

    fn apply(&self, panel: &Panel, order: usize) -> Result<(Vec<Float>, Vec<Float>)> {
        let bits = self.ctx.bits();
        let zero = Float::with_val(bits, 0);
        let mut e_lo = zero.clone();
        let mut e_hi = zero.clone();
        for &(k, side) in &panel.absorbed {
            match side {
                Side::Lo => e_lo += &self.factors[k].exponent,
                Side::Hi => e_hi += &self.factors[k].exponent,
            }
        }
        let rule: std::sync::Arc<QuadratureRule> = if e_lo.is_zero() && e_hi.is_zero() {
            rules::legendre(order, self.ctx)?
        } else {
            rules::jacobi(&e_lo, &e_hi, order, self.ctx)?
        };
        let half = Float::with_val(bits, &panel.b - &panel.a) / 2u32;
        // (L/2)^{1 + e_lo + e_hi}
        let e_tot = Float::with_val(bits, &e_lo + &e_hi) + 1u32;
        let jac = powf(&half, &e_tot);
        let mut val = vec![zero.clone(); self.dim];
        let mut l1 = vec![zero.clone(); self.dim];
        let mut buf = vec![zero.clone(); self.dim];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            // Map from the nearer endpoint to keep small offsets exact.
            let y = if *x < 0 {
                Float::with_val(bits, Float::with_val(bits, x + 1u32) * &half) + &panel.a
            } else {
                Float::with_val(bits, &panel.b - Float::with_val(bits, Float::with_val(bits, 1u32 - x) * &half))
            };
            let mut fac = Float::with_val(bits, w * &jac);
            for (k, f) in self.factors.iter().enumerate() {
                if f.exponent.is_zero() || panel.absorbed.iter().any(|&(j, _)| j == k) {
                    continue;
                }
                let d = Float::with_val(bits, &y - &f.at).abs();
                fac *= powf(&d, &f.exponent);
            }
            for b in buf.iter_mut() {
                *b = zero.clone();
            }
            (self.g)(&y, &mut buf);
            for c in 0..self.dim {
                let term = Float::with_val(bits, &buf[c] * &fac);
                l1[c] += Float::with_val(bits, term.abs_ref());
                val[c] += term;
            }
        }
        Ok((val, l1))
    }
}

/// `int_lo^hi f(y) dy` where `f` behaves like
/// `(y-lo)^exponent_lo (hi-y)^exponent_hi` times a smooth function; a single
/// Gauss-Jacobi panel with order escalation.
pub fn quad_singular<F>(
    f: F,
    lo: &Float,
    hi: &Float,
    exponent_lo: &Float,
    exponent_hi: &Float,
    ctx: &PrecisionContext,
) -> Result<Float>
where
    F: Fn(&Float) -> Float,
{
    if !(*exponent_lo > -1) || !(*exponent_hi > -1) {
        return Err(Error::invalid("endpoint exponents must exceed -1"));
    }
    let bits = ctx.bits();
    let factors = [
        Factor::new(Float::with_val(bits, lo), Float::with_val(bits, exponent_lo)),
        Factor::new(Float::with_val(bits, hi), Float::with_val(bits, exponent_hi)),
    ];
    let g = |y: &Float, out: &mut [Float]| {
        let v = f(y);
        let dl = Float::with_val(bits, y - lo).abs();
        let dh = Float::with_val(bits, hi - y).abs();
        let den = Float::with_val(bits, powf(&dl, exponent_lo) * powf(&dh, exponent_hi));
        out[0] = v / den;
    };
    let mut engine = Engine::new(&g, 1, &factors, ctx);
    let lo = Float::with_val(bits, lo);
    let hi = Float::with_val(bits, hi);
    let absorbed = vec![(0, Side::Lo), (1, Side::Hi)];
    engine.run(&Panel { a: lo, b: hi, absorbed })?;
    Ok(engine.total.swap_remove(0))
}

/// `int_start^inf f(y) dy` for `f` decaying like `e^{-decay_rate y}`.
///
/// Panels are graded geometrically away from the origin (or, for `start <= 0`,
/// from a point one decay length to the left of `start`) and the sum stops once
/// a panel carries less than `eps/100` of the accumulated mass.
pub fn quad_tail<F>(f: F, start: &Float, decay_rate: f64, ctx: &PrecisionContext) -> Result<Float>
where
    F: Fn(&Float) -> Float,
{
    if !(decay_rate > 0.0) {
        return Err(Error::invalid("decay rate must be positive"));
    }
    let bits = ctx.bits();
    let anchor = if *start > 0 {
        Float::with_val(bits, 0)
    } else {
        Float::with_val(bits, start - 1.0 / decay_rate)
    };
    let g = |y: &Float, out: &mut [Float]| out[0] = f(y);
    let v = integrate_factored(&g, 1, start, None, &[], &[anchor], decay_rate, ctx)?;
    Ok(v.into_iter().next().expect("one component"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::context::make_context;

    fn f(ctx: &PrecisionContext, v: f64) -> Float {
        ctx.num(v)
    }

    #[test]
    fn inverse_sqrt_endpoint() {
        let ctx = make_context(60).unwrap();
        let b = ctx.bits();
        let v = quad_singular(
            |y| Float::with_val(b, y.sqrt_ref()).recip(),
            &f(&ctx, 0.0),
            &f(&ctx, 1.0),
            &f(&ctx, -0.5),
            &f(&ctx, 0.0),
            &ctx,
        )
        .unwrap();
        assert!(Float::with_val(b, v - 2u32).abs() < 1e-58);
    }

    #[test]
    fn constant_on_interval() {
        let ctx = make_context(40).unwrap();
        let b = ctx.bits();
        let zero = f(&ctx, 0.0);
        let v = quad_singular(|_| Float::with_val(b, 1), &zero, &f(&ctx, 2.0), &zero, &zero, &ctx).unwrap();
        assert!(Float::with_val(b, v - 2u32).abs() < 1e-39);
    }

    #[test]
    fn exponential_tail() {
        let ctx = make_context(50).unwrap();
        let b = ctx.bits();
        let v = quad_tail(|y| Float::with_val(b, -y).exp(), &f(&ctx, 0.0), 1.0, &ctx).unwrap();
        assert!(Float::with_val(b, v - 1u32).abs() < 1e-48);
        let v = quad_tail(|y| Float::with_val(b, y * Float::with_val(b, -y).exp()), &f(&ctx, 0.0), 1.0, &ctx)
            .unwrap();
        assert!(Float::with_val(b, v - 1u32).abs() < 1e-48);
    }

    #[test]
    fn interior_singularity_is_graded() {
        // int_0^2 |y-1|^{1/2} dy = 4/3
        let ctx = make_context(40).unwrap();
        let b = ctx.bits();
        let factors = [Factor::new(f(&ctx, 1.0), f(&ctx, 0.5))];
        let g = |_: &Float, out: &mut [Float]| out[0] = Float::with_val(b, 1);
        let v = integrate_factored(&g, 1, &f(&ctx, 0.0), Some(&f(&ctx, 2.0)), &factors, &[], 1.0, &ctx).unwrap();
        let s = v[0].clone();
        let exact = Float::with_val(b, 4) / 3u32;
        assert!(Float::with_val(b, s - exact).abs() < 1e-38);
    }

    #[test]
    fn nearby_pole_is_resolved() {
        // int_0^1 1/(y + 1e-3) dy = ln(1001)
        let ctx = make_context(40).unwrap();
        let b = ctx.bits();
        let z = f(&ctx, -1e-3);
        let g = |y: &Float, out: &mut [Float]| out[0] = Float::with_val(b, y - &z).recip();
        let v = integrate_factored(&g, 1, &f(&ctx, 0.0), Some(&f(&ctx, 1.0)), &[], &[z.clone()], 1.0, &ctx)
            .unwrap();
        let exact = Float::with_val(b, Float::with_val(b, 1u32 - &z) / Float::with_val(b, -&z)).ln();
        assert!(Float::with_val(b, &v[0] - exact).abs() < 1e-38);
    }
}
