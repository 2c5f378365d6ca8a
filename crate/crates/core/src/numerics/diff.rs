//! Fourth-order central differences.

use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::context::PrecisionContext;

/// Offsets of the five-point stencil in units of the step.
pub const STENCIL: [i32; 5] = [-2, -1, 0, 1, 2];

/// `f^(order)(x)` with step `ctx.fd_step()`.
pub fn central_derivative<F>(f: F, x: &Float, order: u32, ctx: &PrecisionContext) -> Result<Float>
where
    F: Fn(&Float) -> Result<Float>,
{
    central_derivative_step(f, x, order, ctx.fd_step(), ctx.bits())
}

pub fn central_derivative_step<F>(f: F, x: &Float, order: u32, h: &Float, bits: u32) -> Result<Float>
where
    F: Fn(&Float) -> Result<Float>,
{
    let pts = stencil_points(x, h, bits);
    let mut vals = Vec::with_capacity(5);
    for (k, p) in pts.iter().enumerate() {
        if order == 1 && k == 2 {
            vals.push(Float::with_val(bits, 0));
        } else {
            vals.push(f(p)?);
        }
    }
    match order {
        1 => Ok(first_from_stencil(&vals, h)),
        2 => Ok(second_from_stencil(&vals, h)),
        _ => Err(Error::invalid("derivative order must be 1 or 2")),
    }
}

/// `x + k h` for `k` in [`STENCIL`].
pub fn stencil_points(x: &Float, h: &Float, bits: u32) -> Vec<Float> {
    STENCIL
        .iter()
        .map(|&k| Float::with_val(bits, Float::with_val(bits, h * k) + x))
        .collect()
}

/// `[f(-2h) - 8 f(-h) + 8 f(h) - f(2h)] / (12 h)`.
pub fn first_from_stencil(v: &[Float], h: &Float) -> Float {
    let p = v[0].prec().max(h.prec());
    let mut s = Float::with_val(p, &v[0] - &v[4]);
    s += Float::with_val(p, Float::with_val(p, &v[3] - &v[1]) * 8u32);
    s / Float::with_val(p, h * 12u32)
}

/// `[-f(2h) + 16 f(h) - 30 f(0) + 16 f(-h) - f(-2h)] / (12 h^2)`.
pub fn second_from_stencil(v: &[Float], h: &Float) -> Float {
    let p = v[0].prec().max(h.prec());
    let mut s = Float::with_val(p, Float::with_val(p, &v[1] + &v[3]) * 16u32);
    s -= Float::with_val(p, &v[0] + &v[4]);
    s -= Float::with_val(p, &v[2] * 30u32);
    let h2 = Float::with_val(p, h * h);
    s / (h2 * 12u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::context::make_context;

    #[test]
    fn exp_at_zero() {
        let ctx = make_context(150).unwrap();
        let b = ctx.bits();
        let d = central_derivative(|x| Ok(Float::with_val(b, x.exp_ref())), &ctx.num(0), 1, &ctx).unwrap();
        assert!(Float::with_val(b, d - 1u32).abs() < 1e-40);
    }

    #[test]
    fn square_second_derivative() {
        let ctx = make_context(60).unwrap();
        let b = ctx.bits();
        let d = central_derivative(|x| Ok(Float::with_val(b, x * x)), &ctx.num(3), 2, &ctx).unwrap();
        assert!(Float::with_val(b, d - 2u32).abs() < 1e-25);
    }
}
