//! Chebyshev extrema grids: Clenshaw-Curtis weights and the spectral
//! differentiation matrix.

use rug::float::Constant;
use rug::Float;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ChebGrid {
    /// Points on `[a, b]`, ascending.
    pub points: Vec<Float>,
    /// Clenshaw-Curtis weights for `[a, b]`.
    pub weights: Vec<Float>,
    a: Float,
    b: Float,
    x: Vec<Float>,
}

impl ChebGrid {
    /// `count >= 2` points `(a+b)/2 - (b-a)/2 cos(j pi / (count-1))`.
    pub fn new(a: &Float, b: &Float, count: usize, bits: u32) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("a Chebyshev grid needs at least two points"));
        }
        if !(b > a) {
            return Err(Error::invalid("empty Chebyshev interval"));
        }
        let n = count - 1;
        let pi = Float::with_val(bits, Constant::Pi);
        let x: Vec<Float> = (0..=n)
            .map(|j| -Float::with_val(bits, Float::with_val(bits, &pi * j as u32) / n as u32).cos())
            .collect();
        let a = Float::with_val(bits, a);
        let b = Float::with_val(bits, b);
        let mid = Float::with_val(bits, &a + &b) / 2u32;
        let half = Float::with_val(bits, &b - &a) / 2u32;
        let mut points: Vec<Float> = x.iter().map(|v| Float::with_val(bits, v * &half) + &mid).collect();
        points[0] = a.clone();
        points[n] = b.clone();
        let mut weights = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut s = Float::with_val(bits, 0);
            for j in 1..=n / 2 {
                let bj: u32 = if 2 * j == n { 1 } else { 2 };
                let arg = Float::with_val(bits, &pi * (2 * j * k) as u32) / n as u32;
                let den = (4 * j * j - 1) as u32;
                s += Float::with_val(bits, arg.cos() * bj) / den;
            }
            let ck: u32 = if k == 0 || k == n { 1 } else { 2 };
            let w = Float::with_val(bits, 1 - s) * ck / n as u32;
            weights.push(w * &half);
        }
        Ok(ChebGrid { points, weights, a, b, x })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, values: &[Float]) -> Float {
        let bits = self.a.prec();
        values
            .iter()
            .zip(&self.weights)
            .fold(Float::with_val(bits, 0), |acc, (v, w)| acc + Float::with_val(bits, v * w))
    }

    /// Derivative of the interpolant at every grid point.
    pub fn differentiate(&self, values: &[Float]) -> Vec<Float> {
        let bits = self.a.prec();
        let n = self.x.len() - 1;
        let c = |i: usize| if i == 0 || i == n { 2u32 } else { 1u32 };
        let scale = Float::with_val(bits, 2u32) / Float::with_val(bits, &self.b - &self.a);
        (0..=n)
            .map(|i| {
                let mut acc = Float::with_val(bits, 0);
                for j in 0..=n {
                    if i == j {
                        continue;
                    }
                    let mut d = Float::with_val(bits, &values[j] - &values[i]);
                    d /= Float::with_val(bits, &self.x[i] - &self.x[j]);
                    d *= c(i);
                    d /= c(j);
                    if (i + j) % 2 == 1 {
                        d = -d;
                    }
                    acc += d;
                }
                acc * &scale
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_is_integrated_and_differentiated() {
        let bits = 300;
        let a = Float::with_val(bits, 0.5);
        let b = Float::with_val(bits, 2);
        let g = ChebGrid::new(&a, &b, 49, bits).unwrap();
        let v: Vec<Float> = g.points.iter().map(|x| Float::with_val(bits, x.exp_ref())).collect();
        let exact = Float::with_val(bits, b.exp_ref()) - Float::with_val(bits, a.exp_ref());
        let err = Float::with_val(bits, g.integrate(&v) - exact).abs();
        assert!(err < 1e-60);
        let d = g.differentiate(&v);
        for (di, vi) in d.iter().zip(&v) {
            assert!(Float::with_val(bits, di - vi).abs() < 1e-50);
        }
        assert_eq!(g.points[0], a);
        assert_eq!(g.points[48], b);
    }
}
