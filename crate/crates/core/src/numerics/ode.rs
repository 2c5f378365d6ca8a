//! Adaptive explicit integration over multiprecision reals.
//!
//! The stepper is the 11-stage, order-8 Runge-Kutta scheme of Cooper and
//! Verner. Local errors come from step doubling: one step of size `h` against
//! two of size `h/2`, whose difference is `(2^8 - 1)` times the error of the
//! two-step result.

use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::context::PrecisionContext;

#[derive(Clone, Debug)]
pub struct OdeTrajectory {
    pub t_grid: Vec<Float>,
    pub states: Vec<Vec<Float>>,
    pub local_error_estimates: Vec<Float>,
}

impl OdeTrajectory {
    pub fn last_state(&self) -> &[Float] {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn last_t(&self) -> &Float {
        self.t_grid.last().expect("trajectory holds the initial point")
    }
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub max_steps: usize,
    /// First trial step; defaults to `|t1 - t0| / 100`.
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { max_steps: 200_000, initial_step: None }
    }
}

struct Tableau {
    c: Vec<Float>,
    a: Vec<Vec<Float>>,
    b: Vec<Float>,
}

fn tableau(bits: u32) -> Tableau {
    let s = Float::with_val(bits, 21).sqrt();
    let f = |p: f64, q: f64, d: f64| -> Float {
        // (p + q s) / d
        let v = Float::with_val(bits, &s * q) + p;
        v / d
    };
    let z = || Float::with_val(bits, 0);
    let c = vec![
        z(),
        f(1.0, 0.0, 2.0),
        f(1.0, 0.0, 2.0),
        f(7.0, 1.0, 14.0),
        f(7.0, 1.0, 14.0),
        f(1.0, 0.0, 2.0),
        f(7.0, -1.0, 14.0),
        f(7.0, -1.0, 14.0),
        f(1.0, 0.0, 2.0),
        f(7.0, 1.0, 14.0),
        f(1.0, 0.0, 1.0),
    ];
    let a = vec![
        vec![],
        vec![f(1.0, 0.0, 2.0)],
        vec![f(1.0, 0.0, 4.0), f(1.0, 0.0, 4.0)],
        vec![f(1.0, 0.0, 7.0), f(-7.0, -3.0, 98.0), f(21.0, 5.0, 49.0)],
        vec![f(11.0, 1.0, 84.0), z(), f(18.0, 4.0, 63.0), f(21.0, -1.0, 252.0)],
        vec![f(5.0, 1.0, 48.0), z(), f(9.0, 1.0, 36.0), f(-231.0, 14.0, 360.0), f(63.0, -7.0, 80.0)],
        vec![
            f(10.0, -1.0, 42.0),
            z(),
            f(-432.0, 92.0, 315.0),
            f(633.0, -145.0, 90.0),
            f(-504.0, 115.0, 70.0),
            f(63.0, -13.0, 35.0),
        ],
        vec![f(1.0, 0.0, 14.0), z(), z(), z(), f(14.0, -3.0, 126.0), f(13.0, -3.0, 63.0), f(1.0, 0.0, 9.0)],
        vec![
            f(1.0, 0.0, 32.0),
            z(),
            z(),
            z(),
            f(91.0, -21.0, 576.0),
            f(11.0, 0.0, 72.0),
            f(-385.0, -75.0, 1152.0),
            f(63.0, 13.0, 128.0),
        ],
        vec![
            f(1.0, 0.0, 14.0),
            z(),
            z(),
            z(),
            f(1.0, 0.0, 9.0),
            f(-733.0, -147.0, 2205.0),
            f(515.0, 111.0, 504.0),
            f(-51.0, -11.0, 56.0),
            f(132.0, 28.0, 245.0),
        ],
        vec![
            z(),
            z(),
            z(),
            z(),
            f(-42.0, 7.0, 18.0),
            f(-18.0, 28.0, 45.0),
            f(-273.0, -53.0, 72.0),
            f(301.0, 53.0, 72.0),
            f(28.0, -28.0, 45.0),
            f(49.0, -7.0, 18.0),
        ],
    ];
    let b = vec![
        f(1.0, 0.0, 20.0),
        z(),
        z(),
        z(),
        z(),
        z(),
        z(),
        f(49.0, 0.0, 180.0),
        f(16.0, 0.0, 45.0),
        f(49.0, 0.0, 180.0),
        f(1.0, 0.0, 20.0),
    ];
    Tableau { c, a, b }
}

fn rk_step<F>(field: &F, tab: &Tableau, t: &Float, y: &[Float], h: &Float, bits: u32) -> Result<Vec<Float>>
where
    F: Fn(&Float, &[Float]) -> Result<Vec<Float>>,
{
    let n = y.len();
    let mut ks: Vec<Vec<Float>> = Vec::with_capacity(tab.c.len());
    for i in 0..tab.c.len() {
        let ti = Float::with_val(bits, Float::with_val(bits, &tab.c[i] * h) + t);
        let mut yi: Vec<Float> = y.to_vec();
        for (j, aij) in tab.a[i].iter().enumerate() {
            if aij.is_zero() {
                continue;
            }
            let hij = Float::with_val(bits, aij * h);
            for c in 0..n {
                yi[c] += Float::with_val(bits, &hij * &ks[j][c]);
            }
        }
        ks.push(field(&ti, &yi)?);
    }
    let mut out = y.to_vec();
    for (i, bi) in tab.b.iter().enumerate() {
        if bi.is_zero() {
            continue;
        }
        let hb = Float::with_val(bits, bi * h);
        for c in 0..n {
            out[c] += Float::with_val(bits, &hb * &ks[i][c]);
        }
    }
    Ok(out)
}

/// Integrates `y' = field(t, y)` from `t0` to `t1` (either direction).
pub fn ode_integrate<F>(field: F, y0: &[Float], t0: &Float, t1: &Float, tol: &Float, ctx: &PrecisionContext) -> Result<OdeTrajectory>
where
    F: Fn(&Float, &[Float]) -> Result<Vec<Float>>,
{
    let (traj, err) = ode_integrate_partial(field, y0, t0, t1, tol, ctx, &OdeOptions::default());
    match err {
        None => Ok(traj),
        Some(e) => Err(e),
    }
}

/// Like [`ode_integrate`], but returns the accepted part of the trajectory
/// together with the error that stopped it, if any.
pub fn ode_integrate_partial<F>(
    field: F,
    y0: &[Float],
    t0: &Float,
    t1: &Float,
    tol: &Float,
    ctx: &PrecisionContext,
    opts: &OdeOptions,
) -> (OdeTrajectory, Option<Error>)
where
    F: Fn(&Float, &[Float]) -> Result<Vec<Float>>,
{
    let (traj, err, _) = ode_integrate_until(field, |_, _| false, y0, t0, t1, tol, ctx, opts);
    (traj, err)
}

/// Like [`ode_integrate_partial`], but also ends after the first accepted step
/// short of `t1` at which `stop(t, y)` holds; the flag reports that case.
#[allow(clippy::too_many_arguments)]
pub fn ode_integrate_until<F, G>(
    field: F,
    stop: G,
    y0: &[Float],
    t0: &Float,
    t1: &Float,
    tol: &Float,
    ctx: &PrecisionContext,
    opts: &OdeOptions,
) -> (OdeTrajectory, Option<Error>, bool)
where
    F: Fn(&Float, &[Float]) -> Result<Vec<Float>>,
    G: Fn(&Float, &[Float]) -> bool,
{
    let bits = ctx.bits();
    let mut traj = OdeTrajectory {
        t_grid: vec![Float::with_val(bits, t0)],
        states: vec![y0.iter().map(|v| Float::with_val(bits, v)).collect()],
        local_error_estimates: vec![Float::with_val(bits, 0)],
    };
    let floor = Float::with_val(bits, ctx.eps() * 100u32);
    if *tol < floor {
        return (traj, Some(Error::invalid("tolerance below 100 eps")), false);
    }
    if t0 == t1 {
        return (traj, None, false);
    }
    let tab = tableau(bits);
    let span = Float::with_val(bits, t1 - t0);
    let dir = if span > 0 { 1i32 } else { -1 };
    let span_abs = Float::with_val(bits, span.abs_ref());
    let mut h_abs = match opts.initial_step {
        Some(h) => Float::with_val(bits, h.abs()),
        None => Float::with_val(bits, &span_abs / 100u32),
    };
    let sqrt_eps = ctx.sqrt_eps();
    let mut t = Float::with_val(bits, t0);
    let mut y: Vec<Float> = traj.states[0].clone();
    let mut steps = 0usize;
    let inv255 = Float::with_val(bits, 255).recip();

    loop {
        let remaining = Float::with_val(bits, t1 - &t).abs();
        if remaining.is_zero() {
            return (traj, None, false);
        }
        let last = h_abs >= remaining;
        if last {
            h_abs = remaining.clone();
        }
        let h_min = Float::with_val(bits, Float::with_val(bits, t.abs_ref()).max(&Float::with_val(bits, 1)) * &sqrt_eps)
            * Float::with_val(bits, &sqrt_eps);
        let h_min = h_min.max(&Float::with_val(bits, ctx.eps()));
        if h_abs < h_min {
            let detail = format!("step size underflow at t = {}", t.to_f64());
            return (traj, Some(Error::SingularityEncountered { t_last: t.to_f64(), detail }), false);
        }
        steps += 1;
        if steps > opts.max_steps {
            return (traj, Some(Error::precision("step budget exhausted")), false);
        }
        let h = if dir > 0 { h_abs.clone() } else { Float::with_val(bits, -&h_abs) };
        let half = Float::with_val(bits, &h / 2u32);
        let attempt = (|| -> Result<(Vec<Float>, Vec<Float>)> {
            let big = rk_step(&field, &tab, &t, &y, &h, bits)?;
            let mid = rk_step(&field, &tab, &t, &y, &half, bits)?;
            let tm = Float::with_val(bits, &t + &half);
            let two = rk_step(&field, &tab, &tm, &mid, &half, bits)?;
            Ok((big, two))
        })();
        let (big, two) = match attempt {
            Ok(v) => v,
            Err(_) => {
                h_abs /= 4u32;
                continue;
            }
        };
        let mut err = Float::with_val(bits, 0);
        for c in 0..y.len() {
            let d = Float::with_val(bits, &two[c] - &big[c]).abs() * &inv255;
            let scale = Float::with_val(bits, two[c].abs_ref()).max(&Float::with_val(bits, 1));
            let e = d / scale;
            if e > err {
                err = e;
            }
        }
        if !err.is_finite() {
            h_abs /= 4u32;
            continue;
        }
        let ratio = if err.is_zero() {
            4.0
        } else {
            let r = Float::with_val(bits, tol / &err).to_f64();
            (0.9 * r.powf(1.0 / 9.0)).clamp(0.2, 4.0)
        };
        if err <= *tol {
            let mut next = two.clone();
            for c in 0..y.len() {
                let corr = Float::with_val(bits, &two[c] - &big[c]) * &inv255;
                next[c] += corr;
            }
            t = if last { Float::with_val(bits, t1) } else { Float::with_val(bits, &t + &h) };
            y = next;
            traj.t_grid.push(t.clone());
            traj.states.push(y.clone());
            traj.local_error_estimates.push(err);
            if last {
                return (traj, None, false);
            }
            if stop(&t, &y) {
                return (traj, None, true);
            }
        }
        h_abs *= ratio;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::context::make_context;

    #[test]
    fn tableau_consistency() {
        let bits = 300;
        let tab = tableau(bits);
        let tiny = Float::with_val(bits, 1e-80);
        for i in 0..tab.c.len() {
            let s: Float = tab.a[i].iter().fold(Float::with_val(bits, 0), |acc, v| acc + v);
            assert!(Float::with_val(bits, s - &tab.c[i]).abs() < tiny, "row {i}");
        }
        // sum b_i c_i^{k-1} = 1/k for k = 1..8
        for k in 1..=8u32 {
            let mut s = Float::with_val(bits, 0);
            for i in 0..tab.b.len() {
                s += Float::with_val(bits, rug::ops::Pow::pow(&tab.c[i], k - 1)) * &tab.b[i];
            }
            let exact = Float::with_val(bits, 1) / k;
            assert!(Float::with_val(bits, s - exact).abs() < tiny, "k={k}");
        }
    }

    #[test]
    fn exponential_growth() {
        let ctx = make_context(40).unwrap();
        let b = ctx.bits();
        let tol = Float::with_val(b, 1e-30);
        let tr = ode_integrate(|_, y| Ok(vec![y[0].clone()]), &[ctx.num(1)], &ctx.num(0), &ctx.num(5), &tol, &ctx).unwrap();
        let exact = Float::with_val(b, 5).exp();
        let d = Float::with_val(b, &tr.last_state()[0] - &exact).abs() / &exact;
        assert!(d < 1e-28, "{}", d.to_f64());
        let tr = ode_integrate(|_, y| Ok(vec![y[0].clone()]), &[ctx.num(1)], &ctx.num(0), &ctx.num(1), &tol, &ctx).unwrap();
        let d = Float::with_val(b, &tr.last_state()[0] - Float::with_val(b, 1).exp()).abs();
        assert!(d < 1e-28);
    }

    #[test]
    fn riccati_decay() {
        let ctx = make_context(40).unwrap();
        let b = ctx.bits();
        let tol = Float::with_val(b, 1e-32);
        let tr = ode_integrate(
            |_, y| Ok(vec![-Float::with_val(b, &y[0] * &y[0])]),
            &[ctx.num(1)],
            &ctx.num(0),
            &ctx.num(2),
            &tol,
            &ctx,
        )
        .unwrap();
        let d = Float::with_val(b, &tr.last_state()[0] - Float::with_val(b, 1) / 3u32).abs();
        assert!(d < 1e-30);
    }

    #[test]
    fn eighth_order_convergence() {
        // fixed steps on y' = -2ty, y(0) = 1, y(1) = e^{-1}
        let bits = 300;
        let tab = tableau(bits);
        let f = |t: &Float, y: &[Float]| Ok(vec![Float::with_val(bits, t * &y[0]) * -2i32]);
        let mut errs = vec![];
        for n in [8u32, 16] {
            let h = Float::with_val(bits, 1) / n;
            let mut t = Float::with_val(bits, 0);
            let mut y = vec![Float::with_val(bits, 1)];
            for _ in 0..n {
                y = rk_step(&f, &tab, &t, &y, &h, bits).unwrap();
                t += &h;
            }
            let e = Float::with_val(bits, &y[0] - Float::with_val(bits, -1).exp()).abs();
            errs.push(e.to_f64());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 7.5 && order < 9.5, "observed order {order}");
    }

    #[test]
    fn backward_integration() {
        let ctx = make_context(40).unwrap();
        let b = ctx.bits();
        let tol = Float::with_val(b, 1e-30);
        let tr = ode_integrate(|_, y| Ok(vec![y[0].clone()]), &[ctx.num(1)], &ctx.num(0), &ctx.num(-2), &tol, &ctx).unwrap();
        let exact = Float::with_val(b, -2).exp();
        assert!(Float::with_val(b, &tr.last_state()[0] - exact).abs() < 1e-29);
        assert!(tr.t_grid.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn pole_reports_singularity() {
        let ctx = make_context(30).unwrap();
        let b = ctx.bits();
        let tol = Float::with_val(b, 1e-20);
        // y' = y^2, y(0) = 1 blows up at t = 1
        let r = ode_integrate(
            |_, y| Ok(vec![Float::with_val(b, &y[0] * &y[0])]),
            &[ctx.num(1)],
            &ctx.num(0),
            &ctx.num(2),
            &tol,
            &ctx,
        );
        match r {
            Err(Error::SingularityEncountered { t_last, .. }) => assert!(t_last > 0.9 && t_last <= 1.0),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("integrated through a pole"),
        }
    }
}
