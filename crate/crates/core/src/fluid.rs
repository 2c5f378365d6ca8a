//! Coulomb-fluid approximation for large `n`: support endpoints, the quintic
//! for the fluid recurrence coefficient, the algebraic equation for `R~_n`,
//! and the soft-edge profile together with its Painleve XXXIV limit.

use std::thread;

use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::{
    ode_integrate_partial, poly_eval, poly_real_roots, residual_of, OdeOptions, OdeTrajectory, PrecisionContext, Residual,
};
use crate::numerics::roots::poly_scale;
use crate::opsys::{aux_recurrence, build_for_params, BuildOptions};
use crate::weight::WeightParams;

const NEWTON_GUARD: u32 = 10;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Clone, Debug)]
pub struct FluidSolution {
    pub n: usize,
    pub params: WeightParams,
    /// `ln(A/(A+B)) / pi`.
    pub c: Float,
    pub a: Float,
    pub b: Float,
    /// `(a+b)/2`.
    pub alpha_tilde: Float,
    /// `(alpha~ - 2n - alpha - gamma) / t`.
    pub r_tilde: Float,
    pub t: Float,
    /// Relative residuals of the two endpoint equations.
    pub residuals: [Residual; 2],
    pub iterations: usize,
}

fn check_ab(p: &WeightParams) -> Result<()> {
    if !(p.big_a() > &0) {
        return Err(Error::UnsupportedConfig("fluid constant needs A > 0".into()));
    }
    let s = Float::with_val(p.big_a().prec().max(p.big_b().prec()), p.big_a() + p.big_b());
    if !(s > 0) {
        return Err(Error::UnsupportedConfig("fluid constant needs A + B > 0".into()));
    }
    Ok(())
}

/// `c = ln(A/(A+B)) / pi`; zero exactly when `B = 0`.
pub fn fluid_constant_c(p: &WeightParams, ctx: &PrecisionContext) -> Result<Float> {
    check_ab(p)?;
    let bits = ctx.bits();
    if p.big_b().is_zero() {
        return Ok(Float::with_val(bits, 0));
    }
    let a = Float::with_val(bits, p.big_a());
    let s = Float::with_val(bits, p.big_a() + p.big_b());
    let pi = Float::with_val(bits, rug::float::Constant::Pi);
    Ok((a / s).ln() / pi)
}

/// Terms of the two endpoint equations at `(a, b)`; each sums to zero at a solution.
pub fn endpoint_terms(n: usize, p: &WeightParams, c: &Float, a: &Float, b: &Float) -> (Vec<Float>, Vec<Float>) {
    let bits = a.prec();
    let t = Float::with_val(bits, p.t());
    let alpha = Float::with_val(bits, p.alpha());
    let gamma = Float::with_val(bits, p.gamma());
    let sab = Float::with_val(bits, a * b).sqrt();
    let (cq, ctq) = if c.is_zero() {
        (Float::with_val(bits, 0), Float::with_val(bits, 0))
    } else {
        let q = Float::with_val(bits, b - &t) * Float::with_val(bits, &t - a);
        let cq = Float::with_val(bits, c / q.sqrt());
        let ctq = Float::with_val(bits, &cq * &t);
        (cq, ctq)
    };
    let f1 = vec![Float::with_val(bits, 1), -(alpha.clone() / &sab), cq];
    let f2 = vec![
        Float::with_val(bits, a + b) / 2u32,
        -alpha,
        -gamma,
        ctq,
        -Float::with_val(bits, 2 * n as u64),
    ];
    (f1, f2)
}

fn sum(v: &[Float], bits: u32) -> Float {
    let mut acc = Float::with_val(bits, 0);
    for x in v {
        acc += x;
    }
    acc
}

/// `a, b = m -+ sqrt(m^2 - alpha^2)` with `m = 2n + alpha + gamma`.
pub fn closed_form_endpoints(n: usize, p: &WeightParams, bits: u32) -> (Float, Float) {
    let m = Float::with_val(bits, p.alpha() + p.gamma()) + (2 * n) as u64;
    let alpha = Float::with_val(bits, p.alpha());
    let d = (Float::with_val(bits, m.square_ref()) - alpha.clone().square()).sqrt();
    let b = Float::with_val(bits, &m + &d);
    let a = alpha.square() / &b;
    (a, b)
}

fn admissible(a: &Float, b: &Float, t: &Float, c: &Float) -> bool {
    if !(a > &0) || !(b > a) {
        return false;
    }
    c.is_zero() || (t > a && b > t)
}

fn merit(f1: &Float, f2: &Float) -> Float {
    Float::with_val(f1.prec(), f1.abs_ref()).max(&Float::with_val(f2.prec(), f2.abs_ref()))
}

struct NewtonOut {
    a: Float,
    b: Float,
    iterations: usize,
}

fn newton(n: usize, p: &WeightParams, c: &Float, a0: Float, b0: Float, ctx: &PrecisionContext) -> Result<NewtonOut> {
    let bits = ctx.bits();
    let t = Float::with_val(bits, p.t());
    let alpha = Float::with_val(bits, p.alpha());
    let eval = |a: &Float, b: &Float| {
        let (f1, f2) = endpoint_terms(n, p, c, a, b);
        (sum(&f1, bits), sum(&f2, bits))
    };
    let (mut a, mut b) = (a0, b0);
    if !admissible(&a, &b, &t, c) {
        return Err(Error::NoSolution("initial endpoint guess does not bracket t".into()));
    }
    let (mut f1, mut f2) = eval(&a, &b);
    let scale_tol = Float::with_val(bits, ctx.eps() * 16u32);
    for it in 0..NEWTON_MAX_ITER {
        let ab = Float::with_val(bits, &a * &b);
        let ab32 = Float::with_val(bits, &ab * Float::with_val(bits, ab.sqrt_ref())) * 2u32;
        let mut j11 = Float::with_val(bits, &alpha * &b) / &ab32;
        let mut j12 = Float::with_val(bits, &alpha * &a) / &ab32;
        let mut j21 = Float::with_val(bits, 0.5);
        let mut j22 = Float::with_val(bits, 0.5);
        if !c.is_zero() {
            let bt = Float::with_val(bits, &b - &t);
            let ta = Float::with_val(bits, &t - &a);
            let q = Float::with_val(bits, &bt * &ta);
            let q32 = Float::with_val(bits, &q * Float::with_val(bits, q.sqrt_ref())) * 2u32;
            let k = Float::with_val(bits, c / &q32);
            j11 += Float::with_val(bits, &k * &bt);
            j12 -= Float::with_val(bits, &k * &ta);
            let kt = Float::with_val(bits, &k * &t);
            j21 += Float::with_val(bits, &kt * &bt);
            j22 -= Float::with_val(bits, &kt * &ta);
        }
        let det = Float::with_val(bits, &j11 * &j22) - Float::with_val(bits, &j12 * &j21);
        if det.is_zero() || !det.is_finite() {
            return Err(Error::NoSolution(format!("singular endpoint Jacobian at iteration {it}")));
        }
        let da = (Float::with_val(bits, &j22 * &f1) - Float::with_val(bits, &j12 * &f2)) / &det;
        let db = (Float::with_val(bits, &j11 * &f2) - Float::with_val(bits, &j21 * &f1)) / &det;
        let m0 = merit(&f1, &f2);
        let mut lam = Float::with_val(bits, 1);
        let mut accepted = false;
        for _ in 0..60 {
            let na = Float::with_val(bits, &a - Float::with_val(bits, &lam * &da));
            let nb = Float::with_val(bits, &b - Float::with_val(bits, &lam * &db));
            if admissible(&na, &nb, &t, c) {
                let (g1, g2) = eval(&na, &nb);
                if merit(&g1, &g2) <= m0 || lam == 1 && it > 0 && merit(&g1, &g2) < Float::with_val(bits, &m0 * 2u32) {
                    a = na;
                    b = nb;
                    f1 = g1;
                    f2 = g2;
                    accepted = true;
                    break;
                }
            }
            lam /= 2u32;
        }
        if !accepted {
            // No damped step improves the merit: either converged to rounding or stuck.
            return Ok(NewtonOut { a, b, iterations: it });
        }
        let step = Float::with_val(bits, Float::with_val(bits, &lam * &da).abs()) + Float::with_val(bits, &lam * &db).abs();
        let scale = Float::with_val(bits, a.abs_ref()) + Float::with_val(bits, b.abs_ref());
        if step <= Float::with_val(bits, &scale * &scale_tol) {
            return Ok(NewtonOut { a, b, iterations: it + 1 });
        }
    }
    Err(Error::NoSolution(format!("endpoint Newton did not converge in {NEWTON_MAX_ITER} iterations")))
}

fn residuals(n: usize, p: &WeightParams, c: &Float, a: &Float, b: &Float) -> [Residual; 2] {
    let (f1, f2) = endpoint_terms(n, p, c, a, b);
    [residual_of(&f1), residual_of(&f2)]
}

fn converged(r: &[Residual; 2], ctx: &PrecisionContext) -> bool {
    let lim = 10f64.powi(-((ctx.digits() / 2) as i32));
    r.iter().all(|x| x.rel.is_finite() && x.rel < lim)
}

/// Newton solve of the endpoint equations, started from the `c = 0` closed
/// form. Falls back to continuation in `c` when the direct solve fails.
pub fn solve_endpoints(n: usize, p: &WeightParams, ctx: &PrecisionContext) -> Result<FluidSolution> {
    let c_out = fluid_constant_c(p, ctx)?;
    let inner = ctx.with_extra_digits(NEWTON_GUARD);
    let bits = inner.bits();
    let c = fluid_constant_c(p, &inner)?;
    let (a0, b0) = closed_form_endpoints(n, p, bits);
    let t = Float::with_val(bits, p.t());
    if !c.is_zero() && !(t > a0 && b0 > t) {
        return Err(Error::NoSolution(format!(
            "t = {} lies outside the c = 0 support [{}, {}]",
            t.to_f64(),
            a0.to_f64(),
            b0.to_f64()
        )));
    }
    let mut attempt = newton(n, p, &c, a0.clone(), b0.clone(), &inner);
    let ok = |o: &Result<NewtonOut>| match o {
        Ok(s) => converged(&residuals(n, p, &c, &s.a, &s.b), &inner),
        Err(_) => false,
    };
    let mut stages = 2usize;
    while !ok(&attempt) && stages <= 64 {
        let mut a = a0.clone();
        let mut b = b0.clone();
        let mut total = 0;
        let mut res = None;
        for k in 1..=stages {
            let ck = Float::with_val(bits, &c * k as u32) / stages as u32;
            match newton(n, p, &ck, a.clone(), b.clone(), &inner) {
                Ok(o) => {
                    total += o.iterations;
                    a = o.a;
                    b = o.b;
                }
                Err(e) => {
                    res = Some(Err(e));
                    break;
                }
            }
        }
        attempt = res.unwrap_or(Ok(NewtonOut { a, b, iterations: total }));
        stages *= 2;
    }
    let out = attempt?;
    let res = residuals(n, p, &c, &out.a, &out.b);
    if !converged(&res, &inner) {
        return Err(Error::NoSolution(format!(
            "endpoint equations not satisfied (relative residuals {:e}, {:e})",
            res[0].rel, res[1].rel
        )));
    }
    let obits = ctx.bits();
    let a = Float::with_val(obits, &out.a);
    let b = Float::with_val(obits, &out.b);
    let alpha_tilde = Float::with_val(obits, &out.a + &out.b) / 2u32;
    let k = Float::with_val(obits, p.alpha() + p.gamma()) + (2 * n) as u64;
    let t_out = Float::with_val(obits, p.t());
    let r_tilde = if t_out.is_zero() {
        Float::with_val(obits, 0)
    } else {
        Float::with_val(obits, &alpha_tilde - &k) / &t_out
    };
    Ok(FluidSolution {
        n,
        params: p.clone(),
        c: c_out,
        a,
        b,
        alpha_tilde,
        r_tilde,
        t: t_out,
        residuals: res,
        iterations: out.iterations,
    })
}

fn pmul(x: &[Float], y: &[Float], bits: u32) -> Vec<Float> {
    let mut out = vec![Float::with_val(bits, 0); x.len() + y.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            out[i + j] += Float::with_val(bits, a * b);
        }
    }
    out
}

fn padd(x: &[Float], y: &[Float], bits: u32) -> Vec<Float> {
    let mut out = vec![Float::with_val(bits, 0); x.len().max(y.len())];
    for (i, a) in x.iter().enumerate() {
        out[i] += a;
    }
    for (i, b) in y.iter().enumerate() {
        out[i] += b;
    }
    out
}

/// Quintic in `alpha~`, ascending coefficients:
/// `(x-k)^2 [(2x-t)(x-t-k)^2 - alpha^2 t] - c^2 t (x-t-k)^2`, `k = 2n+alpha+gamma`.
pub fn quintic_coefficients(n: usize, t: &Float, p: &WeightParams, c: &Float, bits: u32) -> Vec<Float> {
    let k = Float::with_val(bits, p.alpha() + p.gamma()) + (2 * n) as u64;
    let t = Float::with_val(bits, t);
    let alpha2 = Float::with_val(bits, p.alpha()).square();
    let x = vec![-k.clone(), Float::with_val(bits, 1)];
    let y = vec![-(Float::with_val(bits, &t + &k)), Float::with_val(bits, 1)];
    let z = vec![-t.clone(), Float::with_val(bits, 2)];
    let y2 = pmul(&y, &y, bits);
    let bracket = padd(&pmul(&z, &y2, bits), &[-(alpha2 * &t)], bits);
    let first = pmul(&pmul(&x, &x, bits), &bracket, bits);
    let c2t = Float::with_val(bits, c.square_ref()) * &t;
    let second: Vec<Float> = y2.iter().map(|v| -Float::with_val(bits, v * &c2t)).collect();
    padd(&first, &second, bits)
}

/// Quintic in `R~`, ascending coefficients.
pub fn ale_coefficients(n: usize, t: &Float, p: &WeightParams, c: &Float, bits: u32) -> Vec<Float> {
    let t = Float::with_val(bits, t);
    let alpha = Float::with_val(bits, p.alpha());
    let gamma = Float::with_val(bits, p.gamma());
    let ag = Float::with_val(bits, &alpha + &gamma);
    let nn = Float::with_val(bits, n as u64);
    let c2 = Float::with_val(bits, c.square_ref());
    let t2 = Float::with_val(bits, t.square_ref());
    // 5t - 4n - 2(alpha+gamma)
    let q4 = Float::with_val(bits, &t * 5u32) - Float::with_val(bits, &nn * 4u32) - Float::with_val(bits, &ag * 2u32);
    // t - 2n - alpha - gamma
    let q3 = Float::with_val(bits, &t - Float::with_val(bits, &nn * 2u32)) - &ag;
    // t^2 - 4nt - 2(alpha+gamma)t + alpha^2 + c^2
    let q2 = Float::with_val(bits, &t2 - Float::with_val(bits, &nn * 4u32) * &t) - Float::with_val(bits, &ag * 2u32) * &t
        + alpha.square()
        + &c2;
    vec![
        -c2.clone(),
        Float::with_val(bits, &c2 * 2u32),
        -q2,
        Float::with_val(bits, &t * 4u32) * q3,
        -(Float::with_val(bits, &t * &q4)),
        t2 * 2u32,
    ]
}

/// `|P(x)| / sum |c_k| |x|^k`.
pub fn poly_residual(coeffs: &[Float], x: &Float) -> f64 {
    let s = poly_scale(coeffs, x);
    if s.is_zero() {
        return 0.0;
    }
    (Float::with_val(x.prec(), poly_eval(coeffs, x).abs()) / s).to_f64()
}

fn nearest(roots: Vec<Float>, target: &Float) -> Option<Float> {
    let bits = target.prec();
    roots
        .into_iter()
        .min_by(|x, y| {
            let dx = Float::with_val(bits, x - target).abs();
            let dy = Float::with_val(bits, y - target).abs();
            dx.partial_cmp(&dy).expect("finite roots")
        })
}

/// The real quintic root nearest `(a+b)/2` from [`solve_endpoints`].
pub fn solve_tilde_alpha(n: usize, t: &Float, p: &WeightParams, ctx: &PrecisionContext) -> Result<Float> {
    let ps = p.with_t(t.clone());
    let fl = solve_endpoints(n, &ps, ctx)?;
    let inner = ctx.with_extra_digits(NEWTON_GUARD);
    let bits = inner.bits();
    let coeffs = quintic_coefficients(n, t, p, &fluid_constant_c(p, &inner)?, bits);
    let target = Float::with_val(bits, &fl.alpha_tilde);
    let root = nearest(poly_real_roots(&coeffs, &inner)?, &target)
        .ok_or_else(|| Error::BranchSelection("quintic for alpha~ has no real root".into()))?;
    let gap = Float::with_val(bits, &root - &target).abs();
    if gap > Float::with_val(bits, target.abs_ref()) / 10u32 {
        return Err(Error::BranchSelection(format!(
            "no quintic root within 10% of (a+b)/2 = {}",
            target.to_f64()
        )));
    }
    Ok(Float::with_val(ctx.bits(), root))
}

/// The real root of the `R~` quintic nearest `branch_hint`.
pub fn solve_tilde_r(n: usize, t: &Float, p: &WeightParams, ctx: &PrecisionContext, branch_hint: &Float) -> Result<Float> {
    if !(t > &0) {
        return Err(Error::invalid("R~ needs t > 0"));
    }
    let inner = ctx.with_extra_digits(NEWTON_GUARD);
    let bits = inner.bits();
    let coeffs = ale_coefficients(n, t, p, &fluid_constant_c(p, &inner)?, bits);
    let hint = Float::with_val(bits, branch_hint);
    let root = nearest(poly_real_roots(&coeffs, &inner)?, &hint)
        .ok_or_else(|| Error::NoSolution("equation for R~ has no real root".into()))?;
    Ok(Float::with_val(ctx.bits(), root))
}

// ---------------------------------------------------------------------------
// Soft edge

/// `t(s) = 4n + 2^{4/3} n^{1/3} s`.
pub fn edge_t(n: usize, s: &Float, bits: u32) -> Float {
    let nn = Float::with_val(bits, n as u64);
    let k = Float::with_val(bits, 2).pow(Float::with_val(bits, 4) / 3u32);
    let n13 = nn.clone().cbrt();
    Float::with_val(bits, &nn * 4u32) + k * n13 * s
}

/// Working digits for an edge build at degree `n`.
pub fn edge_digits(n: usize) -> u32 {
    40 + (2.5 * n as f64).ceil() as u32
}

/// Two-level fit `u_hat = u + n^{-1/3} v` through `(n1, y1)` and `(n2, y2)`.
pub fn richardson_pair(n1: usize, y1: &Float, n2: usize, y2: &Float) -> (Float, Float) {
    let bits = y1.prec().min(y2.prec());
    let e1 = Float::with_val(bits, n1 as u64).cbrt().recip();
    let e2 = Float::with_val(bits, n2 as u64).cbrt().recip();
    let v = Float::with_val(bits, y1 - y2) / Float::with_val(bits, &e1 - &e2);
    let u = Float::with_val(bits, y1 - Float::with_val(bits, &e1 * &v));
    (u, v)
}

#[derive(Clone, Debug)]
pub struct EdgeFailure {
    pub n: usize,
    pub s: f64,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct EdgeProfile {
    pub s_grid: Vec<f64>,
    pub n_list: Vec<usize>,
    /// Digits used for each entry of `n_list`.
    pub digits: Vec<u32>,
    /// `n^{2/3} R_n(t(s))`, indexed `[n][s]`.
    pub u_hat: Vec<Vec<Option<Float>>>,
    /// `n^{-1/3} r_n(t(s))`.
    pub r_hat: Vec<Vec<Option<Float>>>,
    /// `(H_n(t(s)) - 2 gamma n) / n^{2/3}`.
    pub h_hat: Vec<Vec<Option<Float>>>,
    /// Fit through the two largest `n`.
    pub u_est: Vec<Option<Float>>,
    pub v_est: Vec<Option<Float>>,
    /// `|u_hat(n3) - u_hat(n2)| / |u_hat(n2) - u_hat(n1)|` over the three largest `n`.
    pub richardson: Vec<Option<f64>>,
    /// Large-`s` series, present for `s >= 3`.
    pub u_series: Vec<Option<Float>>,
    pub v_series: Vec<Option<Float>>,
    pub u_ode: Vec<Option<Float>>,
    pub du_ode: Vec<Option<Float>>,
    pub p34_residual: Vec<Option<f64>>,
    pub failures: Vec<EdgeFailure>,
}

impl EdgeProfile {
    pub fn point_count(&self) -> usize {
        self.n_list.len() * self.s_grid.len()
    }

    /// Copies `u`, `u'` and the Painleve XXXIV residual at every grid point the
    /// trajectory reached.
    pub fn attach_ode(&mut self, traj: &P34Trajectory) {
        for (i, s) in self.s_grid.iter().enumerate() {
            if let Some(k) = traj.index_of(*s) {
                self.u_ode[i] = Some(traj.ode.states[k][0].clone());
                self.du_ode[i] = Some(traj.ode.states[k][1].clone());
                self.p34_residual[i] = Some(traj.p34_residual[k]);
            }
        }
    }
}

struct EdgeSample {
    u_hat: Float,
    r_hat: Float,
    h_hat: Float,
}

fn edge_sample(n: usize, s: f64, p: &WeightParams, ctx: &PrecisionContext, opts: &BuildOptions) -> Result<EdgeSample> {
    let bits = ctx.bits();
    let t = edge_t(n, &Float::with_val(bits, s), bits);
    if !(t > 0) {
        return Err(Error::invalid(format!("edge point t(s) = {} is not positive", t.to_f64())));
    }
    let ps = p.with_t(t);
    let ops = build_for_params(&ps, n + 1, ctx, opts)?;
    let aux = aux_recurrence(&ops, &ps)?;
    let nn = Float::with_val(bits, n as u64);
    let n13 = nn.clone().cbrt();
    let n23 = Float::with_val(bits, n13.square_ref());
    let u_hat = Float::with_val(bits, &aux.big_r[n] * &n23);
    let r_hat = Float::with_val(bits, &aux.small_r[n] / &n13);
    let two_gn = Float::with_val(bits, p.gamma() * 2u32) * &nn;
    let h_hat = Float::with_val(bits, &aux.big_h[n] - two_gn) / &n23;
    Ok(EdgeSample { u_hat, r_hat, h_hat })
}

fn workers() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Maps `f` over `jobs` on a scoped worker pool, preserving order.
pub(crate) fn parallel_map<T, R, F>(jobs: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let w = workers().min(jobs.len()).max(1);
    if w == 1 {
        return jobs.iter().map(&f).collect();
    }
    let chunk = jobs.len().div_ceil(w);
    thread::scope(|sc| {
        let handles: Vec<_> = jobs.chunks(chunk).map(|c| sc.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("edge worker panicked")).collect()
    })
}

/// `n^{2/3} R_n`, `n^{-1/3} r_n` and the scaled `H_n` at `t = 4n + 2^{4/3} n^{1/3} s`
/// for every `(n, s)` pair, with two- and three-level extrapolation in `n`.
/// Builds run at `max(ctx digits, 40 + 2.5 n)` digits; failures are recorded.
pub fn edge_profile(
    n_list: &[usize],
    s_grid: &[f64],
    p: &WeightParams,
    ctx: &PrecisionContext,
    opts: &BuildOptions,
) -> Result<EdgeProfile> {
    if n_list.len() < 2 {
        return Err(Error::invalid("edge profile needs at least two values of n"));
    }
    if n_list.iter().any(|&n| n == 0) || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("edge n_list must be positive and strictly increasing"));
    }
    let digits: Vec<u32> = n_list.iter().map(|&n| ctx.digits().max(edge_digits(n))).collect();
    let ctxs = digits.iter().map(|&d| ctx.at_digits(d)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..n_list.len()).flat_map(|i| (0..s_grid.len()).map(move |j| (i, j))).collect();
    let samples = parallel_map(&jobs, |&(i, j)| edge_sample(n_list[i], s_grid[j], p, &ctxs[i], opts));

    let ns = s_grid.len();
    let mut prof = EdgeProfile {
        s_grid: s_grid.to_vec(),
        n_list: n_list.to_vec(),
        digits,
        u_hat: vec![vec![None; ns]; n_list.len()],
        r_hat: vec![vec![None; ns]; n_list.len()],
        h_hat: vec![vec![None; ns]; n_list.len()],
        u_est: vec![None; ns],
        v_est: vec![None; ns],
        richardson: vec![None; ns],
        u_series: vec![None; ns],
        v_series: vec![None; ns],
        u_ode: vec![None; ns],
        du_ode: vec![None; ns],
        p34_residual: vec![None; ns],
        failures: Vec::new(),
    };
    for (&(i, j), r) in jobs.iter().zip(samples) {
        match r {
            Ok(e) => {
                prof.u_hat[i][j] = Some(e.u_hat);
                prof.r_hat[i][j] = Some(e.r_hat);
                prof.h_hat[i][j] = Some(e.h_hat);
            }
            Err(e) => prof.failures.push(EdgeFailure { n: n_list[i], s: s_grid[j], detail: e.to_string() }),
        }
    }
    let k = n_list.len();
    let bits = ctx.bits();
    let alpha = Float::with_val(bits, p.alpha());
    let gamma = Float::with_val(bits, p.gamma());
    for j in 0..ns {
        if let (Some(y1), Some(y2)) = (&prof.u_hat[k - 2][j], &prof.u_hat[k - 1][j]) {
            let (u, v) = richardson_pair(n_list[k - 2], y1, n_list[k - 1], y2);
            prof.u_est[j] = Some(Float::with_val(bits, u));
            prof.v_est[j] = Some(Float::with_val(bits, v));
        }
        if k >= 3 {
            if let (Some(y1), Some(y2), Some(y3)) = (&prof.u_hat[k - 3][j], &prof.u_hat[k - 2][j], &prof.u_hat[k - 1][j]) {
                let d1 = Float::with_val(bits, y2 - y1).abs();
                let d2 = Float::with_val(bits, y3 - y2).abs();
                if !d1.is_zero() {
                    prof.richardson[j] = Some((d2 / d1).to_f64());
                }
            }
        }
        if s_grid[j] >= 3.0 {
            let s = Float::with_val(bits, s_grid[j]);
            let (u, v) = p34_series(&s, &alpha, &gamma, 4);
            prof.u_series[j] = Some(u);
            prof.v_series[j] = Some(v);
        }
    }
    Ok(prof)
}

// ---------------------------------------------------------------------------
// Large-s series and the u, v equations

fn two_pow(num: i32, den: u32, bits: u32) -> Float {
    Float::with_val(bits, 2).pow(Float::with_val(bits, num) / den)
}

/// `(coefficient, exponent)` pairs of the large-`s` series of `u`.
fn u_terms(gamma: &Float, n_terms: usize) -> Vec<(Float, i32)> {
    let bits = gamma.prec();
    let g2 = Float::with_val(bits, gamma.square_ref());
    let g4 = Float::with_val(bits, g2.square_ref());
    let g6 = Float::with_val(bits, &g4 * &g2);
    let k = two_pow(2, 3, bits);
    let t0 = two_pow(-5, 3, bits);
    let t1 = (Float::with_val(bits, 1) - Float::with_val(bits, &g2 * 4u32)) / (Float::with_val(bits, &k * 8u32));
    let p2 = Float::with_val(bits, &g4 * 16u32) - Float::with_val(bits, &g2 * 40u32) + 9u32;
    let t2 = -(p2 / Float::with_val(bits, &k * 16u32));
    let p3 = Float::with_val(bits, &g6 * 64u32) - Float::with_val(bits, &g4 * 496u32) + Float::with_val(bits, &g2 * 876u32) - 189u32;
    let t3 = -(p3 * 7u32 / Float::with_val(bits, &k * 128u32));
    let all = vec![(t0, 1), (t1, -2), (t2, -5), (t3, -8)];
    all.into_iter().take(n_terms).collect()
}

/// Same for `v`, with the `alpha + gamma + 1` prefactor.
fn v_terms(alpha: &Float, gamma: &Float, n_terms: usize) -> Vec<(Float, i32)> {
    let bits = gamma.prec().max(alpha.prec());
    let kappa = Float::with_val(bits, alpha + gamma) + 1u32;
    let g2 = Float::with_val(bits, gamma.square_ref());
    let g4 = Float::with_val(bits, g2.square_ref());
    let g6 = Float::with_val(bits, &g4 * &g2);
    let t0 = -(Float::with_val(bits, &kappa) / 4u32);
    let t1 = -((Float::with_val(bits, &g2 * 4u32) - 1u32) * &kappa / 8u32);
    let p2 = Float::with_val(bits, &g4 * 16u32) - Float::with_val(bits, &g2 * 40u32) + 9u32;
    let t2 = -(p2 * 5u32 * &kappa / 32u32);
    let p3 = Float::with_val(bits, &g6 * 64u32) - Float::with_val(bits, &g4 * 496u32) + Float::with_val(bits, &g2 * 876u32) - 189u32;
    let t3 = -(p3 * 7u32 * &kappa / 32u32);
    let all = vec![(t0, 0), (t1, -3), (t2, -6), (t3, -9)];
    all.into_iter().take(n_terms).collect()
}

/// Value and first two derivatives of `sum c s^e`.
fn series_jet(terms: &[(Float, i32)], s: &Float) -> [Float; 3] {
    let bits = s.prec();
    let mut out = [Float::with_val(bits, 0), Float::with_val(bits, 0), Float::with_val(bits, 0)];
    for (c, e) in terms {
        let e = *e;
        let c = Float::with_val(bits, c);
        out[0] += Float::with_val(bits, &c * Float::with_val(bits, s.pow(e)));
        if e != 0 {
            out[1] += Float::with_val(bits, &c * e) * Float::with_val(bits, s.pow(e - 1));
            if e != 1 {
                out[2] += Float::with_val(bits, &c * (e * (e - 1))) * Float::with_val(bits, s.pow(e - 2));
            }
        }
    }
    out
}

/// Truncated large-`s` series `(u(s), v(s))` with `n_terms <= 4` terms each.
pub fn p34_series(s: &Float, alpha: &Float, gamma: &Float, n_terms: usize) -> (Float, Float) {
    let bits = s.prec();
    let g = Float::with_val(bits, gamma);
    let a = Float::with_val(bits, alpha);
    let n_terms = n_terms.min(4);
    let u = series_jet(&u_terms(&g, n_terms), s);
    let v = series_jet(&v_terms(&a, &g, n_terms), s);
    let [u0, _, _] = u;
    let [v0, _, _] = v;
    (u0, v0)
}

/// `(u, u', u'')` and `(v, v', v'')` of the series, derivatives term by term.
pub fn p34_series_jets(s: &Float, alpha: &Float, gamma: &Float, n_terms: usize) -> ([Float; 3], [Float; 3]) {
    let bits = s.prec();
    let g = Float::with_val(bits, gamma);
    let a = Float::with_val(bits, alpha);
    let n_terms = n_terms.min(4);
    (series_jet(&u_terms(&g, n_terms), s), series_jet(&v_terms(&a, &g, n_terms), s))
}

/// Terms of `u u'' - u'^2/2 + 2^{8/3} u^3 - 2 s u^2 + 2^{-7/3} gamma^2`.
pub fn us_terms(s: &Float, u: &[Float; 3], gamma: &Float) -> Vec<Float> {
    let bits = s.prec();
    let g2 = Float::with_val(bits, gamma.square_ref());
    let u2 = Float::with_val(bits, u[0].square_ref());
    vec![
        Float::with_val(bits, &u[0] * &u[2]),
        -(Float::with_val(bits, u[1].square_ref()) / 2u32),
        two_pow(8, 3, bits) * Float::with_val(bits, &u2 * &u[0]),
        -(Float::with_val(bits, s * 2u32) * &u2),
        two_pow(-7, 3, bits) * g2,
    ]
}

/// Terms of the linear equation for `v` given `u`.
pub fn vs_terms(s: &Float, u: &[Float; 3], v: &[Float; 3], alpha: &Float, gamma: &Float) -> Vec<Float> {
    let bits = s.prec();
    let kappa = Float::with_val(bits, alpha + gamma) + 1u32;
    let u2 = Float::with_val(bits, u[0].square_ref());
    let k = two_pow(2, 3, bits);
    vec![
        Float::with_val(bits, &u[0] * &v[2]),
        -Float::with_val(bits, &u[1] * &v[1]),
        Float::with_val(bits, &u[2] * &v[0]),
        Float::with_val(bits, &k * 12u32) * &u2 * &v[0],
        -(Float::with_val(bits, s * 4u32) * &u[0] * &v[0]),
        k * kappa * u2,
    ]
}

/// Terms of `u~'' = u~'^2/(2u~) + 4u~^2 + 2s u~ - gamma^2/(2u~)` moved to one side.
pub fn p34_terms(s: &Float, ut: &[Float; 3], gamma: &Float) -> Vec<Float> {
    let bits = s.prec();
    let two_u = Float::with_val(bits, &ut[0] * 2u32);
    vec![
        ut[2].clone(),
        -(Float::with_val(bits, ut[1].square_ref()) / &two_u),
        -(Float::with_val(bits, ut[0].square_ref()) * 4u32),
        -(Float::with_val(bits, s * 2u32) * &ut[0]),
        Float::with_val(bits, gamma.square_ref()) / &two_u,
    ]
}

/// Relative residuals of the `u` and `v` equations on the truncated series.
pub fn series_residuals(s: &Float, alpha: &Float, gamma: &Float, n_terms: usize) -> (Residual, Residual) {
    let (u, v) = p34_series_jets(s, alpha, gamma, n_terms);
    let g = Float::with_val(s.prec(), gamma);
    (residual_of(&us_terms(s, &u, &g)), residual_of(&vs_terms(s, &u, &v, alpha, &g)))
}

/// `u''` from the `u` equation.
fn u_second(s: &Float, u: &Float, du: &Float, gamma: &Float) -> Float {
    let bits = s.prec();
    let u2 = Float::with_val(bits, u.square_ref());
    let num = Float::with_val(bits, du.square_ref()) / 2u32 - two_pow(8, 3, bits) * Float::with_val(bits, &u2 * u)
        + Float::with_val(bits, s * 2u32) * &u2
        - two_pow(-7, 3, bits) * Float::with_val(bits, gamma.square_ref());
    num / u
}

#[derive(Clone, Debug)]
pub struct P34Trajectory {
    pub gamma: Float,
    /// States `(u, u')` along `s`.
    pub ode: OdeTrajectory,
    /// Relative Painleve XXXIV residual of `u~ = -2^{2/3} u` at each accepted point.
    pub p34_residual: Vec<f64>,
}

impl P34Trajectory {
    /// Index of the accepted point at exactly `s`, if any.
    pub fn index_of(&self, s: f64) -> Option<usize> {
        self.ode.t_grid.iter().position(|x| *x == s)
    }
}

fn p34_residual_at(s: &Float, u: &Float, du: &Float, gamma: &Float) -> f64 {
    let bits = s.prec();
    let k = -two_pow(2, 3, bits);
    let ddu = u_second(s, u, du, gamma);
    let ut = [Float::with_val(bits, &k * u), Float::with_val(bits, &k * du), Float::with_val(bits, &k * &ddu)];
    residual_of(&p34_terms(s, &ut, gamma)).rel
}

/// Integrates the `u` equation from `s_points[0]` through each later point in
/// turn (so every listed point is an accepted node), seeded from the large-`s`
/// series. Returns the part reached and the error that stopped it, if any.
pub fn integrate_p34_through(
    gamma: &Float,
    s_points: &[f64],
    ctx: &PrecisionContext,
    tol: &Float,
) -> (P34Trajectory, Option<Error>) {
    let bits = ctx.bits();
    let g = Float::with_val(bits, gamma);
    let s0 = Float::with_val(bits, s_points[0]);
    let zero = Float::with_val(bits, 0);
    let (u, _) = p34_series_jets(&s0, &zero, &g, 4);
    let mut traj = P34Trajectory {
        gamma: g.clone(),
        ode: OdeTrajectory { t_grid: vec![s0.clone()], states: vec![vec![u[0].clone(), u[1].clone()]], local_error_estimates: vec![zero.clone()] },
        p34_residual: vec![p34_residual_at(&s0, &u[0], &u[1], &g)],
    };
    let thr = ctx.sqrt_eps();
    let field = |s: &Float, y: &[Float]| -> Result<Vec<Float>> {
        if Float::with_val(bits, y[0].abs_ref()) < thr {
            return Err(Error::SingularityEncountered { t_last: s.to_f64(), detail: "u reaches zero".into() });
        }
        Ok(vec![y[1].clone(), u_second(s, &y[0], &y[1], &g)])
    };
    for w in s_points.windows(2) {
        let a = traj.ode.t_grid.last().expect("nonempty").clone();
        let b = Float::with_val(bits, w[1]);
        let y0 = traj.ode.last_state().to_vec();
        let (seg, mut err) = ode_integrate_partial(field, &y0, &a, &b, tol, ctx, &OdeOptions::default());
        let sign = y0[0].is_sign_positive();
        let mut end = seg.t_grid.len();
        if let Some(k) = seg.states.iter().position(|y| y[0].is_sign_positive() != sign || y[0].is_zero()) {
            end = k;
            err = Some(Error::SingularityEncountered { t_last: 0.0, detail: "u changes sign".into() });
        }
        for k in 1..end {
            traj.p34_residual.push(p34_residual_at(&seg.t_grid[k], &seg.states[k][0], &seg.states[k][1], &g));
            traj.ode.t_grid.push(seg.t_grid[k].clone());
            traj.ode.states.push(seg.states[k].clone());
            traj.ode.local_error_estimates.push(seg.local_error_estimates[k].clone());
        }
        if let Some(e) = err {
            let e = match e {
                Error::SingularityEncountered { detail, .. } => {
                    Error::SingularityEncountered { t_last: traj.ode.last_t().to_f64(), detail }
                }
                other => other,
            };
            return (traj, Some(e));
        }
    }
    (traj, None)
}

/// Integrates the `u` equation downward from `s_max` (at least 6) to `s_min`.
pub fn integrate_p34(gamma: &Float, s_max: f64, s_min: f64, ctx: &PrecisionContext, tol: &Float) -> Result<P34Trajectory> {
    if s_max < 6.0 {
        return Err(Error::invalid("series seed needs s_max >= 6"));
    }
    if s_min > s_max {
        return Err(Error::invalid("integration runs downward: s_min <= s_max"));
    }
    match integrate_p34_through(gamma, &[s_max, s_min], ctx, tol) {
        (t, None) => Ok(t),
        (_, Some(e)) => Err(e),
    }
}
