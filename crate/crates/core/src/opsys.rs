//! Monic orthogonal polynomials from moments, and the auxiliary quantities
//! `R_n`, `r_n`, `H_n`, `sigma_n` by two independent routes.

use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::{first_from_stencil, integrate_factored, stencil_points, Factor, PrecisionContext};
use crate::weight::{moments_cached, MomentCache, MomentMethod, MomentTable, WeightParams};

/// Decimal digits carried above the caller's precision by verification code.
pub const VERIFY_GUARD: u32 = 15;

#[derive(Clone, Debug)]
pub struct OPSystem {
    pub n_max: usize,
    /// `h_0 .. h_{n_max}`.
    pub h: Vec<Float>,
    /// `p(0,t) = 0, p(1,t), .., p(n_max,t)`.
    pub p1: Vec<Float>,
    /// `alpha_0 .. alpha_{n_max-1}`.
    pub alpha_rec: Vec<Float>,
    /// `beta_1 .. beta_{n_max}`.
    pub beta_rec: Vec<Float>,
    /// `coeff[n][k]` is the `x^k` coefficient of `P_n`.
    pub coeff: Vec<Vec<Float>>,
    pub params: WeightParams,
    /// Precision the factorization ran at.
    pub digits: u32,
    /// Estimated decimal digits lost to the conditioning of the Hankel matrix.
    pub loss_digits: f64,
    pub method: MomentMethod,
}

impl OPSystem {
    pub fn bits(&self) -> u32 {
        self.h[0].prec()
    }

    pub fn h(&self, n: usize) -> &Float {
        &self.h[n]
    }

    /// `p(n,t)`, with `p(0,t) = 0`.
    pub fn p(&self, n: usize) -> &Float {
        &self.p1[n]
    }

    pub fn alpha(&self, n: usize) -> &Float {
        &self.alpha_rec[n]
    }

    /// `beta_n`, with `beta_0 = 0`.
    pub fn beta(&self, n: usize) -> Float {
        if n == 0 {
            Float::with_val(self.bits(), 0)
        } else {
            self.beta_rec[n - 1].clone()
        }
    }

    /// `ln D_n = sum_{j<n} ln h_j`; `n <= n_max + 1`.
    pub fn ln_det(&self, n: usize) -> Float {
        let bits = self.bits();
        self.h[..n].iter().fold(Float::with_val(bits, 0), |acc, h| acc + Float::with_val(bits, h.ln_ref()))
    }

    /// Values `P_0(x) .. P_top(x)` by the three-term recurrence.
    pub fn eval_all(&self, top: usize, x: &Float) -> Vec<Float> {
        let bits = self.bits().max(x.prec());
        let mut out = Vec::with_capacity(top + 1);
        out.push(Float::with_val(bits, 1));
        if top == 0 {
            return out;
        }
        out.push(Float::with_val(bits, x - &self.alpha_rec[0]));
        for j in 1..top {
            let a = Float::with_val(bits, x - &self.alpha_rec[j]) * &out[j];
            let b = Float::with_val(bits, &self.beta_rec[j - 1] * &out[j - 1]);
            out.push(a - b);
        }
        out
    }
}

/// `D_n = prod_{j<n} h_j`, `D_0 = 1`.
pub fn hankel_det(ops: &OPSystem, n: usize) -> Result<Float> {
    if n > ops.n_max + 1 {
        return Err(Error::invalid(format!("D_{n} needs n_max >= {}", n - 1)));
    }
    let bits = ops.bits();
    Ok(ops.h[..n].iter().fold(Float::with_val(bits, 1), |acc, h| acc * h))
}

/// `P_n^{(d)}(x)` by Horner on the stored coefficients, `d <= 2`.
pub fn eval_pn(ops: &OPSystem, n: usize, x: &Float, deriv_order: u32) -> Result<Float> {
    if n > ops.n_max {
        return Err(Error::invalid(format!("P_{n} exceeds n_max = {}", ops.n_max)));
    }
    if deriv_order > 2 {
        return Err(Error::invalid("derivative order must be 0, 1 or 2"));
    }
    let bits = ops.bits().max(x.prec());
    let c = &ops.coeff[n];
    let mut acc = Float::with_val(bits, 0);
    for k in (deriv_order as usize..=n).rev() {
        let f: u32 = match deriv_order {
            0 => 1,
            1 => k as u32,
            _ => (k * (k - 1)) as u32,
        };
        acc *= x;
        acc += Float::with_val(bits, &c[k] * f);
    }
    Ok(acc)
}

/// Factors the Hankel moment matrix `M_ij = mu_{i+j}` as `L D L^T`. The pivots
/// are the `h_n`, and the rows of `L^{-1}` are the monic coefficients.
pub fn build_ops(m: &MomentTable, n_max: usize, ctx: &PrecisionContext) -> Result<OPSystem> {
    if m.k_max < 2 * n_max {
        return Err(Error::invalid(format!(
            "moment table to k = {} cannot support n_max = {n_max}",
            m.k_max
        )));
    }
    let bits = ctx.bits().max(m.mu[0].prec());
    let size = n_max + 1;
    let mu: Vec<Float> = m.mu.iter().map(|v| Float::with_val(bits, v)).collect();
    let mut l = vec![vec![Float::with_val(bits, 0); size]; size];
    let mut d: Vec<Float> = Vec::with_capacity(size);
    for j in 0..size {
        let mut dj = mu[2 * j].clone();
        for k in 0..j {
            dj -= Float::with_val(bits, &l[j][k] * &l[j][k]) * &d[k];
        }
        if !(dj > 0) {
            return Err(Error::PrecisionFailure {
                what: format!("nonpositive Hankel pivot at n = {j}"),
                n: Some(j),
            });
        }
        l[j][j] = Float::with_val(bits, 1);
        for i in (j + 1)..size {
            let mut s = mu[i + j].clone();
            for k in 0..j {
                s -= Float::with_val(bits, &l[i][k] * &l[j][k]) * &d[k];
            }
            l[i][j] = s / &dj;
        }
        d.push(dj);
    }
    // C = L^{-1}, unit lower triangular.
    let mut coeff: Vec<Vec<Float>> = Vec::with_capacity(size);
    for i in 0..size {
        let mut row = vec![Float::with_val(bits, 0); i + 1];
        row[i] = Float::with_val(bits, 1);
        for j in (0..i).rev() {
            let mut s = Float::with_val(bits, 0);
            for k in j..i {
                s += Float::with_val(bits, &l[i][k] * &coeff[k][j]);
            }
            row[j] = -s;
        }
        coeff.push(row);
    }
    let p1: Vec<Float> = (0..size)
        .map(|n| if n == 0 { Float::with_val(bits, 0) } else { coeff[n][n - 1].clone() })
        .collect();
    let alpha_rec: Vec<Float> = (0..n_max).map(|n| Float::with_val(bits, &p1[n] - &p1[n + 1])).collect();
    let beta_rec: Vec<Float> = (1..size).map(|n| Float::with_val(bits, &d[n] / &d[n - 1])).collect();
    let mut loss: f64 = 0.0;
    for j in 0..size {
        let r = Float::with_val(bits, &mu[2 * j] / &d[j]);
        loss = loss.max(log10(&r));
    }
    loss += ((size as f64).log10()).max(0.0);
    Ok(OPSystem {
        n_max,
        h: d,
        p1,
        alpha_rec,
        beta_rec,
        coeff,
        params: m.params.clone(),
        digits: ((bits as f64 - crate::numerics::context::GUARD_BITS as f64) / std::f64::consts::LOG2_10).floor() as u32,
        loss_digits: loss,
        method: m.method,
    })
}

pub(crate) fn log10(x: &Float) -> f64 {
    let p = x.prec();
    Float::with_val(p, x.abs_ref()).log10().to_f64()
}

/// How an [`OPSystem`] is produced from parameters.
#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    /// `None` picks the closed form for even `gamma`.
    pub method: Option<MomentMethod>,
    pub cache: Option<MomentCache>,
    /// Multiply `mu[index]` by `1 + rel` before factoring (fault injection).
    pub perturb: Option<(usize, f64)>,
    /// Overrides the initial guard-digit guess.
    pub extra_digits: Option<u32>,
}

impl BuildOptions {
    pub fn method_for(&self, p: &WeightParams) -> MomentMethod {
        self.method.unwrap_or(if p.gamma_even().is_some() {
            MomentMethod::Closed
        } else {
            MomentMethod::Quadrature
        })
    }
}

/// Builds an [`OPSystem`] whose data is accurate to about `ctx.digits()`,
/// escalating the internal precision as the Hankel conditioning requires.
pub fn build_for_params(p: &WeightParams, n_max: usize, ctx: &PrecisionContext, opts: &BuildOptions) -> Result<OPSystem> {
    let method = opts.method_for(p);
    let target = ctx.digits();
    let mut extra = opts.extra_digits.unwrap_or(20 + (0.7 * n_max as f64).ceil() as u32);
    let mut retries = 0;
    let mut rebuilt = false;
    loop {
        let inner = ctx.at_digits(target + extra)?;
        let mut m = moments_cached(p, 2 * n_max, method, opts.cache.as_ref(), &inner)?;
        if let Some((i, rel)) = opts.perturb {
            m = m.perturbed(i, rel);
        }
        match build_ops(&m, n_max, &inner) {
            Ok(ops) => {
                let need = (ops.loss_digits.ceil() as u32) + 10;
                if need > extra && !rebuilt {
                    extra = need + 10;
                    rebuilt = true;
                    continue;
                }
                return Ok(ops);
            }
            Err(Error::PrecisionFailure { n, .. }) if retries < 3 => {
                log::debug!("Hankel pivot failed at n = {n:?}; doubling precision");
                retries += 1;
                extra = (target + extra) * 2 - target;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Recurrence,
    Quadrature,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Recurrence => "recurrence",
            Route::Quadrature => "quadrature",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuxQuantities {
    pub big_r: Vec<Float>,
    pub small_r: Vec<Float>,
    pub big_h: Vec<Float>,
    pub sigma: Vec<Float>,
    pub route: Route,
    pub t: Float,
}

fn sigma_from(h: &[Float], gamma: &Float, bits: u32) -> Vec<Float> {
    h.iter()
        .enumerate()
        .map(|(n, v)| Float::with_val(bits, v - Float::with_val(bits, gamma * n as u32)))
        .collect()
}

/// `R_n` from `alpha_n`, `r_n` from `beta_n` and `p(n,t)`, `H_n` by summing `R_j`.
pub fn aux_recurrence(ops: &OPSystem, p: &WeightParams) -> Result<AuxQuantities> {
    if !(p.t() > &0) {
        return Err(Error::invalid("the recurrence route divides by t and needs t > 0"));
    }
    let bits = ops.bits();
    let t = Float::with_val(bits, p.t());
    let shift = Float::with_val(bits, p.alpha() + p.gamma()) + 1u32;
    let big_r: Vec<Float> = (0..ops.n_max)
        .map(|n| {
            let c = Float::with_val(bits, &shift + (2 * n) as u32);
            Float::with_val(bits, ops.alpha(n) - c) / &t
        })
        .collect();
    let small_r: Vec<Float> = (0..=ops.n_max)
        .map(|n| Float::with_val(bits, ops.beta(n) + ops.p(n)) / &t)
        .collect();
    let mut big_h = vec![Float::with_val(bits, 0)];
    let mut acc = Float::with_val(bits, 0);
    for r in &big_r {
        acc += r;
        big_h.push(Float::with_val(bits, -Float::with_val(bits, &acc * &t)));
    }
    let sigma = sigma_from(&big_h, p.gamma(), bits);
    Ok(AuxQuantities { big_r, small_r, big_h, sigma, route: Route::Recurrence, t })
}

/// Weighted Cauchy-type integrals of `P_j^2` and `P_j P_{j-1}`, `j <= top`.
#[derive(Clone, Debug)]
pub struct CauchyBundle {
    /// `int P_j^2 w`
    pub sq: Vec<Float>,
    /// `int P_j^2 w / y`
    pub sq_y: Vec<Float>,
    /// `int P_j^2 w / (y - t)`
    pub sq_t: Vec<Float>,
    /// `int P_j P_{j-1} w`, zero at `j = 0`.
    pub mx: Vec<Float>,
    pub mx_y: Vec<Float>,
    pub mx_t: Vec<Float>,
    /// `int P_j^2 w / ((z - y)(y - t))` when a `z` was given.
    pub sq_z: Vec<Float>,
    pub mx_z: Vec<Float>,
}

/// All of [`CauchyBundle`] from one vector-valued quadrature over `[0, inf)`.
///
/// The factors `y^{alpha-1}` and `|y-t|^{gamma-1}` are absorbed by Gauss-Jacobi
/// panels at `0` and `t`; the rest of each integrand is polynomial times
/// `e^{-y}` (and `1/(z-y)`).
pub fn cauchy_bundle(ops: &OPSystem, top: usize, z: Option<&Float>, ctx: &PrecisionContext) -> Result<CauchyBundle> {
    cauchy_bundle_parts(ops, top, z, true, ctx)
}

pub(crate) fn cauchy_bundle_parts(
    ops: &OPSystem,
    top: usize,
    z: Option<&Float>,
    base: bool,
    ctx: &PrecisionContext,
) -> Result<CauchyBundle> {
    if top > ops.n_max {
        return Err(Error::invalid("bundle degree exceeds n_max"));
    }
    let p = &ops.params;
    if !(p.t() > &0) {
        return Err(Error::invalid("Cauchy integrals need t > 0"));
    }
    let bits = ctx.bits();
    let t = Float::with_val(bits, p.t());
    let big_a = Float::with_val(bits, p.big_a());
    let right = p.right_factor(bits);
    let zf = z.map(|v| Float::with_val(bits, v));
    let n = top + 1;
    let fam = if base { 6 } else { 0 } + if zf.is_some() { 2 } else { 0 };
    let dim = fam * n;
    let g = |y: &Float, out: &mut [Float]| {
        let pv = ops.eval_all(top, y);
        let above = *y > t;
        let jump = if above { &right } else { &big_a };
        let c = Float::with_val(bits, -y).exp() * jump;
        let d = Float::with_val(bits, y - &t).abs();
        // kernels: plain = y d c, over y = d c, over (y-t) = sgn y c
        let k_y = Float::with_val(bits, &d * &c);
        let k_plain = Float::with_val(bits, &k_y * y);
        let mut k_t = Float::with_val(bits, y * &c);
        if !above {
            k_t = -k_t;
        }
        let k_z = zf.as_ref().map(|zv| Float::with_val(bits, &k_t / Float::with_val(bits, zv - y)));
        for j in 0..n {
            let sq = Float::with_val(bits, &pv[j] * &pv[j]);
            let mx = if j == 0 { Float::with_val(bits, 0) } else { Float::with_val(bits, &pv[j] * &pv[j - 1]) };
            let mut slot = 0;
            if base {
                out[j] = Float::with_val(bits, &sq * &k_plain);
                out[n + j] = Float::with_val(bits, &sq * &k_y);
                out[2 * n + j] = Float::with_val(bits, &sq * &k_t);
                out[3 * n + j] = Float::with_val(bits, &mx * &k_plain);
                out[4 * n + j] = Float::with_val(bits, &mx * &k_y);
                out[5 * n + j] = Float::with_val(bits, &mx * &k_t);
                slot = 6;
            }
            if let Some(kz) = &k_z {
                out[slot * n + j] = Float::with_val(bits, &sq * kz);
                out[(slot + 1) * n + j] = Float::with_val(bits, &mx * kz);
            }
        }
    };
    let factors = [
        Factor::new(Float::with_val(bits, 0), Float::with_val(bits, p.alpha()) - 1u32),
        Factor::new(t.clone(), Float::with_val(bits, p.gamma()) - 1u32),
    ];
    let poles: Vec<Float> = zf.iter().cloned().collect();
    let v = integrate_factored(&g, dim, &Float::with_val(bits, 0), None, &factors, &poles, 1.0, ctx)?;
    let take = |k: usize| v[k * n..(k + 1) * n].to_vec();
    let empty = Vec::new;
    let (sq, sq_y, sq_t, mx, mx_y, mx_t) = if base {
        (take(0), take(1), take(2), take(3), take(4), take(5))
    } else {
        (empty(), empty(), empty(), empty(), empty(), empty())
    };
    let off = if base { 6 } else { 0 };
    let (sq_z, mx_z) = if zf.is_some() { (take(off), take(off + 1)) } else { (empty(), empty()) };
    Ok(CauchyBundle { sq, sq_y, sq_t, mx, mx_y, mx_t, sq_z, mx_z })
}

/// `R_j`, `r_j` for `j <= top` from a bundle.
pub fn r_from_bundle(ops: &OPSystem, b: &CauchyBundle, bits: u32) -> (Vec<Float>, Vec<Float>) {
    let g = Float::with_val(bits, ops.params.gamma());
    let big_r = b
        .sq_t
        .iter()
        .enumerate()
        .map(|(j, v)| Float::with_val(bits, v * &g) / &ops.h[j])
        .collect();
    let small_r = b
        .mx_t
        .iter()
        .enumerate()
        .map(|(j, v)| {
            if j == 0 {
                Float::with_val(bits, 0)
            } else {
                Float::with_val(bits, v * &g) / &ops.h[j - 1]
            }
        })
        .collect();
    (big_r, small_r)
}

/// `R_n`, `r_n` from their defining integrals, `H_n = t (ln D_n)'` by a
/// central difference of rebuilt systems at shifted `t`.
pub fn aux_quadrature(ops: &OPSystem, p: &WeightParams, ctx: &PrecisionContext) -> Result<AuxQuantities> {
    aux_quadrature_with(ops, p, ctx, &BuildOptions { method: Some(ops.method), ..Default::default() })
}

pub fn aux_quadrature_with(ops: &OPSystem, p: &WeightParams, ctx: &PrecisionContext, opts: &BuildOptions) -> Result<AuxQuantities> {
    if !(p.t() > &0) {
        return Err(Error::invalid("the quadrature route needs t > 0"));
    }
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let bits = inner.bits();
    let b = cauchy_bundle(ops, ops.n_max, None, &inner)?;
    let (big_r, small_r) = r_from_bundle(ops, &b, bits);
    let t = Float::with_val(bits, p.t());
    let h = Float::with_val(bits, ctx.fd_step());
    let pts = stencil_points(&t, &h, bits);
    let mut lnd: Vec<Vec<Float>> = Vec::with_capacity(5);
    for (k, tk) in pts.iter().enumerate() {
        if k == 2 {
            lnd.push(vec![Float::with_val(bits, 0); ops.n_max + 2]);
            continue;
        }
        let o = build_for_params(&p.with_t(tk.clone()), ops.n_max, &inner, opts)?;
        lnd.push((0..=ops.n_max + 1).map(|n| o.ln_det(n)).collect());
    }
    let big_h: Vec<Float> = (0..=ops.n_max + 1)
        .map(|n| {
            let vals: Vec<Float> = lnd.iter().map(|v| v[n].clone()).collect();
            first_from_stencil(&vals, &h) * &t
        })
        .collect();
    let sigma = sigma_from(&big_h, p.gamma(), bits);
    Ok(AuxQuantities { big_r, small_r, big_h, sigma, route: Route::Quadrature, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_context;

    fn abs_diff(a: &Float, b: &Float) -> f64 {
        Float::with_val(a.prec(), a - b).abs().to_f64()
    }

    #[test]
    fn laguerre_at_zero() {
        let ctx = make_context(60).unwrap();
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 0.0);
        let ops = build_for_params(&p, 6, &ctx, &BuildOptions::default()).unwrap();
        let nu = Float::with_val(ctx.bits(), p.alpha() + p.gamma());
        for n in 0..6 {
            let want = Float::with_val(ctx.bits(), &nu + (2 * n + 1) as u32);
            assert!(abs_diff(ops.alpha(n), &want) < 1e-50);
            let pn = Float::with_val(ctx.bits(), p.alpha() + p.gamma()) + n as u32;
            let pn = -(pn * n as u32);
            assert!(abs_diff(ops.p(n), &pn) < 1e-50);
        }
        for n in 1..=6 {
            let b = Float::with_val(ctx.bits(), p.alpha() + p.gamma()) + n as u32;
            assert!(abs_diff(&ops.beta(n), &(b * n as u32)) < 1e-48);
        }
        let g = Float::with_val(ctx.bits(), Float::with_val(ctx.bits(), p.alpha() + p.gamma()) + 1u32).gamma();
        assert!(abs_diff(ops.h(0), &g) < 1e-55);
    }

    #[test]
    fn degree_zero_and_one() {
        let ctx = make_context(40).unwrap();
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let m = crate::weight::moments_closed(&p, 2, &ctx).unwrap();
        let ops = build_ops(&m, 0, &ctx).unwrap();
        assert_eq!(ops.h(0), &m.mu[0]);
        let ops = build_ops(&m, 1, &ctx).unwrap();
        let x = ctx.num(0.7);
        let p1 = eval_pn(&ops, 1, &x, 0).unwrap();
        let want = Float::with_val(ctx.bits(), &x - Float::with_val(ctx.bits(), &m.mu[1] / &m.mu[0]));
        assert!(abs_diff(&p1, &want) < 1e-38);
        assert_eq!(hankel_det(&ops, 0).unwrap(), 1);
        assert_eq!(hankel_det(&ops, 1).unwrap(), m.mu[0]);
    }

    #[test]
    fn telescoping_sum() {
        let ctx = make_context(50).unwrap();
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let ops = build_for_params(&p, 6, &ctx, &BuildOptions::default()).unwrap();
        let bits = ops.bits();
        let mut s = Float::with_val(bits, 0);
        for n in 1..=6 {
            s += ops.alpha(n - 1);
            let r = Float::with_val(bits, &s + ops.p(n)).abs();
            assert!(r < 1e-45);
        }
    }

    #[test]
    fn routes_agree() {
        let ctx = make_context(40).unwrap();
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let ops = build_for_params(&p, 4, &ctx.with_extra_digits(VERIFY_GUARD), &BuildOptions::default()).unwrap();
        let rec = aux_recurrence(&ops, &p).unwrap();
        let quad = aux_quadrature(&ops, &p, &ctx).unwrap();
        for n in 0..4 {
            assert!(abs_diff(&rec.big_r[n], &quad.big_r[n]) < 1e-20, "R_{n}");
        }
        for n in 0..=4 {
            assert!(abs_diff(&rec.small_r[n], &quad.small_r[n]) < 1e-20, "r_{n}");
            assert!(abs_diff(&rec.big_h[n], &quad.big_h[n]) < 1e-13, "H_{n}");
        }
        assert!(rec.small_r[0].is_zero());
        let h1 = Float::with_val(ops.bits(), -Float::with_val(ops.bits(), &rec.t * &rec.big_r[0]));
        assert_eq!(rec.big_h[1], h1);
    }

    #[test]
    fn recurrence_route_rejects_zero_t() {
        let ctx = make_context(40).unwrap();
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 0.0);
        let ops = build_for_params(&p, 2, &ctx, &BuildOptions::default()).unwrap();
        assert!(aux_recurrence(&ops, &p).is_err());
    }
}
