use rug::Float;

use super::catalogue::IdentityId;
use crate::error::{Error, Result};
use crate::numerics::{first_from_stencil, residual_of, second_from_stencil, stencil_points, PrecisionContext, Residual};
use crate::opsys::{build_for_params, cauchy_bundle, r_from_bundle, BuildOptions, VERIFY_GUARD};
use crate::weight::WeightParams;

#[derive(Clone, Debug)]
struct Point {
    t: Float,
    h: Vec<Float>,
    p: Vec<Float>,
    alpha: Vec<Float>,
    /// `beta[0] = 0`.
    beta: Vec<Float>,
    /// `ln D_0 .. ln D_{n_max+1}`.
    ln_d: Vec<Float>,
    big_r: Vec<Float>,
    small_r: Vec<Float>,
    /// `-t sum_{j<n} R_j`, `n = 0..=n_max+1`.
    h_sum: Vec<Float>,
}

/// Polynomial and auxiliary data on the five-point stencil around `t`, with
/// `R_j`, `r_j` from their defining integrals.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub params: WeightParams,
    pub t: Float,
    pub step: Float,
    /// Largest `n` whose identities can be evaluated.
    pub n_hi: usize,
    /// Digits the residual tolerances refer to.
    pub digits: u32,
    bits: u32,
    pts: Vec<Point>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Painleve {
    OdeR,
    PvS,
    SigmaJmo,
    Hd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Discrete {
    Hnd,
    SigmaDiscrete,
}

impl Snapshot {
    pub fn build(p: &WeightParams, n_hi: usize, ctx: &PrecisionContext, opts: &BuildOptions) -> Result<Snapshot> {
        if !(p.t() > &0) {
            return Err(Error::invalid("identity residuals need t > 0"));
        }
        let inner = ctx.with_extra_digits(VERIFY_GUARD);
        let bits = inner.bits();
        let t = Float::with_val(bits, p.t());
        let step = Float::with_val(bits, ctx.fd_step());
        let lo = Float::with_val(bits, &step * 2u32);
        if t <= lo {
            return Err(Error::invalid("t too close to 0 for the difference stencil"));
        }
        let n_max = n_hi + 1;
        let mut pts = Vec::with_capacity(5);
        for tk in stencil_points(&t, &step, bits) {
            let pk = p.with_t(tk.clone());
            let ops = build_for_params(&pk, n_max, &inner, opts)?;
            let b = cauchy_bundle(&ops, n_max, None, &inner)?;
            let (big_r, small_r) = r_from_bundle(&ops, &b, bits);
            let mut h_sum = vec![Float::with_val(bits, 0)];
            let mut acc = Float::with_val(bits, 0);
            for r in &big_r {
                acc += r;
                h_sum.push(-Float::with_val(bits, &acc * &tk));
            }
            pts.push(Point {
                t: tk,
                h: ops.h.iter().map(|v| Float::with_val(bits, v)).collect(),
                p: ops.p1.iter().map(|v| Float::with_val(bits, v)).collect(),
                alpha: ops.alpha_rec.iter().map(|v| Float::with_val(bits, v)).collect(),
                beta: (0..=n_max).map(|j| Float::with_val(bits, ops.beta(j))).collect(),
                ln_d: (0..=n_max + 1).map(|j| Float::with_val(bits, ops.ln_det(j))).collect(),
                big_r,
                small_r,
                h_sum,
            });
        }
        Ok(Snapshot { params: p.clone(), t, step, n_hi, digits: ctx.digits(), bits, pts })
    }

    fn c(&self) -> &Point {
        &self.pts[2]
    }

    fn num(&self, v: i64) -> Float {
        Float::with_val(self.bits, v)
    }

    fn d1<F: Fn(&Point) -> Float>(&self, f: F) -> Float {
        let v: Vec<Float> = self.pts.iter().map(f).collect();
        first_from_stencil(&v, &self.step)
    }

    fn d2<F: Fn(&Point) -> Float>(&self, f: F) -> Float {
        let v: Vec<Float> = self.pts.iter().map(f).collect();
        second_from_stencil(&v, &self.step)
    }

    /// `R_j(t)` from quadrature.
    pub fn big_r(&self, j: usize) -> &Float {
        &self.c().big_r[j]
    }

    pub fn small_r(&self, j: usize) -> &Float {
        &self.c().small_r[j]
    }

    pub fn beta(&self, j: usize) -> &Float {
        &self.c().beta[j]
    }

    /// `H_j = -t sum_{i<j} R_i`.
    pub fn h_sum(&self, j: usize) -> &Float {
        &self.c().h_sum[j]
    }

    /// `H_j = t (ln D_j)'` by differences.
    pub fn h_lnd(&self, j: usize) -> Float {
        self.d1(|q| q.ln_d[j].clone()) * &self.t
    }

    pub fn ln_det(&self, j: usize) -> &Float {
        &self.c().ln_d[j]
    }

    fn well_posed_r(&self, n: usize) -> Result<()> {
        let bits = self.bits;
        let thr = crate::numerics::pow10(bits, -((self.digits / 2) as i32));
        for q in &self.pts {
            let r = &q.big_r[n];
            let r1 = Float::with_val(bits, r - 1u32).abs();
            if Float::with_val(bits, r.abs_ref()) < thr || r1 < thr {
                return Err(Error::IllConditioned(format!("R_{n} is at 0 or 1 near t = {}", q.t.to_f64())));
            }
        }
        Ok(())
    }

    /// Terms of the named identity at index `n`; their sum vanishes.
    pub fn terms(&self, id: IdentityId, n: usize) -> Result<Vec<Float>> {
        if n > self.n_hi {
            return Err(Error::invalid(format!("n = {n} exceeds the snapshot window {}", self.n_hi)));
        }
        if id.needs_previous() && n == 0 {
            return Err(Error::invalid(format!("{id} needs n >= 1")));
        }
        use IdentityId::*;
        let bits = self.bits;
        let q = self.c();
        let t = &self.t;
        let a = Float::with_val(bits, self.params.alpha());
        let g = Float::with_val(bits, self.params.gamma());
        let nn = n as u32;
        // 2n + alpha + gamma, n(n + alpha + gamma), n(n + alpha)
        let k1 = Float::with_val(bits, &a + &g) + 2 * nn;
        let k0 = (Float::with_val(bits, &a + &g) + nn) * nn;
        let nna = (a.clone() + nn) * nn;
        let rr = &q.big_r[n];
        let r = &q.small_r[n];
        let be = &q.beta[n];
        let rprev = || q.big_r[n - 1].clone();
        let sum_r = || q.big_r[..n].iter().fold(self.num(0), |s, x| s + x);
        let r2g = r.clone() * r - g.clone() * r;
        let tt = t.clone() * t;
        let terms = match id {
            S12 => vec![
                q.small_r[n + 1].clone(),
                r.clone(),
                -g.clone(),
                -(t.clone() - &q.alpha[n]) * rr,
            ],
            S13 => {
                let c = k1.clone() + 1u32;
                vec![
                    q.small_r[n + 1].clone(),
                    -g.clone(),
                    -(t.clone() - &c) * rr,
                    t.clone() * rr * rr,
                    r.clone(),
                ]
            }
            S21 => vec![
                q.beta[n + 1].clone(),
                -be.clone(),
                -(t.clone() * &q.small_r[n + 1]),
                t.clone() * r,
                -q.alpha[n].clone(),
            ],
            S22 => {
                let ta = t.clone() - &q.alpha[n];
                vec![
                    ta.clone() * &q.small_r[n + 1],
                    -(ta * r),
                    -(q.beta[n + 1].clone() * &q.big_r[n + 1]),
                    be.clone() * rprev(),
                ]
            }
            S24 => vec![r.clone() * r, -(g.clone() * r), -(be.clone() * rr * rprev())],
            S31 => vec![k0.clone(), t.clone() * r, t.clone() * sum_r(), -be.clone()],
            S32 => {
                let sum_a = q.alpha[..n].iter().fold(self.num(0), |s, x| s + x);
                let coef = tt.clone() - t.clone() * (2 * nn) - t.clone() * &a;
                vec![
                    g.clone() * t * nn,
                    coef * r,
                    g.clone() * sum_a,
                    tt.clone() * sum_r(),
                    -(be.clone() * &g),
                    -(be.clone() * t * rprev()),
                    -(be.clone() * t * rr),
                ]
            }
            S33 => vec![
                g.clone() * nn,
                (t.clone() - &k1) * r,
                t.clone() * sum_r(),
                -(be.clone() * rprev()),
                -(be.clone() * rr),
            ],
            S34 => vec![be.clone() * rprev(), be.clone() * rr, -be.clone(), k1.clone() * r, nna.clone()],
            D1 => vec![self.d1(|p| Float::with_val(bits, p.h[n].ln_ref())), rr.clone()],
            D11 => vec![self.d1(|p| p.beta[n].clone()), -(be.clone() * rprev()), be.clone() * rr],
            D2 => vec![self.d1(|p| p.p[n].clone()), -r.clone()],
            Minus => vec![
                t.clone() * self.d1(|p| p.small_r[n].clone()),
                -(be.clone() * rprev()),
                be.clone() * rr,
            ],
            D12 => vec![
                t.clone() * self.d1(|p| p.small_r[n].clone()),
                -(r2g.clone() / rr),
                be.clone() * rr,
            ],
            Expre => {
                let one_r = 1u32 - rr.clone();
                vec![
                    be.clone(),
                    -(r2g.clone() / (rr.clone() * &one_r)),
                    -((k1.clone() * r + &nna) / one_r),
                ]
            }
            Exbe => vec![q.h_sum[n].clone(), -k0.clone(), -(t.clone() * r), be.clone()],
            Hntex => {
                self.well_posed_r(n)?;
                let dr = self.d1(|p| p.big_r[n].clone());
                let hl = self.h_lnd(n);
                let ag = Float::with_val(bits, &a + &g) - t;
                let r2 = rr.clone() * rr;
                let r3 = r2.clone() * rr;
                let r4 = r3.clone() * rr;
                let two_n_g = g.clone() + 2 * nn;
                vec![
                    hl * rr * (rr.clone() - 1u32) * 4u32,
                    -(tt.clone() * &dr * &dr),
                    tt.clone() * &r4,
                    t.clone() * (k1.clone() - t) * &r3 * 2u32,
                    -((t.clone() * &two_n_g * 2u32 - ag.clone() * &ag) * &r2),
                    -(g.clone() * &ag * rr * 2u32),
                    g.clone() * &g,
                ]
            }
            Beta => vec![
                be.clone(),
                -k0.clone(),
                q.h_sum[n].clone(),
                -(t.clone() * self.d1(|p| p.h_sum[n].clone())),
            ],
            Rn => vec![r.clone(), -self.d1(|p| p.h_sum[n].clone())],
            Rnt => {
                let hm = &q.h_sum[n - 1];
                let hp = &q.h_sum[n + 1];
                let hn = &q.h_sum[n];
                let tr = t.clone() * r;
                let dh = hm.clone() - hp;
                vec![
                    tr.clone() * &k1,
                    -(tr.clone() * t),
                    tr.clone() * hm,
                    -(tr * hp),
                    -(g.clone() * t * nn),
                    t.clone() * hn,
                    (k0.clone() - hn) * dh,
                ]
            }
            Betan => {
                let hm = &q.h_sum[n - 1];
                let hp = &q.h_sum[n + 1];
                let hn = &q.h_sum[n];
                let kt = k1.clone() - t;
                vec![
                    be.clone() * &kt,
                    be.clone() * (hm.clone() - hp),
                    -(g.clone() * t * nn),
                    -(k0.clone() * &kt),
                    k1.clone() * hn,
                ]
            }
            Rnbe => {
                let trp = t.clone() * self.d1(|p| p.small_r[n].clone());
                let inner = be.clone() - k1.clone() * r - &nna;
                vec![be.clone() * &r2g * 4u32, -(inner.clone() * &inner), trp.clone() * &trp]
            }
            Rh1 => vec![t.clone() * rr, -self.h_lnd(n), self.h_lnd(n + 1)],
            Rh2 => vec![t.clone() * rprev(), -self.h_lnd(n - 1), self.h_lnd(n)],
            Ri1 => {
                let dr = self.d1(|p| p.big_r[n].clone());
                vec![
                    t.clone() * dr,
                    -(t.clone() * rr * rr),
                    -((k1.clone() - t) * rr),
                    -(r.clone() * 2u32),
                    g.clone(),
                ]
            }
            Ri2 => {
                self.well_posed_r(n)?;
                let dr = self.d1(|p| p.small_r[n].clone());
                let one_r = 1u32 - rr.clone();
                vec![
                    t.clone() * dr,
                    -(r2g.clone() / rr),
                    (r2g.clone() + (k1.clone() * r + &nna) * rr) / one_r,
                ]
            }
            OdeR => {
                let d = self.d1(|p| p.big_r[n].clone());
                let dd = self.d2(|p| p.big_r[n].clone());
                let one_r = 1u32 - rr.clone();
                let c = k1.clone() + 1u32;
                let r2 = rr.clone() * rr;
                let r3 = r2.clone() * rr;
                let r4 = r3.clone() * rr;
                let r5 = r4.clone() * rr;
                vec![
                    tt.clone() * rr * &one_r * &dd * 2u32,
                    -(tt.clone() * (1u32 - rr.clone() * 2u32) * &d * &d),
                    t.clone() * rr * &one_r * &d * 2u32,
                    tt.clone() * &r5 * 2u32,
                    t.clone() * (c.clone() * 2u32 - t.clone() * 5u32) * &r4,
                    -(t.clone() * (c.clone() - t) * &r3 * 4u32),
                    -((tt.clone() - c.clone() * t * 2u32 + a.clone() * &a - g.clone() * &g) * &r2),
                    -(g.clone() * &g * rr * 2u32),
                    g.clone() * &g,
                ]
            }
            PvS => {
                self.well_posed_r(n)?;
                let s_of = |p: &Point| p.big_r[n].clone() / (p.big_r[n].clone() - 1u32);
                let s = s_of(q);
                let ds = self.d1(s_of);
                let dds = self.d2(s_of);
                let s1 = s.clone() - 1u32;
                let c = k1.clone() + 1u32;
                vec![
                    dds,
                    -((s.clone() * 3u32 - 1u32) * &ds * &ds / (s.clone() * &s1 * 2u32)),
                    ds.clone() / t,
                    -(s1.clone() * &s1 * &a * &a * &s / (tt.clone() * 2u32)),
                    s1.clone() * &s1 * &g * &g / (s.clone() * &tt * 2u32),
                    c * &s / t,
                    s.clone() * (s.clone() + 1u32) / (s1 * 2u32),
                ]
            }
            SigmaJmo => {
                let sg = q.h_sum[n].clone() - g.clone() * nn;
                let ds = self.d1(|p| p.h_sum[n].clone());
                let dds = self.d2(|p| p.h_sum[n].clone());
                let nu_sum = a.clone() + 2 * nn - &g;
                let tds = t.clone() * &dds;
                let br = sg - t.clone() * &ds + ds.clone() * &ds * 2u32 + nu_sum * &ds;
                let prod = ds.clone() * (ds.clone() + nn) * (ds.clone() + nn + &a) * (ds.clone() - &g) * 4u32;
                vec![tds.clone() * &tds, -(br.clone() * &br), prod]
            }
            Hd => {
                let hn = &q.h_sum[n];
                let dh = self.d1(|p| p.h_sum[n].clone());
                let ddh = self.d2(|p| p.h_sum[n].clone());
                let tdd = t.clone() * &ddh;
                let br = g.clone() * nn - hn - (k1.clone() - t) * &dh;
                let prod = (k0.clone() - hn + t.clone() * &dh) * (dh.clone() * &dh - g.clone() * &dh) * 4u32;
                vec![tdd.clone() * &tdd, -(br.clone() * &br), prod]
            }
            Hnd => {
                let hm = &q.h_sum[n - 1];
                let hp = &q.h_sum[n + 1];
                let hn = &q.h_sum[n];
                let dh = hm.clone() - hp;
                let l1 = g.clone() * t * nn - t.clone() * hn - (k0.clone() - hn) * &dh;
                let l2 = (t.clone() - nn - &a - &g) * &g * t - t.clone() * hn - (k0.clone() + g.clone() * t - hn) * &dh;
                let rhs = (g.clone() * t * nn + k0.clone() * (k1.clone() - t) - k1.clone() * hn)
                    * (k1.clone() - t + &dh)
                    * (hn.clone() - hp)
                    * (hm.clone() - hn);
                vec![l1 * l2, -rhs]
            }
            SigmaDiscrete => {
                let s = |j: usize| q.h_sum[j].clone() - g.clone() * j as u32;
                let (sm, sn, sp) = (s(n - 1), s(n), s(n + 1));
                let w = g.clone() * 2u32 - &sm + &sp;
                let l1 = t.clone() * &sn - (nna.clone() - &sn) * &w;
                let l2 = (k1.clone() - t) * &g * t + t.clone() * &sn - (nna.clone() + g.clone() * t - &sn) * &w;
                let rhs = (nna.clone() * (k1.clone() - t) - k1.clone() * &sn)
                    * (a.clone() + 2 * nn - &g - t + &sm - &sp)
                    * (g.clone() - &sn + &sp)
                    * (g.clone() - &sm + &sn);
                vec![l1 * l2, -rhs]
            }
            Td1 => {
                let dd = self.d2(|p| p.ln_d[n].clone());
                let ratio = (q.ln_d[n + 1].clone() + &q.ln_d[n - 1] - q.ln_d[n].clone() * 2u32).exp();
                vec![tt.clone() * dd, k0.clone(), -ratio]
            }
            Td2 => {
                let tilde = |p: &Point, j: usize| {
                    let kj = (Float::with_val(bits, &a + &g) + j as u32) * j as u32;
                    p.ln_d[j].clone() - kj * Float::with_val(bits, p.t.ln_ref())
                };
                let dd = self.d2(|p| tilde(p, n));
                let ratio = (tilde(q, n + 1) + tilde(q, n - 1) - tilde(q, n) * 2u32).exp();
                vec![dd, -ratio]
            }
            IntRep => return Err(Error::invalid("int_rep is evaluated over an interval, not at a point")),
        };
        Ok(terms)
    }

    pub fn residual(&self, id: IdentityId, n: usize) -> Result<Residual> {
        Ok(residual_of(&self.terms(id, n)?))
    }
}

fn snapshot_for(n: usize, p: &WeightParams, ctx: &PrecisionContext) -> Result<Snapshot> {
    Snapshot::build(p, n, ctx, &BuildOptions::default())
}

/// Residuals of the two Riccati equations for `R_n`, `r_n`.
pub fn residual_riccati(n: usize, p: &WeightParams, ctx: &PrecisionContext) -> Result<(Residual, Residual)> {
    let s = snapshot_for(n, p, ctx)?;
    s.well_posed_r(n)?;
    Ok((s.residual(IdentityId::Ri1, n)?, s.residual(IdentityId::Ri2, n)?))
}

pub fn residual_painleve(n: usize, p: &WeightParams, which: Painleve, ctx: &PrecisionContext) -> Result<Residual> {
    let s = snapshot_for(n, p, ctx)?;
    let id = match which {
        Painleve::OdeR => IdentityId::OdeR,
        Painleve::PvS => IdentityId::PvS,
        Painleve::SigmaJmo => IdentityId::SigmaJmo,
        Painleve::Hd => IdentityId::Hd,
    };
    s.residual(id, n)
}

pub fn residual_discrete(n: usize, p: &WeightParams, which: Discrete, ctx: &PrecisionContext) -> Result<Residual> {
    if n == 0 {
        return Err(Error::invalid("difference equations need n >= 1"));
    }
    let s = snapshot_for(n, p, ctx)?;
    let id = match which {
        Discrete::Hnd => IdentityId::Hnd,
        Discrete::SigmaDiscrete => IdentityId::SigmaDiscrete,
    };
    s.residual(id, n)
}

pub use super::sweep::residual_identity;
