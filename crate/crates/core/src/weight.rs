//! The perturbed Laguerre weight `x^alpha e^{-x} |x-t|^gamma (A + B theta(x-t))`
//! and its moments.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rug::ops::Pow;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{incomplete_gamma_ladder, integrate_factored, rules, Factor, PrecisionContext};

/// Parameters `(alpha, gamma, A, B, t)`. Each value keeps its own precision, so
/// `t` can carry a tiny finite-difference offset exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightParams {
    alpha: Float,
    gamma: Float,
    big_a: Float,
    big_b: Float,
    t: Float,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    AlphaNotPositive,
    GammaNotPositive,
    NegativeA,
    NegativeAPlusB,
    WeightIdenticallyZero,
    NegativeT,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::AlphaNotPositive => "alpha > 0",
            Violation::GammaNotPositive => "gamma > 0",
            Violation::NegativeA => "A >= 0",
            Violation::NegativeAPlusB => "A + B >= 0",
            Violation::WeightIdenticallyZero => "weight identically zero",
            Violation::NegativeT => "t >= 0",
        };
        f.write_str(s)
    }
}

fn exact(v: f64) -> Float {
    Float::with_val(53, v)
}

impl WeightParams {
    /// Parameters from doubles, stored exactly.
    pub fn new(alpha: f64, gamma: f64, big_a: f64, big_b: f64, t: f64) -> Self {
        WeightParams {
            alpha: exact(alpha),
            gamma: exact(gamma),
            big_a: exact(big_a),
            big_b: exact(big_b),
            t: exact(t),
        }
    }

    /// Parameters from decimal strings rounded to `bits`, so `1.3` means 13/10
    /// rather than the nearest double.
    pub fn from_decimal(alpha: &str, gamma: &str, big_a: &str, big_b: &str, t: &str, bits: u32) -> Result<Self> {
        let parse = |name: &str, s: &str| -> Result<Float> {
            let v = Float::parse(s).map_err(|e| Error::invalid(format!("{name} = `{s}`: {e}")))?;
            Ok(Float::with_val(bits, v))
        };
        Ok(WeightParams {
            alpha: parse("alpha", alpha)?,
            gamma: parse("gamma", gamma)?,
            big_a: parse("A", big_a)?,
            big_b: parse("B", big_b)?,
            t: parse("t", t)?,
        })
    }

    pub fn alpha(&self) -> &Float {
        &self.alpha
    }

    pub fn gamma(&self) -> &Float {
        &self.gamma
    }

    pub fn big_a(&self) -> &Float {
        &self.big_a
    }

    pub fn big_b(&self) -> &Float {
        &self.big_b
    }

    pub fn t(&self) -> &Float {
        &self.t
    }

    /// `A + B`, the weight factor to the right of `t`.
    pub fn right_factor(&self, bits: u32) -> Float {
        Float::with_val(bits, &self.big_a + &self.big_b)
    }

    pub fn with_t(&self, t: Float) -> Self {
        WeightParams { t, ..self.clone() }
    }

    pub fn with_t_f64(&self, t: f64) -> Self {
        self.with_t(exact(t))
    }

    /// `(lambda A, lambda B)`; the orthogonal polynomials do not change.
    pub fn scaled(&self, lambda: f64) -> Self {
        let l = exact(lambda);
        let p = self.big_a.prec().max(53) + 53;
        WeightParams {
            big_a: Float::with_val(p, &self.big_a * &l),
            big_b: Float::with_val(p, &self.big_b * &l),
            ..self.clone()
        }
    }

    /// `K` when `gamma = 2K` for a positive integer `K`.
    pub fn gamma_even(&self) -> Option<u32> {
        let half = Float::with_val(self.gamma.prec() + 1, &self.gamma / 2u32);
        if self.gamma > 0 && half.is_integer() && half < 1000 {
            Some(half.to_f64() as u32)
        } else {
            None
        }
    }

    /// Stable identifier built from the exact binary values.
    pub fn key(&self) -> String {
        [&self.alpha, &self.gamma, &self.big_a, &self.big_b, &self.t]
            .iter()
            .map(|v| v.to_string_radix(16, None))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Every violated invariant of `p`; empty when the parameters are valid.
pub fn validate_params(p: &WeightParams) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(p.alpha > 0) {
        out.push(Violation::AlphaNotPositive);
    }
    if !(p.gamma > 0) {
        out.push(Violation::GammaNotPositive);
    }
    if p.big_a < 0 {
        out.push(Violation::NegativeA);
    }
    let right = p.right_factor(p.big_a.prec().max(p.big_b.prec()) + 1);
    if right < 0 {
        out.push(Violation::NegativeAPlusB);
    }
    if p.big_a.is_zero() && right.is_zero() {
        out.push(Violation::WeightIdenticallyZero);
    }
    if p.t < 0 {
        out.push(Violation::NegativeT);
    }
    out
}

pub(crate) fn require_valid(p: &WeightParams) -> Result<()> {
    let v = validate_params(p);
    if v.is_empty() {
        Ok(())
    } else {
        let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        Err(Error::invalid(format!("weight parameters violate: {}", list.join(", "))))
    }
}

/// `w(x, t)`, with `theta(0) = 0`.
pub fn weight_eval(x: &Float, p: &WeightParams, ctx: &PrecisionContext) -> Result<Float> {
    if *x < 0 {
        return Err(Error::invalid("weight evaluated at negative x"));
    }
    let bits = ctx.bits();
    let d = Float::with_val(bits, x - &p.t).abs();
    if d.is_zero() {
        return Ok(Float::with_val(bits, 0));
    }
    let xa = rules::powf(&Float::with_val(bits, x), &p.alpha);
    let dg = rules::powf(&d, &p.gamma);
    let e = Float::with_val(bits, -x).exp();
    let jump = if *x > p.t { p.right_factor(bits) } else { Float::with_val(bits, &p.big_a) };
    Ok(xa * dg * e * jump)
}

/// `v0'(x) = 1 - alpha/x`, continued off the support for `x < 0`.
pub fn v0_prime(x: &Float, p: &WeightParams, ctx: &PrecisionContext) -> Result<Float> {
    if x.is_zero() || x.is_nan() {
        return Err(Error::invalid("v0' has a pole at x = 0"));
    }
    let bits = ctx.bits();
    Ok(1 - Float::with_val(bits, &p.alpha / x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    Closed,
    Quadrature,
}

impl MomentMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentMethod::Closed => "closed",
            MomentMethod::Quadrature => "quadrature",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MomentTable {
    pub params: WeightParams,
    pub k_max: usize,
    pub mu: Vec<Float>,
    pub method: MomentMethod,
    pub digits: u32,
    pub err_est: Float,
}

impl MomentTable {
    /// Log-convexity `mu_k^2 <= mu_{k-1} mu_{k+1}` and positivity.
    pub fn is_log_convex(&self) -> bool {
        if self.mu.iter().any(|m| !(*m > 0)) {
            return false;
        }
        self.mu.windows(3).all(|w| {
            let p = w[1].prec();
            Float::with_val(p, &w[1] * &w[1]) <= Float::with_val(p, &w[0] * &w[2])
        })
    }

    /// Copy with `mu[index]` scaled by `1 + rel`.
    pub fn perturbed(&self, index: usize, rel: f64) -> MomentTable {
        let mut out = self.clone();
        if let Some(m) = out.mu.get_mut(index) {
            let p = m.prec();
            let f = Float::with_val(p, rel) + 1u32;
            *m *= f;
        }
        out
    }
}

/// Guard digits needed by the binomial expansion at `t`.
pub fn closed_form_guard_digits(p: &WeightParams, k_max: usize) -> u32 {
    let k = p.gamma_even().unwrap_or(0) as f64;
    let lt = p.t.to_f64().max(1.0).log10();
    ((2.0 * k + k_max as f64) * lt).ceil() as u32 + 10
}

/// Moments for `gamma = 2K` from the binomial expansion of `(x-t)^{2K}` and
/// incomplete gamma functions.
pub fn moments_closed(p: &WeightParams, k_max: usize, ctx: &PrecisionContext) -> Result<MomentTable> {
    require_valid(p)?;
    let kk = p
        .gamma_even()
        .ok_or_else(|| Error::invalid("closed-form moments need gamma = 2K for a positive integer K"))?;
    let inner = ctx.with_extra_digits(closed_form_guard_digits(p, k_max));
    let bits = inner.bits();
    let two_k = 2 * kk as usize;
    let a0 = Float::with_val(bits, &p.alpha + 1u32);
    let t = Float::with_val(bits, &p.t);
    let (lower, upper) = incomplete_gamma_ladder(&a0, &t, k_max + two_k + 1, &inner)?;
    let big_a = Float::with_val(bits, &p.big_a);
    let right = p.right_factor(bits);
    let neg_t = Float::with_val(bits, -&t);
    let mut mu = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut s = Float::with_val(bits, 0);
        for j in 0..=two_k {
            let binom = Integer::from(Integer::binomial_u(two_k as u32, j as u32));
            let pw = Float::with_val(bits, (&neg_t).pow((two_k - j) as u32));
            let inc = Float::with_val(bits, &big_a * &lower[k + j]) + Float::with_val(bits, &right * &upper[k + j]);
            s += Float::with_val(bits, pw * binom) * inc;
        }
        mu.push(Float::with_val(ctx.bits(), s));
    }
    Ok(MomentTable {
        params: p.clone(),
        k_max,
        mu,
        method: MomentMethod::Closed,
        digits: ctx.digits(),
        err_est: Float::with_val(ctx.bits(), ctx.eps() * 10u32),
    })
}

/// Moments by singularity-aware quadrature; any `gamma > 0`.
pub fn moments_quadrature(p: &WeightParams, k_max: usize, ctx: &PrecisionContext) -> Result<MomentTable> {
    require_valid(p)?;
    let bits = ctx.bits();
    let dim = k_max + 1;
    let mu = if p.t.is_zero() {
        // (A+B) int x^{k+alpha+gamma} e^{-x} by generalized Gauss-Laguerre, exact once 2m > k_max.
        let expo = Float::with_val(bits, &p.alpha + &p.gamma);
        let m = k_max / 2 + 2;
        let rule = rules::exp_tail(&expo, m, ctx)?;
        let right = p.right_factor(bits);
        let mut mu = vec![Float::with_val(bits, 0); dim];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let mut pw = Float::with_val(bits, w * &right);
            for m in mu.iter_mut() {
                *m += &pw;
                pw *= x;
            }
        }
        mu
    } else {
        let t = Float::with_val(bits, &p.t);
        let big_a = Float::with_val(bits, &p.big_a);
        let right = p.right_factor(bits);
        let factors = [
            Factor::new(Float::with_val(bits, 0), Float::with_val(bits, &p.alpha)),
            Factor::new(t.clone(), Float::with_val(bits, &p.gamma)),
        ];
        let g = |y: &Float, out: &mut [Float]| {
            let jump = if *y > t { &right } else { &big_a };
            let mut v = Float::with_val(bits, -y).exp() * jump;
            for o in out.iter_mut() {
                *o = v.clone();
                v *= y;
            }
        };
        integrate_factored(&g, dim, &Float::with_val(bits, 0), None, &factors, &[], 1.0, ctx)?
    };
    Ok(MomentTable {
        params: p.clone(),
        k_max,
        mu,
        method: MomentMethod::Quadrature,
        digits: ctx.digits(),
        err_est: Float::with_val(bits, ctx.eps() * 10u32),
    })
}

/// Closed form when `gamma` is an even integer, quadrature otherwise.
pub fn moments_auto(p: &WeightParams, k_max: usize, ctx: &PrecisionContext) -> Result<MomentTable> {
    if p.gamma_even().is_some() {
        moments_closed(p, k_max, ctx)
    } else {
        moments_quadrature(p, k_max, ctx)
    }
}

/// On-disk cache of moment tables, one JSON file per key.
#[derive(Clone, Debug)]
pub struct MomentCache {
    dir: PathBuf,
}

const CACHE_VERSION: &str = "moments-v1";

#[derive(Serialize, Deserialize)]
struct CachedParams {
    alpha: String,
    gamma: String,
    #[serde(rename = "A")]
    big_a: String,
    #[serde(rename = "B")]
    big_b: String,
    t: String,
}

#[derive(Serialize, Deserialize)]
struct CachedTable {
    version: String,
    key: String,
    params: CachedParams,
    k_max: usize,
    digits: u32,
    method: MomentMethod,
    err_est: String,
    mu: Vec<String>,
}

fn dec(v: &Float) -> String {
    v.to_string_radix(10, None)
}

impl MomentCache {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        MomentCache { dir: dir.as_ref().to_path_buf() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn key(p: &WeightParams, k_max: usize, digits: u32, method: MomentMethod) -> String {
        let mut h = Sha256::new();
        h.update(CACHE_VERSION.as_bytes());
        h.update(p.key().as_bytes());
        h.update(format!("|{k_max}|{digits}|{}", method.as_str()).as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, p: &WeightParams, k_max: usize, method: MomentMethod, ctx: &PrecisionContext) -> Option<MomentTable> {
        let key = Self::key(p, k_max, ctx.digits(), method);
        let text = fs::read_to_string(self.path(&key)).ok()?;
        let c: CachedTable = serde_json::from_str(&text).ok()?;
        if c.version != CACHE_VERSION || c.key != key || c.k_max != k_max || c.mu.len() != k_max + 1 {
            return None;
        }
        let bits = ctx.bits();
        let parse = |s: &str| Float::parse(s).ok().map(|v| Float::with_val(bits, v));
        let mu: Option<Vec<Float>> = c.mu.iter().map(|s| parse(s)).collect();
        Some(MomentTable {
            params: p.clone(),
            k_max,
            mu: mu?,
            method: c.method,
            digits: c.digits,
            err_est: parse(&c.err_est)?,
        })
    }

    /// Writes through a temporary file and an atomic rename.
    pub fn store(&self, m: &MomentTable) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let key = Self::key(&m.params, m.k_max, m.digits, m.method);
        let p = &m.params;
        let body = CachedTable {
            version: CACHE_VERSION.to_string(),
            key: key.clone(),
            params: CachedParams {
                alpha: dec(&p.alpha),
                gamma: dec(&p.gamma),
                big_a: dec(&p.big_a),
                big_b: dec(&p.big_b),
                t: dec(&p.t),
            },
            k_max: m.k_max,
            digits: m.digits,
            method: m.method,
            err_est: dec(&m.err_est),
            mu: m.mu.iter().map(dec).collect(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(serde_json::to_string(&body)?.as_bytes())?;
        tmp.flush()?;
        tmp.persist(self.path(&key)).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

/// Moment table through the cache when one is given.
pub fn moments_cached(
    p: &WeightParams,
    k_max: usize,
    method: MomentMethod,
    cache: Option<&MomentCache>,
    ctx: &PrecisionContext,
) -> Result<MomentTable> {
    if let Some(c) = cache {
        if let Some(m) = c.load(p, k_max, method, ctx) {
            return Ok(m);
        }
    }
    let m = match method {
        MomentMethod::Closed => moments_closed(p, k_max, ctx)?,
        MomentMethod::Quadrature => moments_quadrature(p, k_max, ctx)?,
    };
    if let Some(c) = cache {
        if let Err(e) = c.store(&m) {
            log::warn!("moment cache write failed: {e}");
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_context;

    fn rel(a: &Float, b: &Float) -> f64 {
        let d = Float::with_val(a.prec(), a - b).abs();
        (d / b).to_f64().abs()
    }

    #[test]
    fn validation() {
        assert!(validate_params(&WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0)).is_empty());
        assert_eq!(
            validate_params(&WeightParams::new(-0.5, 2.0, 1.0, 0.0, 1.0)),
            vec![Violation::AlphaNotPositive]
        );
        assert!(validate_params(&WeightParams::new(1.3, 2.0, 0.0, 0.0, 1.0)).contains(&Violation::WeightIdenticallyZero));
        assert!(validate_params(&WeightParams::new(1.3, 2.0, 1.0, -2.0, 1.0)).contains(&Violation::NegativeAPlusB));
    }

    #[test]
    fn weight_values() {
        let ctx = make_context(40).unwrap();
        let b = ctx.bits();
        let p = WeightParams::new(1.0, 1.0, 1.0, 0.0, 2.0);
        assert!(weight_eval(&ctx.num(2), &p, &ctx).unwrap().is_zero());
        let v = weight_eval(&ctx.num(1), &p, &ctx).unwrap();
        assert!(rel(&v, &Float::with_val(b, -1).exp()) < 1e-39);
        let q = WeightParams::new(1.0, 1.0, 1.0, 1.0, 2.0);
        let v = weight_eval(&ctx.num(3), &q, &ctx).unwrap();
        let e = Float::with_val(b, -3).exp() * 6u32;
        assert!(rel(&v, &e) < 1e-39);
        assert!(weight_eval(&ctx.num(-1), &q, &ctx).is_err());
    }

    #[test]
    fn v0_values() {
        let ctx = make_context(40).unwrap();
        let v = v0_prime(&ctx.num(2), &WeightParams::new(2.0, 1.0, 1.0, 0.0, 1.0), &ctx).unwrap();
        assert!(v.is_zero());
        let v = v0_prime(&ctx.num(0.5), &WeightParams::new(1.3, 1.0, 1.0, 0.0, 1.0), &ctx).unwrap();
        assert!(Float::with_val(ctx.bits(), v + 1.6).abs() < 1e-15);
        assert!(v0_prime(&ctx.num(0), &WeightParams::new(1.3, 1.0, 1.0, 0.0, 1.0), &ctx).is_err());
    }

    #[test]
    fn closed_at_zero_is_gamma() {
        let ctx = make_context(50).unwrap();
        let m = moments_closed(&WeightParams::new(1.0, 2.0, 1.0, 0.0, 0.0), 4, &ctx).unwrap();
        assert!(rel(&m.mu[0], &ctx.num(6)) < 1e-49);
        assert!(rel(&m.mu[2], &ctx.num(120)) < 1e-49);
    }

    #[test]
    fn quadrature_at_zero() {
        let ctx = make_context(50).unwrap();
        let m = moments_quadrature(&WeightParams::new(0.5, 0.5, 0.25, 0.75, 0.0), 3, &ctx).unwrap();
        assert!(rel(&m.mu[1], &ctx.num(2)) < 1e-48);
    }

    #[test]
    fn closed_matches_quadrature() {
        let ctx = make_context(60).unwrap();
        for (a, b) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let p = WeightParams::new(1.3, 2.0, a, b, 1.0);
            let c = moments_closed(&p, 8, &ctx).unwrap();
            let q = moments_quadrature(&p, 8, &ctx).unwrap();
            for k in 0..=8 {
                assert!(rel(&c.mu[k], &q.mu[k]) < 1e-45, "A={a} B={b} k={k}");
            }
            assert!(c.is_log_convex() && q.is_log_convex());
        }
    }

    #[test]
    fn closed_rejects_odd_gamma() {
        let ctx = make_context(40).unwrap();
        assert!(moments_closed(&WeightParams::new(1.3, 1.5, 1.0, 0.0, 1.0), 2, &ctx).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let ctx = make_context(40).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = MomentCache::new(dir.path());
        let p = WeightParams::new(1.3, 2.0, 1.0, 0.0, 1.0);
        let m = moments_cached(&p, 6, MomentMethod::Closed, Some(&cache), &ctx).unwrap();
        let back = cache.load(&p, 6, MomentMethod::Closed, &ctx).unwrap();
        assert_eq!(m.mu, back.mu);
    }
}
