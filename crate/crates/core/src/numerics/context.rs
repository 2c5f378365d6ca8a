use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::rules::{QuadratureRule, RuleKey};

/// Smallest supported working precision, in decimal digits.
pub const MIN_DIGITS: u32 = 30;

/// Binary guard bits carried on top of the nominal decimal precision.
pub const GUARD_BITS: u32 = 32;

const LOG2_10: f64 = std::f64::consts::LOG2_10;

/// Memo table for quadrature rules. Rules are pure functions of their key, so
/// sharing the table between clones of a context is safe.
#[derive(Default)]
pub(crate) struct RuleCache {
    rules: Mutex<HashMap<RuleKey, Arc<QuadratureRule>>>,
}

impl RuleCache {
    pub(crate) fn get_or_insert<F>(&self, key: RuleKey, build: F) -> Result<Arc<QuadratureRule>>
    where
        F: FnOnce() -> Result<QuadratureRule>,
    {
        if let Some(rule) = self.rules.lock().expect("rule cache poisoned").get(&key) {
            return Ok(rule.clone());
        }
        let rule = Arc::new(build()?);
        self.rules
            .lock()
            .expect("rule cache poisoned")
            .insert(key, rule.clone());
        Ok(rule)
    }
}

/// Decimal working precision threaded through every numerical operation.
///
/// `eps = 10^-digits` is the accuracy contract, `fd_step = 10^-floor(digits/3)`
/// the default central-difference step. Arithmetic is carried out with
/// [`GUARD_BITS`] extra binary digits so that roundoff sits below `eps`.
#[derive(Clone)]
pub struct PrecisionContext {
    digits: u32,
    bits: u32,
    eps: Float,
    fd_step: Float,
    rules: Arc<RuleCache>,
}

impl std::fmt::Debug for PrecisionContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrecisionContext")
            .field("digits", &self.digits)
            .field("bits", &self.bits)
            .finish()
    }
}

/// Builds a context for `digits` decimal digits.
pub fn make_context(digits: u32) -> Result<PrecisionContext> {
    PrecisionContext::new(digits)
}

impl PrecisionContext {
    pub fn new(digits: u32) -> Result<Self> {
        Self::with_cache(digits, Arc::new(RuleCache::default()))
    }

    fn with_cache(digits: u32, rules: Arc<RuleCache>) -> Result<Self> {
        if digits < MIN_DIGITS {
            return Err(Error::invalid(format!(
                "precision of {digits} digits is below the minimum of {MIN_DIGITS}"
            )));
        }
        let bits = bits_for_digits(digits);
        let eps = pow10(bits, -(digits as i32));
        let fd_step = pow10(bits, -((digits / 3) as i32));
        Ok(PrecisionContext { digits, bits, eps, fd_step, rules })
    }

    /// Same rule cache, different precision.
    pub fn at_digits(&self, digits: u32) -> Result<Self> {
        Self::with_cache(digits, self.rules.clone())
    }

    /// Adds `extra` decimal digits, sharing the rule cache.
    pub fn with_extra_digits(&self, extra: u32) -> Self {
        Self::with_cache(self.digits + extra, self.rules.clone())
            .expect("raising precision cannot violate the minimum")
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    /// Working precision in bits, guard bits included.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn eps(&self) -> &Float {
        &self.eps
    }

    pub fn fd_step(&self) -> &Float {
        &self.fd_step
    }

    /// `eps^(1/2)`, the certification threshold of several routines.
    pub fn sqrt_eps(&self) -> Float {
        pow10(self.bits, -((self.digits / 2) as i32))
    }

    /// A value rounded to the working precision.
    pub fn num<T>(&self, v: T) -> Float
    where
        Float: rug::Assign<T>,
    {
        Float::with_val(self.bits, v)
    }

    pub(crate) fn rules(&self) -> &RuleCache {
        &self.rules
    }
}

pub(crate) fn bits_for_digits(digits: u32) -> u32 {
    (digits as f64 * LOG2_10).ceil() as u32 + GUARD_BITS
}

/// `10^e` at `bits` precision.
pub fn pow10(bits: u32, e: i32) -> Float {
    let ten = Float::with_val(bits, 10);
    if e >= 0 {
        Float::with_val(bits, rug::ops::Pow::pow(&ten, e as u32))
    } else {
        let p = Float::with_val(bits, rug::ops::Pow::pow(&ten, (-e) as u32));
        Float::with_val(bits, 1) / p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_digits() {
        let ctx = make_context(100).unwrap();
        assert_eq!(*ctx.eps(), pow10(ctx.bits(), -100));
        assert_eq!(*ctx.fd_step(), pow10(ctx.bits(), -33));
    }

    #[test]
    fn thirty_digits() {
        let ctx = make_context(30).unwrap();
        assert_eq!(*ctx.eps(), pow10(ctx.bits(), -30));
        assert_eq!(*ctx.fd_step(), pow10(ctx.bits(), -10));
        let rel = Float::with_val(ctx.bits(), ctx.eps() * pow10(ctx.bits(), 30)) - 1u32;
        assert!(rel.abs() < 1e-35);
    }

    #[test]
    fn below_minimum_rejected() {
        assert!(matches!(make_context(10), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn guard_bits_cover_digits() {
        let ctx = make_context(150).unwrap();
        assert!(ctx.bits() as f64 >= 150.0 * LOG2_10 + 30.0);
    }
}
