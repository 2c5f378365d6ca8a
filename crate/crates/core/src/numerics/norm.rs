use rug::Float;

/// Size of an identity's defect: `abs = |sum of terms|`, `rel = abs / max|term|`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Residual {
    pub abs: f64,
    pub rel: f64,
}

impl Residual {
    pub fn zero() -> Self {
        Residual { abs: 0.0, rel: 0.0 }
    }

    pub fn worst(self, other: Residual) -> Residual {
        if other.rel > self.rel || other.rel.is_nan() {
            other
        } else {
            self
        }
    }
}

/// Residual of `sum(terms) = 0`.
pub fn residual_of(terms: &[Float]) -> Residual {
    let bits = terms.iter().map(|t| t.prec()).max().unwrap_or(64);
    let mut sum = Float::with_val(bits, 0);
    let mut scale = Float::with_val(bits, 0);
    for t in terms {
        sum += t;
        let a = Float::with_val(bits, t.abs_ref());
        if a > scale {
            scale = a;
        }
    }
    let abs = Float::with_val(bits, sum.abs_ref());
    let rel = if scale.is_zero() { Float::with_val(bits, 0) } else { Float::with_val(bits, &abs / &scale) };
    Residual { abs: abs.to_f64(), rel: rel.to_f64() }
}
