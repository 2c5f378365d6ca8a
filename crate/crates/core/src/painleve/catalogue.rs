use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IdentityId {
    S12,
    S13,
    S21,
    S22,
    S24,
    S31,
    S32,
    S33,
    S34,
    D1,
    D11,
    D2,
    Minus,
    D12,
    Expre,
    Exbe,
    Hntex,
    Beta,
    Rn,
    Rnt,
    Betan,
    Rnbe,
    Rh1,
    Rh2,
    Ri1,
    Ri2,
    OdeR,
    PvS,
    SigmaJmo,
    Hd,
    Hnd,
    SigmaDiscrete,
    Td1,
    Td2,
    IntRep,
}

/// How many finite-difference derivatives feed an identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceClass {
    Algebraic,
    FirstDerivative,
    SecondDerivative,
}

impl ToleranceClass {
    /// `10^{-digits/2}`, `10^{-digits/3}` or `10^{-digits/4}`.
    pub fn tolerance(self, digits: u32) -> f64 {
        let div = match self {
            ToleranceClass::Algebraic => 2.0,
            ToleranceClass::FirstDerivative => 3.0,
            ToleranceClass::SecondDerivative => 4.0,
        };
        10f64.powf(-(digits as f64) / div)
    }
}

impl IdentityId {
    pub const ALL: [IdentityId; 35] = [
        IdentityId::S12,
        IdentityId::S13,
        IdentityId::S21,
        IdentityId::S22,
        IdentityId::S24,
        IdentityId::S31,
        IdentityId::S32,
        IdentityId::S33,
        IdentityId::S34,
        IdentityId::D1,
        IdentityId::D11,
        IdentityId::D2,
        IdentityId::Minus,
        IdentityId::D12,
        IdentityId::Expre,
        IdentityId::Exbe,
        IdentityId::Hntex,
        IdentityId::Beta,
        IdentityId::Rn,
        IdentityId::Rnt,
        IdentityId::Betan,
        IdentityId::Rnbe,
        IdentityId::Rh1,
        IdentityId::Rh2,
        IdentityId::Ri1,
        IdentityId::Ri2,
        IdentityId::OdeR,
        IdentityId::PvS,
        IdentityId::SigmaJmo,
        IdentityId::Hd,
        IdentityId::Hnd,
        IdentityId::SigmaDiscrete,
        IdentityId::Td1,
        IdentityId::Td2,
        IdentityId::IntRep,
    ];

    pub fn as_str(self) -> &'static str {
        use IdentityId::*;
        match self {
            S12 => "s12",
            S13 => "s13",
            S21 => "s21",
            S22 => "s22",
            S24 => "s24",
            S31 => "s31",
            S32 => "s32",
            S33 => "s33",
            S34 => "s34",
            D1 => "d1",
            D11 => "d11",
            D2 => "d2",
            Minus => "minus",
            D12 => "d12",
            Expre => "expre",
            Exbe => "exbe",
            Hntex => "hntex",
            Beta => "beta",
            Rn => "rn",
            Rnt => "rnt",
            Betan => "betan",
            Rnbe => "rnbe",
            Rh1 => "rh1",
            Rh2 => "rh2",
            Ri1 => "ri1",
            Ri2 => "ri2",
            OdeR => "ode_R",
            PvS => "pv_S",
            SigmaJmo => "sigma_jmo",
            Hd => "hd",
            Hnd => "hnd",
            SigmaDiscrete => "sigma_discrete",
            Td1 => "td1",
            Td2 => "td2",
            IntRep => "int_rep",
        }
    }

    pub fn class(self) -> ToleranceClass {
        use IdentityId::*;
        match self {
            S12 | S13 | S21 | S22 | S24 | S31 | S32 | S33 | S34 | Expre | Exbe | Rnt | Betan | Hnd | SigmaDiscrete => {
                ToleranceClass::Algebraic
            }
            D1 | D11 | D2 | Minus | D12 | Hntex | Beta | Rn | Rnbe | Rh1 | Rh2 | Ri1 | Ri2 | Td1 | Td2 => {
                ToleranceClass::FirstDerivative
            }
            OdeR | PvS | SigmaJmo | Hd | IntRep => ToleranceClass::SecondDerivative,
        }
    }

    /// Whether the identity involves index `n - 1`.
    pub fn needs_previous(self) -> bool {
        use IdentityId::*;
        matches!(
            self,
            S22 | S24 | S32 | S33 | S34 | D11 | Minus | Rnt | Betan | Rh2 | Hnd | SigmaDiscrete | Td1 | Td2
        )
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IdentityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        IdentityId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
    }
}

/// Default tolerances by class, with per-id overrides. Overrides may also
/// name the ladder families.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToleranceLadder {
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

impl ToleranceLadder {
    pub fn with_override(mut self, id: &str, tol: f64) -> Self {
        self.overrides.insert(id.to_string(), tol);
        self
    }

    pub fn tolerance(&self, id: IdentityId, digits: u32) -> f64 {
        self.overrides
            .get(id.as_str())
            .copied()
            .unwrap_or_else(|| id.class().tolerance(digits))
    }

    pub fn lookup(&self, name: &str) -> Option<f64> {
        self.overrides.get(name).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for id in IdentityId::ALL {
            assert_eq!(id.as_str().parse::<IdentityId>().unwrap(), id);
        }
        assert!(matches!("s11".parse::<IdentityId>(), Err(Error::UnknownIdentity(_))));
        let mut names: Vec<&str> = IdentityId::ALL.iter().map(|i| i.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 35);
    }

    #[test]
    fn ladder_defaults_and_overrides() {
        let l = ToleranceLadder::default().with_override("td1", 1e-5);
        assert_eq!(l.tolerance(IdentityId::Td1, 150), 1e-5);
        assert!((l.tolerance(IdentityId::S24, 150) / 1e-75 - 1.0).abs() < 1e-9);
        assert!((l.tolerance(IdentityId::SigmaJmo, 120) / 1e-30 - 1.0).abs() < 1e-9);
    }
}
