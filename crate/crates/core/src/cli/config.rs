use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ladder::LADDER_FAMILIES;
use crate::painleve::IdentityId;
use crate::weight::{validate_params, WeightParams};

pub const SCHEMA_VERSION: u32 = 1;
pub const CACHE_ENV: &str = "PHL_CACHE_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Table,
    Verify,
    Ode,
    Edge,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Table => "table",
            Command::Verify => "verify",
            Command::Ode => "ode",
            Command::Edge => "edge",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default = "linear")]
    pub spacing: Spacing,
}

fn linear() -> Spacing {
    Spacing::Linear
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.start < self.stop) {
            return Err(Error::Config(format!("grid needs start < stop, got {}:{}", self.start, self.stop)));
        }
        if self.count < 2 {
            return Err(Error::Config("grid needs count >= 2".into()));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0) {
            return Err(Error::Config("log grid needs start > 0".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let m = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == 0 {
                    return self.start;
                }
                if i + 1 == self.count {
                    return self.stop;
                }
                let f = i as f64 / m;
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * f,
                    Spacing::Log => (self.start.ln() + (self.stop.ln() - self.start.ln()) * f).exp(),
                }
            })
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `start:stop:count[:log|:linear]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(Error::Config(format!("grid spec `{s}` is not start:stop:count[:log]")));
        }
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{x}` in grid spec")));
        let count = parts[2].trim().parse::<usize>().map_err(|_| Error::Config(format!("bad count `{}`", parts[2])))?;
        let spacing = match parts.get(3).map(|x| x.trim()) {
            None | Some("linear") => Spacing::Linear,
            Some("log") => Spacing::Log,
            Some(o) => return Err(Error::Config(format!("unknown spacing `{o}`"))),
        };
        let g = GridSpec { start: num(parts[0])?, stop: num(parts[1])?, count, spacing };
        g.validate()?;
        Ok(g)
    }
}

/// A single value or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    One(f64),
    Many(Vec<f64>),
}

impl Values {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::One(v) => vec![*v],
            Values::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Digits {
    Auto,
    Fixed(u32),
}

impl Default for Digits {
    fn default() -> Self {
        Digits::Auto
    }
}

impl fmt::Display for Digits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Digits::Auto => f.write_str("auto"),
            Digits::Fixed(d) => write!(f, "{d}"),
        }
    }
}

impl FromStr for Digits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Digits::Auto);
        }
        s.parse::<u32>().map(Digits::Fixed).map_err(|_| Error::Config(format!("digits must be `auto` or an integer, got `{s}`")))
    }
}

impl Serialize for Digits {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Digits::Auto => s.serialize_str("auto"),
            Digits::Fixed(d) => s.serialize_u32(*d),
        }
    }
}

impl<'de> Deserialize<'de> for Digits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u32),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Digits::Fixed(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn d_alpha() -> f64 {
    1.3
}
fn d_gamma() -> f64 {
    2.0
}
fn d_a() -> f64 {
    1.0
}
fn d_out() -> String {
    "phl-out".into()
}

/// One run of the front end. JSON keys are the field names; command-line
/// flags use the same names with `-` for `_`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(rename = "A", default = "d_a")]
    pub big_a: f64,
    #[serde(rename = "B", default)]
    pub big_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Values>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default)]
    pub digits: Digits,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol_override: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
    /// Ladder evaluation points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zs: Option<Vec<f64>>,
    #[serde(default = "d_out")]
    pub out_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<String>,
    #[serde(default)]
    pub emit_plots: bool,
    #[serde(default)]
    pub full_precision: bool,
    /// `(k, rel)`: scale moment `mu_k` by `1 + rel` before building.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_moment: Option<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            alpha: d_alpha(),
            gamma: d_gamma(),
            big_a: d_a(),
            big_b: 0.0,
            t: None,
            t_grid: None,
            n_max: None,
            n_list: None,
            digits: Digits::Auto,
            tol_override: BTreeMap::new(),
            ids: None,
            zs: None,
            out_dir: d_out(),
            cache_dir: None,
            emit_plots: false,
            full_precision: false,
            perturb_moment: None,
            n: None,
            t0: None,
            t1: None,
            points: None,
            tol: None,
            s_grid: None,
            s_min: None,
            s_max: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn params(&self, t: f64) -> WeightParams {
        WeightParams::new(self.alpha, self.gamma, self.big_a, self.big_b, t)
    }

    /// Parameters read as decimals (shortest representation of each double)
    /// at `bits` of precision.
    pub fn params_at(&self, t: f64, bits: u32) -> WeightParams {
        let d = |v: f64| format!("{v}");
        WeightParams::from_decimal(&d(self.alpha), &d(self.gamma), &d(self.big_a), &d(self.big_b), &d(t), bits)
            .expect("finite doubles print as decimals")
    }

    pub fn t_values(&self) -> Vec<f64> {
        match (&self.t_grid, &self.t) {
            (Some(g), _) => g.points(),
            (None, Some(v)) => v.to_vec(),
            (None, None) => vec![1.0],
        }
    }

    /// `n_list` if given, else `1..=n_max` (`0..=n_max` for tables).
    pub fn n_values(&self) -> Vec<usize> {
        if let Some(l) = &self.n_list {
            return l.clone();
        }
        let hi = self.n_max.unwrap_or(5);
        let lo = if self.command == Command::Table { 0 } else { 1 };
        (lo..=hi).collect()
    }

    /// Digits for the run; `auto` grows with the largest degree.
    pub fn resolved_digits(&self) -> u32 {
        match self.digits {
            Digits::Fixed(d) => d,
            Digits::Auto => match self.command {
                Command::Table | Command::Verify => {
                    let n = self.n_values().into_iter().max().unwrap_or(0) as u32;
                    60 + 4 * n
                }
                Command::Ode => 50,
                Command::Edge => 40,
            },
        }
    }

    pub fn cache_path(&self) -> Option<PathBuf> {
        self.cache_dir.clone().or_else(|| std::env::var(CACHE_ENV).ok()).filter(|s| !s.is_empty()).map(PathBuf::from)
    }

    pub fn validate(&self) -> Result<()> {
        let v = validate_params(&self.params(self.t_values().first().copied().unwrap_or(1.0)));
        if !v.is_empty() {
            let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err(Error::Config(format!("weight parameters violate: {}", list.join(", "))));
        }
        if let Some(g) = &self.t_grid {
            g.validate()?;
        }
        if self.t_values().iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("t values must be finite and >= 0".into()));
        }
        if let Digits::Fixed(d) = self.digits {
            if d < crate::numerics::MIN_DIGITS {
                return Err(Error::Config(format!("digits must be at least {}", crate::numerics::MIN_DIGITS)));
            }
        }
        if let Some(ids) = &self.ids {
            for id in ids {
                if id.parse::<IdentityId>().is_err() && filter_family(id).is_none() {
                    return Err(Error::UnknownIdentity(id.clone()));
                }
            }
        }
        for (k, v) in &self.tol_override {
            if k.parse::<IdentityId>().is_err() && filter_family(k).is_none() {
                return Err(Error::UnknownIdentity(k.clone()));
            }
            if !(*v > 0.0) {
                return Err(Error::Config(format!("tolerance override for {k} must be positive")));
            }
        }
        match self.command {
            Command::Ode => {
                let (t0, t1) = (self.t0.unwrap_or(0.01), self.t1.unwrap_or(3.0));
                if !(t0 > 0.0) || t1 < t0 {
                    return Err(Error::Config("ode span needs 0 < t0 <= t1".into()));
                }
                if self.points.map_or(false, |p| p < 2) {
                    return Err(Error::Config("ode needs at least 2 output points".into()));
                }
            }
            Command::Edge => {
                let ns = self.edge_n_list();
                if ns.len() < 2 {
                    return Err(Error::Config("edge needs at least two values in n_list".into()));
                }
                if self.edge_s_grid().is_empty() {
                    return Err(Error::Config("edge needs a non-empty s_grid".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn edge_n_list(&self) -> Vec<usize> {
        self.n_list.clone().unwrap_or_else(|| vec![32, 64, 128])
    }

    pub fn edge_s_grid(&self) -> Vec<f64> {
        self.s_grid.clone().unwrap_or_else(|| vec![-0.5, 0.0, 0.5, 1.0, 2.0, 6.0])
    }
}

/// Ladder family named by a filter entry: a family name or a row name.
pub fn filter_family(name: &str) -> Option<&'static str> {
    let base = name.split('[').next().unwrap_or(name);
    let fam = match base {
        "eq1" | "eq2" => "prop",
        "S1" | "S2" | "S2prime" => "compat",
        other => other,
    };
    LADDER_FAMILIES.iter().copied().find(|f| *f == fam)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_from_flag() {
        let g: GridSpec = "0.5:2:4:log".parse().unwrap();
        assert_eq!(g.spacing, Spacing::Log);
        let p = g.points();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0], 0.5);
        assert_eq!(p[3], 2.0);
        assert!((p[1] - 0.7937005259840998).abs() < 1e-14);
        assert!("2:1:3".parse::<GridSpec>().is_err());
        assert!("0:1:1".parse::<GridSpec>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"command":"verify","alpha":1.3,"gamma":1.5,"A":1,"B":1,"t":[0.3,1.0,2.5],
            "n_max":5,"digits":"auto","tol_override":{"s12":1e-10},"ids":["s12","lowering"]}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(c.tol_override["s12"], 1e-10);
        assert_eq!(c.n_values(), vec![1, 2, 3, 4, 5]);
        c.validate().unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_ids_and_fields_rejected() {
        let mut c = RunConfig::new(Command::Verify);
        c.ids = Some(vec!["no_such".into()]);
        assert!(matches!(c.validate(), Err(Error::UnknownIdentity(_))));
        assert!(RunConfig::from_json(r#"{"command":"table","bogus":1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"command":"table","digits":"lots"}"#).is_err());
    }

    #[test]
    fn families_from_row_names() {
        assert_eq!(filter_family("S2prime"), Some("compat"));
        assert_eq!(filter_family("lowering[z=-1]"), Some("lowering"));
        assert_eq!(filter_family("expansion"), Some("expansion"));
        assert_eq!(filter_family("s12"), None);
    }
}
