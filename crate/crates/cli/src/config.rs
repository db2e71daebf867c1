//! Run configuration: flags merged over an optional `key = value` file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use elliptic_core::cartan_data::parse_label;
use elliptic_core::hopf_family::{
    parse_homomorphism_relation, AntipodeConvention, Axiom, ChargeReading,
};
use elliptic_core::lattice_series::{q_frac, q_text, Q};
use elliptic_core::relation_checker::Target;
use elliptic_core::theta_products::Relation;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// One requested check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckId {
    Exchange(Relation),
    HConsistency,
    EfSupports,
    Ef,
    Serre,
    Axiom(Axiom),
    TauLaws,
    TauStructure,
    Homomorphism(Relation),
    Iterated(usize),
    Fock(Relation),
    Scaling,
}

impl CheckId {
    /// The calibration target this check belongs to, if it is a relation
    /// of the bosonized algebra.
    pub fn target(self) -> Option<Target> {
        match self {
            CheckId::Exchange(r) => Some(Target::Exchange(r)),
            CheckId::HConsistency => Some(Target::HConsistency),
            CheckId::EfSupports => Some(Target::EfSupports),
            CheckId::Ef => Some(Target::EfCommutator),
            CheckId::Serre => Some(Target::Serre),
            _ => None,
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckId::Exchange(r) => write!(f, "{r}"),
            CheckId::HConsistency => f.write_str("HC"),
            CheckId::EfSupports => f.write_str("EF-supports"),
            CheckId::Ef => f.write_str("EF"),
            CheckId::Serre => f.write_str("Serre"),
            CheckId::Axiom(a) => f.write_str(a.name()),
            CheckId::TauLaws => f.write_str("tau"),
            CheckId::TauStructure => f.write_str("tau-structure"),
            CheckId::Homomorphism(r) => write!(f, "hom:{r}"),
            CheckId::Iterated(m) => write!(f, "iter:{m}"),
            CheckId::Fock(r) => write!(f, "fock:{r}"),
            CheckId::Scaling => f.write_str("scaling"),
        }
    }
}

impl Serialize for CheckId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

fn relation(s: &str) -> Result<Relation, ConfigError> {
    Relation::parse(s).ok_or_else(|| invalid(format!("unknown relation `{s}`")))
}

impl FromStr for CheckId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((head, arg)) = s.split_once(':') {
            return match head {
                "hom" => parse_homomorphism_relation(arg)
                    .map(CheckId::Homomorphism)
                    .map_err(|e| invalid(e.to_string())),
                "fock" => relation(arg).map(CheckId::Fock),
                "iter" => match arg.parse::<usize>() {
                    Ok(m @ 1..=4) => Ok(CheckId::Iterated(m)),
                    _ => Err(invalid(format!(
                        "iterated coproduct order `{arg}` outside 1..=4"
                    ))),
                },
                _ => Err(invalid(format!("unknown check `{s}`"))),
            };
        }
        match s {
            "HC" | "H-consistency" => Ok(CheckId::HConsistency),
            "EF-supports" => Ok(CheckId::EfSupports),
            "EF" => Ok(CheckId::Ef),
            "Serre" => Ok(CheckId::Serre),
            "tau" => Ok(CheckId::TauLaws),
            "tau-structure" => Ok(CheckId::TauStructure),
            "scaling" => Ok(CheckId::Scaling),
            _ => {
                if let Ok(a) = s.parse::<Axiom>() {
                    return Ok(CheckId::Axiom(a));
                }
                relation(s)
                    .map(CheckId::Exchange)
                    .map_err(|_| invalid(format!("unknown check `{s}`")))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
}

impl FromStr for Format {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            _ => Err(invalid(format!("unknown format `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxChoice {
    /// Quarter-lattice shifts and the zero-mode scale.
    #[default]
    Default,
    /// Also lets the H factor shifts vary.
    WithHShifts,
}

impl FromStr for BoxChoice {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(BoxChoice::Default),
            "with-h-shifts" => Ok(BoxChoice::WithHShifts),
            _ => Err(invalid(format!("unknown calibration box `{s}`"))),
        }
    }
}

/// An oracle parameter point; `p` and `q` are fourth powers of `a` and `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub a: Q,
    pub b: Q,
}

impl Serialize for Sample {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let p = q_text(&self.a.pow(4));
        let q = q_text(&self.b.pow(4));
        s.serialize_str(&format!("{p}:{q}"))
    }
}

fn fourth_root(n: i64) -> Option<i64> {
    let r = (n as f64).powf(0.25).round() as i64;
    (r.checked_pow(4) == Some(n)).then_some(r)
}

fn parse_fourth_power(s: &str) -> Result<Q, ConfigError> {
    let bad = || {
        invalid(format!(
            "sample value `{s}` must be a positive rational fourth power below 1"
        ))
    };
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (
            n.trim().parse::<i64>().map_err(|_| bad())?,
            d.trim().parse::<i64>().map_err(|_| bad())?,
        ),
        None => (s.trim().parse::<i64>().map_err(|_| bad())?, 1),
    };
    if n <= 0 || d <= 0 || n >= d {
        return Err(bad());
    }
    match (fourth_root(n), fourth_root(d)) {
        (Some(a), Some(b)) => Ok(q_frac(a, b)),
        _ => Err(bad()),
    }
}

impl FromStr for Sample {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (p, q) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("sample `{s}` must read p:q")))?;
        Ok(Sample {
            a: parse_fourth_power(p)?,
            b: parse_fourth_power(q)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub algebra: String,
    #[serde(rename = "Kx")]
    pub kx: i32,
    #[serde(rename = "Knome")]
    pub knome: i64,
    pub checks: Vec<CheckId>,
    /// Restricts node pairs for checks that iterate over them.
    pub nodes: Option<(usize, usize)>,
    pub cocycle: bool,
    pub antipode_convention: AntipodeConvention,
    pub charge_reading: ChargeReading,
    pub charges: [i32; 2],
    pub calibrate: bool,
    pub calibration_box: BoxChoice,
    pub samples: Vec<Sample>,
    /// Fock space cutoff `N`.
    pub cutoff: u32,
    pub timing: bool,
    #[serde(skip)]
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algebra: "A2".into(),
            kx: 3,
            knome: 4,
            checks: vec![],
            nodes: None,
            cocycle: false,
            antipode_convention: AntipodeConvention::default(),
            charge_reading: ChargeReading::default(),
            charges: [1, 1],
            calibrate: false,
            calibration_box: BoxChoice::default(),
            samples: vec![Sample {
                a: q_frac(1, 2),
                b: q_frac(1, 3),
            }],
            cutoff: 6,
            timing: false,
            format: Format::default(),
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| invalid(format!("bad value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!("bad value `{v}` for `{key}`"))),
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn pair<T: FromStr>(key: &str, v: &str) -> Result<(T, T), ConfigError> {
    let items: Vec<&str> = list(v).collect();
    match items.as_slice() {
        [a, b] => Ok((parse(key, a)?, parse(key, b)?)),
        _ => Err(invalid(format!("`{key}` takes two comma-separated values"))),
    }
}

impl RunConfig {
    /// Applies one setting; file keys and long flag names coincide.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "algebra" => self.algebra = value.trim().to_string(),
            "Kx" => self.kx = parse(key, value)?,
            "Knome" => self.knome = parse(key, value)?,
            "check" => self.checks = list(value).map(str::parse).collect::<Result<_, _>>()?,
            "nodes" => self.nodes = Some(pair(key, value)?),
            "cocycle" => self.cocycle = parse_bool(key, value)?,
            "antipode-convention" => {
                self.antipode_convention = value.trim().parse().map_err(invalid)?
            }
            "charge-reading" => self.charge_reading = value.trim().parse().map_err(invalid)?,
            "charges" => {
                let (a, b) = pair(key, value)?;
                self.charges = [a, b];
            }
            "calibrate" => self.calibrate = parse_bool(key, value)?,
            "calibration-box" => self.calibration_box = value.trim().parse()?,
            "samples" => self.samples = list(value).map(str::parse).collect::<Result<_, _>>()?,
            "cutoff" => self.cutoff = parse(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "format" => self.format = value.trim().parse()?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(k + 1))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Checks that do not depend on other settings.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let cartan = parse_label(&self.algebra).map_err(|e| invalid(e.to_string()))?;
        if self.kx < 1 || self.knome < 1 {
            return Err(invalid("Kx and Knome must be at least 1"));
        }
        if let Some((i, j)) = self.nodes {
            if i >= cartan.rank || j >= cartan.rank {
                return Err(invalid(format!(
                    "nodes ({i},{j}) outside {}",
                    cartan.label()
                )));
            }
        }
        if self.charges.iter().any(|&c| c < 1) {
            return Err(invalid("charges must be positive integers"));
        }
        if self.samples.is_empty() && self.checks.iter().any(|c| matches!(c, CheckId::Fock(_))) {
            return Err(invalid("oracle checks need at least one sample"));
        }
        if self.cutoff < 3 {
            return Err(invalid("cutoff must be at least 3"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_ids_round_trip() {
        for s in [
            "EE",
            "H+H-",
            "HC",
            "EF",
            "EF-supports",
            "Serre",
            "a1",
            "a3",
            "tau",
            "tau-structure",
            "hom:H+H+",
            "iter:2",
            "fock:FF",
            "scaling",
        ] {
            assert_eq!(s.parse::<CheckId>().unwrap().to_string(), s);
        }
        assert!("hom:EF".parse::<CheckId>().is_err());
        assert!("iter:9".parse::<CheckId>().is_err());
        assert!("XY".parse::<CheckId>().is_err());
    }

    #[test]
    fn file_settings_and_errors() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nalgebra = A1\ncheck = EE, a1\nKx=2\ncharges = 2,1\n")
            .unwrap();
        assert_eq!(c.algebra, "A1");
        assert_eq!(
            c.checks,
            vec![CheckId::Exchange(Relation::EE), CheckId::Axiom(Axiom::A1)]
        );
        assert_eq!((c.kx, c.charges), (2, [2, 1]));
        assert!(matches!(
            RunConfig::default().apply_text("colour = red"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::default().apply_text("algebra A1"),
            Err(ConfigError::Syntax(1))
        ));
    }

    #[test]
    fn samples_need_fourth_powers() {
        let s: Sample = "1/16:1/81".parse().unwrap();
        assert_eq!((s.a, s.b), (q_frac(1, 2), q_frac(1, 3)));
        assert!("1/11:1/7".parse::<Sample>().is_err());
        assert!("2:1/16".parse::<Sample>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig {
            algebra: "Z9".into(),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.algebra = "A2".into();
        c.nodes = Some((0, 2));
        assert!(c.validate().is_err());
    }
}
