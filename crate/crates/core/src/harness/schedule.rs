//! Learning-rate and clipping schedules as pure functions of the step index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Learning-rate rule `α_t`, `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schedule {
    /// `α`
    Constant(f64),
    /// `α / √t`
    InvSqrt(f64),
    /// `α / √(1 + a·t)`
    ToyDecay(f64, f64),
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let (alpha, a) = match *self {
            Schedule::Constant(alpha) | Schedule::InvSqrt(alpha) => (alpha, 0.0),
            Schedule::ToyDecay(alpha, a) => (alpha, a),
        };
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LabError::config("schedule", format!("α = {alpha} must be positive and finite")));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(LabError::config("schedule", format!("a = {a} must be nonnegative")));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Schedule::Constant(alpha) | Schedule::InvSqrt(alpha) | Schedule::ToyDecay(alpha, _) => alpha,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Schedule {
        match self {
            Schedule::Constant(_) => Schedule::Constant(alpha),
            Schedule::InvSqrt(_) => Schedule::InvSqrt(alpha),
            Schedule::ToyDecay(_, a) => Schedule::ToyDecay(alpha, a),
        }
    }
}

/// Evaluate `α_t`.
pub fn lr_at(schedule: &Schedule, t: u64) -> f64 {
    debug_assert!(t >= 1, "schedules are indexed from 1");
    let t = t as f64;
    match *schedule {
        Schedule::Constant(alpha) => alpha,
        Schedule::InvSqrt(alpha) => alpha / t.sqrt(),
        Schedule::ToyDecay(alpha, a) => alpha / (1.0 + a * t).sqrt(),
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(alpha) => write!(f, "const:{alpha}"),
            Schedule::InvSqrt(alpha) => write!(f, "invsqrt:{alpha}"),
            Schedule::ToyDecay(alpha, a) => write!(f, "toy:{alpha},{a}"),
        }
    }
}

fn parse_number(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| LabError::config(field, format!("`{s}` is not a number")))
}

impl FromStr for Schedule {
    type Err = LabError;

    /// `const:<α>`, `invsqrt:<α>` or `toy:<α>,<a>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let schedule = match kind {
            "const" | "constant" => Schedule::Constant(parse_number("schedule", args)?),
            "invsqrt" => Schedule::InvSqrt(parse_number("schedule", args)?),
            "toy" => {
                let (alpha, a) = args
                    .split_once(',')
                    .ok_or_else(|| LabError::config("schedule", "toy schedule needs `toy:<α>,<a>`"))?;
                Schedule::ToyDecay(parse_number("schedule", alpha)?, parse_number("schedule", a)?)
            }
            _ => return Err(LabError::UnknownName { kind: "schedule", name: s.to_string() }),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl TryFrom<String> for Schedule {
    type Error = LabError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> String {
        s.to_string()
    }
}

/// Clipping bound `c_t` for clipped ADOPT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClipSchedule {
    NoClip,
    Constant(f64),
    /// `c · t^{1/4}`
    PowerQuarter(f64),
}

impl Default for ClipSchedule {
    fn default() -> Self {
        ClipSchedule::PowerQuarter(1.0)
    }
}

pub fn clip_at(schedule: &ClipSchedule, t: u64) -> f64 {
    debug_assert!(t >= 1, "schedules are indexed from 1");
    match *schedule {
        ClipSchedule::NoClip => f64::INFINITY,
        ClipSchedule::Constant(c) => c,
        ClipSchedule::PowerQuarter(c) => c * (t as f64).sqrt().sqrt(),
    }
}

impl fmt::Display for ClipSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClipSchedule::NoClip => f.write_str("none"),
            ClipSchedule::Constant(c) => write!(f, "const:{c}"),
            ClipSchedule::PowerQuarter(c) => write!(f, "quarter:{c}"),
        }
    }
}

impl FromStr for ClipSchedule {
    type Err = LabError;

    /// `none`, `const:<c>` or `quarter:<c>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let clip = match kind {
            "none" => return Ok(ClipSchedule::NoClip),
            "const" | "constant" => ClipSchedule::Constant(parse_number("clip", args)?),
            "quarter" => ClipSchedule::PowerQuarter(parse_number("clip", args)?),
            _ => return Err(LabError::UnknownName { kind: "clip schedule", name: s.to_string() }),
        };
        match clip {
            ClipSchedule::Constant(c) | ClipSchedule::PowerQuarter(c) if !(c > 0.0 && c.is_finite()) => {
                Err(LabError::config("clip", format!("c = {c} must be positive")))
            }
            _ => Ok(clip),
        }
    }
}

impl TryFrom<String> for ClipSchedule {
    type Error = LabError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ClipSchedule> for String {
    fn from(s: ClipSchedule) -> String {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lr_examples() {
        let toy = Schedule::ToyDecay(0.01, 0.01);
        assert!((lr_at(&toy, 1) - 0.01 / 1.01f64.sqrt()).abs() < 1e-18);
        assert!((lr_at(&toy, 1) - 0.0099504).abs() < 1e-7);
        assert_eq!(lr_at(&Schedule::Constant(0.1), 12345), 0.1);
        assert_eq!(lr_at(&Schedule::InvSqrt(1.0), 4), 0.5);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_at(&ClipSchedule::PowerQuarter(1.0), 16), 2.0);
        assert_eq!(clip_at(&ClipSchedule::PowerQuarter(1.0), 1), 1.0);
        assert_eq!(clip_at(&ClipSchedule::Constant(3.0), 77), 3.0);
        assert_eq!(clip_at(&ClipSchedule::NoClip, 5), f64::INFINITY);
    }

    #[test]
    fn string_forms_round_trip() {
        for s in ["const:0.1", "invsqrt:1", "toy:0.01,0.01"] {
            assert_eq!(s.parse::<Schedule>().unwrap().to_string(), s);
        }
        for s in ["none", "const:3", "quarter:1"] {
            assert_eq!(s.parse::<ClipSchedule>().unwrap().to_string(), s);
        }
        assert!("const:-1".parse::<Schedule>().is_err());
        assert!("cosine:1".parse::<Schedule>().is_err());
        assert!("quarter:0".parse::<ClipSchedule>().is_err());
    }

    proptest! {
        #[test]
        fn schedules_stay_positive(t in 1u64..=1_000_000_000, alpha in 1e-6f64..10.0, a in 0.0f64..1.0) {
            for s in [Schedule::Constant(alpha), Schedule::InvSqrt(alpha), Schedule::ToyDecay(alpha, a)] {
                let lr = lr_at(&s, t);
                prop_assert!(lr > 0.0 && lr.is_finite());
            }
        }
    }
}
