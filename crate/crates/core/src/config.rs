//! Run configuration: flat `key = value` files with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::adaptive::AdaptiveConfig;
use crate::coupling::DataMethod;
use crate::error::{Error, Result};

/// Problems with built-in data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Problem {
    #[default]
    Zshape,
}

impl Problem {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Zshape => "zshape",
        }
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zshape" => Ok(Self::Zshape),
            _ => Err(Error::Config(format!("problem: unknown problem '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub theta: f64,
    pub p: usize,
    pub q_bem: usize,
    pub data: DataMethod,
    pub n_max: usize,
    pub max_levels: usize,
    pub out: PathBuf,
    pub dump_mesh: bool,
    pub dump_indicators: bool,
    pub record_timing: bool,
    /// Wall-time budget in seconds; `None` means unlimited.
    pub budget_seconds: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Zshape,
            theta: 0.25,
            p: 1,
            q_bem: 0,
            data: DataMethod::Nodal,
            n_max: 20000,
            max_levels: 100,
            out: PathBuf::from("out"),
            dump_mesh: false,
            dump_indicators: false,
            record_timing: true,
            budget_seconds: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub theta: Option<f64>,
    pub p: Option<usize>,
    pub q_bem: Option<usize>,
    pub n_max: Option<usize>,
    pub out: Option<PathBuf>,
    pub dump_mesh: bool,
    pub dump_indicators: bool,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, found '{value}'"))),
    }
}

impl RunConfig {
    /// Parses a configuration text; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', found '{line}'", k + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "problem" => c.problem = value.parse()?,
                "theta" => c.theta = parse(key, value)?,
                "p" => c.p = parse(key, value)?,
                "q_bem" | "q" => c.q_bem = parse(key, value)?,
                "data" => c.data = value.parse().map_err(|e| Error::Config(format!("data: {e}")))?,
                "n_max" | "nmax" => c.n_max = parse(key, value)?,
                "max_levels" => c.max_levels = parse(key, value)?,
                "out" => c.out = PathBuf::from(value),
                "dump_mesh" => c.dump_mesh = parse_bool(key, value)?,
                "dump_indicators" => c.dump_indicators = parse_bool(key, value)?,
                "record_timing" => c.record_timing = parse_bool(key, value)?,
                "budget_seconds" => {
                    c.budget_seconds = match value {
                        "none" => None,
                        v => Some(parse(key, v)?),
                    }
                }
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Reads `path` when given, then applies the overrides.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut c = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(t) = overrides.theta {
            c.theta = t;
        }
        if let Some(p) = overrides.p {
            c.p = p;
        }
        if let Some(q) = overrides.q_bem {
            c.q_bem = q;
        }
        if let Some(n) = overrides.n_max {
            c.n_max = n;
        }
        if let Some(o) = &overrides.out {
            c.out = o.clone();
        }
        c.dump_mesh |= overrides.dump_mesh;
        c.dump_indicators |= overrides.dump_indicators;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.adaptive().validate()?;
        if let Some(b) = self.budget_seconds {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Config(format!("budget_seconds: {b} is not a nonnegative number")));
            }
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::Config("out: empty path".into()));
        }
        Ok(())
    }

    /// Text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "problem = {}", self.problem.as_str());
        let _ = writeln!(out, "theta = {}", self.theta);
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "q_bem = {}", self.q_bem);
        let _ = writeln!(out, "data = {}", self.data.as_str());
        let _ = writeln!(out, "n_max = {}", self.n_max);
        let _ = writeln!(out, "max_levels = {}", self.max_levels);
        let _ = writeln!(out, "out = {}", self.out.display());
        let _ = writeln!(out, "dump_mesh = {}", self.dump_mesh);
        let _ = writeln!(out, "dump_indicators = {}", self.dump_indicators);
        let _ = writeln!(out, "record_timing = {}", self.record_timing);
        match self.budget_seconds {
            Some(b) => writeln!(out, "budget_seconds = {b}"),
            None => writeln!(out, "budget_seconds = none"),
        }
        .expect("writing to a string");
        out
    }

    pub fn adaptive(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            theta: self.theta,
            p: self.p,
            q: self.q_bem,
            data_method: self.data,
            max_levels: self.max_levels,
            n_max: self.n_max,
            budget: self.budget_seconds.map(Duration::from_secs_f64),
            record_timing: self.record_timing,
            ..Default::default()
        }
    }
}
