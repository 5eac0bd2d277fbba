//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! nbar = 20
//! sweep_variable = rabi_over_omegadd
//! start = 0.005
//! stop = 0.3
//! points = 60
//! ```
//!
//! Keys are the field names of [`SystemParams`] and [`SweepConfig`]; unknown
//! or repeated keys are rejected.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{RateConvention, SystemParams};
use crate::pipeline::NmaxSetting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    RabiOverOmegadd,
    Delta,
    Nbar,
    G,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::RabiOverOmegadd => "rabi_over_omegadd",
            SweepVariable::Delta => "delta",
            SweepVariable::Nbar => "nbar",
            SweepVariable::G => "g",
        }
    }

    /// `base` with the swept quantity set to `value`.
    pub fn apply(&self, base: &SystemParams, value: f64) -> SystemParams {
        let mut p = *base;
        match self {
            SweepVariable::RabiOverOmegadd => p.rabi = value * p.omega_dd,
            SweepVariable::Delta => p.delta_override = Some(value),
            SweepVariable::Nbar => p.nbar = value,
            SweepVariable::G => p.g = value,
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub base: SystemParams,
    pub sweep_variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
    pub n_max: NmaxSetting,
    /// Emit a `g = 0` row next to every point.
    pub with_and_without_g: bool,
    /// Also solve the dressed-Liouvillian reference at every point.
    pub run_oracle: bool,
    /// Truncation used by the full-density-matrix references.
    pub oracle_n_max: usize,
    /// Largest reduced-vs-dressed relative deviation accepted by `validate`.
    pub validation_threshold: f64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base: SystemParams::caption(0.0),
            sweep_variable: SweepVariable::RabiOverOmegadd,
            start: 0.005,
            stop: 0.3,
            points: 60,
            spacing: Spacing::Linear,
            n_max: NmaxSetting::default(),
            with_and_without_g: false,
            run_oracle: false,
            oracle_n_max: 10,
            validation_threshold: 1e-6,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start >= self.stop {
            return bad(format!("range needs start < stop, got {} .. {}", self.start, self.stop));
        }
        if self.points < 2 {
            return bad(format!("points must be >= 2, got {}", self.points));
        }
        if self.spacing == Spacing::Log && self.start <= 0.0 {
            return bad("log spacing needs start > 0".into());
        }
        if self.with_and_without_g && self.sweep_variable == SweepVariable::G {
            return bad("with_and_without_g cannot be combined with sweep_variable = g".into());
        }
        if !(self.validation_threshold > 0.0) {
            return bad("validation_threshold must be > 0".into());
        }
        self.sweep_variable.apply(&self.base, self.start).validate()?;
        self.sweep_variable.apply(&self.base, self.stop).validate()?;
        Ok(())
    }

    /// Sweep values in order.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|k| {
                let f = k as f64 / (n - 1) as f64;
                let v = match self.spacing {
                    Spacing::Linear => self.start + f * (self.stop - self.start),
                    Spacing::Log => (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp(),
                };
                if k == n - 1 {
                    self.stop
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn params_at(&self, value: f64) -> SystemParams {
        self.sweep_variable.apply(&self.base, value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses the config text on top of [`SweepConfig::default`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SweepConfig::default();
        let mut seen = BTreeSet::new();
        let mut cap = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line, msg };
            let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            let num = || value.parse::<f64>().map_err(|_| err(format!("`{key}`: expected a number, got `{value}`")));
            let int = || value.parse::<usize>().map_err(|_| err(format!("`{key}`: expected a non-negative integer, got `{value}`")));
            let flag = || match value {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(err(format!("`{key}`: expected true or false, got `{value}`"))),
            };
            let p = &mut cfg.base;
            match key {
                "gamma" => p.gamma = num()?,
                "chi_r" => p.chi_r = num()?,
                "omega_dd" => p.omega_dd = num()?,
                "rabi" => p.rabi = num()?,
                "g" => p.g = num()?,
                "omega" => p.omega = num()?,
                "kappa" => p.kappa = num()?,
                "nbar" => p.nbar = num()?,
                "delta_override" => p.delta_override = if value == "none" { None } else { Some(num()?) },
                "rate_convention" => {
                    p.rate_convention = match value {
                        "consistent" => RateConvention::Consistent,
                        "printed" => RateConvention::Printed,
                        _ => return Err(err(format!("`rate_convention`: expected consistent or printed, got `{value}`"))),
                    }
                }
                "sweep_variable" => {
                    cfg.sweep_variable = match value {
                        "rabi_over_omegadd" => SweepVariable::RabiOverOmegadd,
                        "delta" => SweepVariable::Delta,
                        "nbar" => SweepVariable::Nbar,
                        "g" => SweepVariable::G,
                        _ => return Err(err(format!("unknown sweep_variable `{value}`"))),
                    }
                }
                "start" => cfg.start = num()?,
                "stop" => cfg.stop = num()?,
                "points" => cfg.points = int()?,
                "spacing" => {
                    cfg.spacing = match value {
                        "linear" => Spacing::Linear,
                        "log" => Spacing::Log,
                        _ => return Err(err(format!("`spacing`: expected linear or log, got `{value}`"))),
                    }
                }
                "n_max" => cfg.n_max = value.parse().map_err(|e: String| err(format!("`n_max`: {e}")))?,
                "n_max_cap" => cap = Some(int()?),
                "with_and_without_g" => cfg.with_and_without_g = flag()?,
                "run_oracle" => cfg.run_oracle = flag()?,
                "oracle_n_max" => cfg.oracle_n_max = int()?,
                "validation_threshold" => cfg.validation_threshold = num()?,
                "output" => cfg.output = Some(PathBuf::from(value)),
                "format" => cfg.format = value.parse().map_err(|e: String| err(e))?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        if let Some(cap) = cap {
            match cfg.n_max {
                NmaxSetting::Auto { .. } => cfg.n_max = NmaxSetting::Auto { cap },
                NmaxSetting::Fixed(_) => {
                    return Err(Error::Config { line: 0, msg: "n_max_cap only applies with n_max = auto".into() })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config text that parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let p = &self.base;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("gamma", format!("{:e}", p.gamma));
        kv("chi_r", format!("{:e}", p.chi_r));
        kv("omega_dd", format!("{:e}", p.omega_dd));
        kv("rabi", format!("{:e}", p.rabi));
        kv("g", format!("{:e}", p.g));
        kv("omega", format!("{:e}", p.omega));
        kv("kappa", format!("{:e}", p.kappa));
        kv("nbar", format!("{:e}", p.nbar));
        kv("delta_override", p.delta_override.map_or("none".into(), |d| format!("{d:e}")));
        kv(
            "rate_convention",
            match p.rate_convention {
                RateConvention::Consistent => "consistent".into(),
                RateConvention::Printed => "printed".into(),
            },
        );
        kv("sweep_variable", self.sweep_variable.name().into());
        kv("start", format!("{:e}", self.start));
        kv("stop", format!("{:e}", self.stop));
        kv("points", self.points.to_string());
        kv("spacing", match self.spacing { Spacing::Linear => "linear", Spacing::Log => "log" }.into());
        match self.n_max {
            NmaxSetting::Fixed(n) => kv("n_max", n.to_string()),
            NmaxSetting::Auto { cap } => {
                kv("n_max", "auto".into());
                kv("n_max_cap", cap.to_string());
            }
        }
        kv("with_and_without_g", self.with_and_without_g.to_string());
        kv("run_oracle", self.run_oracle.to_string());
        kv("oracle_n_max", self.oracle_n_max.to_string());
        kv("validation_threshold", format!("{:e}", self.validation_threshold));
        if let Some(o) = &self.output {
            kv("output", o.display().to_string());
        }
        kv("format", match self.format { OutputFormat::Csv => "csv", OutputFormat::Json => "json" }.into());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_bracket_the_cooling_curve() {
        let cfg = SweepConfig::parse("").unwrap();
        let v = cfg.values();
        assert_eq!(v.len(), 60);
        assert_eq!(v[0], 0.005);
        assert_eq!(v[59], 0.3);
        assert_eq!(cfg.base.nbar, 20.0);
    }

    #[test]
    fn parses_and_round_trips() {
        let text = "# caption run\nnbar = 0.1  # small\nsweep_variable = delta\nstart=-3\nstop = 3\npoints = 7\nn_max = 10\nrate_convention = printed\nwith_and_without_g = true\n";
        let cfg = SweepConfig::parse(text).unwrap();
        assert_eq!(cfg.sweep_variable, SweepVariable::Delta);
        assert_eq!(cfg.n_max, NmaxSetting::Fixed(10));
        assert_eq!(cfg.base.rate_convention, RateConvention::Printed);
        assert_eq!(cfg.params_at(1.5).delta_override, Some(1.5));
        let again = SweepConfig::parse(&cfg.to_config_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_typos_and_bad_ranges() {
        let e = SweepConfig::parse("nbar = 1\nnbarr = 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        assert!(SweepConfig::parse("nbar = 1\nnbar = 2\n").is_err());
        assert!(SweepConfig::parse("start = 0.3\nstop = 0.1\n").is_err());
        assert!(SweepConfig::parse("points = 1\n").is_err());
        assert!(SweepConfig::parse("spacing = log\nstart = 0\n").is_err());
        assert!(SweepConfig::parse("sweep_variable = g\nstart=0\nstop=2\nwith_and_without_g = true\n").is_err());
        assert!(SweepConfig::parse("chi_r = 1.5\n").is_err());
        assert!(SweepConfig::parse("n_max = 0\n").is_err());
    }

    #[test]
    fn log_spacing() {
        let cfg = SweepConfig::parse("spacing = log\nstart = 0.01\nstop = 1\npoints = 3\n").unwrap();
        let v = cfg.values();
        assert!((v[1] - 0.1).abs() < 1e-15);
    }
}
