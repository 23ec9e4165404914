//! Run configuration: a flat `key = value` file, overridable from flags.

use std::fmt::Write as _;
use std::path::PathBuf;

use ahmpc_core::ahmpc::ControllerConfig;
use ahmpc_core::plant::{DampingMode, PendulumParams};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },
}

/// Noise off, or on with the given generator seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Off,
    Seed(u64),
}

impl Noise {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "off" => Ok(Noise::Off),
            v => v
                .parse()
                .map(Noise::Seed)
                .map_err(|_| format!("expected `off` or an integer seed, got `{v}`")),
        }
    }
}

impl std::fmt::Display for Noise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Noise::Off => f.write_str("off"),
            Noise::Seed(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub degree: usize,
    pub steps: usize,
    pub noise: Noise,
    pub controller: ControllerConfig,
    pub plant: PendulumParams,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            degree: 5,
            steps: 150,
            noise: Noise::Off,
            controller: ControllerConfig::default(),
            plant: PendulumParams::default(),
            out: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "degree",
    "steps",
    "noise",
    "n_init",
    "m",
    "l",
    "retry_cap",
    "decrement",
    "alpha_scale",
    "u_max",
    "n_min",
    "n_max",
    "seed_weight",
    "g",
    "damping",
    "out",
];

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        reason: format!("`{value}` is not a valid number"),
    })
}

impl RunConfig {
    /// Apply one setting. Values are range-checked by [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let c = &mut self.controller;
        match key {
            "degree" => self.degree = number(key, value)?,
            "steps" => self.steps = number(key, value)?,
            "noise" => {
                self.noise = Noise::parse(value).map_err(|reason| ConfigError::Value {
                    key: key.into(),
                    reason,
                })?
            }
            "n_init" => c.n_init = number(key, value)?,
            "m" => c.m = number(key, value)?,
            "l" => c.l = number(key, value)?,
            "retry_cap" => c.retry_cap = number(key, value)?,
            "decrement" => c.decrement = number(key, value)?,
            "alpha_scale" => c.alpha_scale = number(key, value)?,
            "u_max" => c.u_max = number(key, value)?,
            "n_min" => c.n_min = number(key, value)?,
            "n_max" => c.n_max = number(key, value)?,
            "seed_weight" => c.seed_weight = number(key, value)?,
            "g" => self.plant.g = number(key, value)?,
            "damping" => {
                self.plant.damping = match value {
                    "absolute" => DampingMode::Absolute,
                    "relative" => DampingMode::Relative,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            reason: format!("expected `absolute` or `relative`, got `{value}`"),
                        })
                    }
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Apply a config file on top of `self`. `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if ![1, 3, 5].contains(&self.degree) {
            return Err(ConfigError::Value {
                key: "degree".into(),
                reason: format!("must be 1, 3 or 5, got {}", self.degree),
            });
        }
        if !(self.plant.g > 0.0 && self.plant.g.is_finite()) {
            return Err(ConfigError::Value {
                key: "g".into(),
                reason: format!("must be positive, got {}", self.plant.g),
            });
        }
        self.controller.validate().map_err(|reason| ConfigError::Value {
            key: "controller".into(),
            reason,
        })
    }

    /// Every setting as `key = value`, in [`KEYS`] order.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        let c = &self.controller;
        let damping = match self.plant.damping {
            DampingMode::Absolute => "absolute",
            DampingMode::Relative => "relative",
        };
        vec![
            ("degree", self.degree.to_string()),
            ("steps", self.steps.to_string()),
            ("noise", self.noise.to_string()),
            ("n_init", c.n_init.to_string()),
            ("m", c.m.to_string()),
            ("l", c.l.to_string()),
            ("retry_cap", c.retry_cap.to_string()),
            ("decrement", c.decrement.to_string()),
            ("alpha_scale", c.alpha_scale.to_string()),
            ("u_max", c.u_max.to_string()),
            ("n_min", c.n_min.to_string()),
            ("n_max", c.n_max.to_string()),
            ("seed_weight", c.seed_weight.to_string()),
            ("g", self.plant.g.to_string()),
            ("damping", damping.to_string()),
            (
                "out",
                self.out.as_ref().map_or("-".into(), |p| p.display().to_string()),
            ),
        ]
    }

    /// The resolved configuration as `# key = value` lines.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.resolved() {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let mut c = RunConfig::default();
        c.apply_file("degree = 3\n# comment\nnoise = 7  # trailing\ndamping = relative\n")
            .unwrap();
        assert_eq!(c.degree, 3);
        assert_eq!(c.noise, Noise::Seed(7));
        assert_eq!(c.plant.damping, DampingMode::Relative);

        let mut d = RunConfig::default();
        let text: String = c.resolved().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        d.apply_file(&text.replace("out = -\n", "")).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert_eq!(
            c.apply_file("horizon = 3"),
            Err(ConfigError::UnknownKey("horizon".into()))
        );
        assert_eq!(c.apply_file("degree 3"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(c.apply_file("steps = -1"), Err(ConfigError::Value { .. })));
        assert!(matches!(c.apply_file("noise = on"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.degree = 2;
        assert!(c.validate().is_err());
        c.degree = 1;
        c.controller.m = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn echo_lists_every_key() {
        let echo = RunConfig::default().echo();
        assert_eq!(echo.lines().count(), KEYS.len());
        for (line, key) in echo.lines().zip(KEYS) {
            assert!(line.starts_with(&format!("# {key} = ")));
        }
    }
}
