//! Verification strategy configuration and the `name:key=val,flag` mini-language.
//!
//! ```text
//! strict
//! random[:p=<0..1>][,seed=<u64>]             defaults p=0.5, seed=0
//! fly-gate[:entropy=<nats>]                 entropy gate only; default 0.1
//! fly[:entropy=<nats>][,window=<n>]         gate + deferred window; defaults 0.1, 4
//! lvspec[:lambda=<0..1>][,n=<N>][,pst]      defaults lambda=0.7, n=10, PST off
//! oracle[:pst]                              relaxes ground-truth irrelevant positions
//! ```
//!
//! Boolean flags also accept `pst=true|false`. `w` is an alias of `window`,
//! `entropy-gate` and `fly0` are aliases of `fly-gate`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_LAMBDA: f64 = 0.7;
pub const DEFAULT_TOP_N: usize = 10;
pub const DEFAULT_ENTROPY_THRESHOLD: f64 = 0.1;
pub const DEFAULT_WINDOW: usize = 4;
pub const DEFAULT_RANDOM_P: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("unknown strategy `{0}` (expected strict, random, fly-gate, fly, lvspec or oracle)")]
    UnknownName(String),
    #[error("strategy `{strategy}` does not take parameter `{key}`")]
    UnknownKey { strategy: &'static str, key: String },
    #[error("invalid value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// A verification strategy and exactly the parameters its kind uses.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StrategyConfig {
    /// Exact token-id match only.
    Strict,
    /// Accepts each mismatch with probability `p`.
    Random { p: f64, seed: u64 },
    /// Accepts a mismatch when target entropy exceeds the threshold.
    EntropyGate { threshold: f64 },
    /// Entropy gate plus `window` exact matches right after the mismatch.
    FlyWindow { threshold: f64, window: usize },
    /// Relaxes the `λK` least visually relevant positions, then optionally
    /// accepts shifted tokens found elsewhere in the draft window.
    LvSpec { lambda: f64, top_n: usize, pst: bool },
    /// Relaxes exactly the ground-truth irrelevant positions of synthetic
    /// traces. Reference point for the theory, not a deployable strategy.
    Oracle { pst: bool },
}

impl StrategyConfig {
    pub fn lvspec(lambda: f64, top_n: usize, pst: bool) -> Self {
        StrategyConfig::LvSpec { lambda, top_n, pst }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyConfig::Strict => "strict",
            StrategyConfig::Random { .. } => "random",
            StrategyConfig::EntropyGate { .. } => "fly-gate",
            StrategyConfig::FlyWindow { .. } => "fly",
            StrategyConfig::LvSpec { .. } => "lvspec",
            StrategyConfig::Oracle { .. } => "oracle",
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        fn unit(name: &'static str, value: f64) -> Result<(), StrategyError> {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(StrategyError::OutOfRange {
                    name,
                    value,
                    range: "[0, 1]",
                })
            }
        }
        fn threshold(value: f64) -> Result<(), StrategyError> {
            if value >= 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(StrategyError::OutOfRange {
                    name: "entropy",
                    value,
                    range: "[0, inf)",
                })
            }
        }
        fn positive(name: &'static str, value: usize) -> Result<(), StrategyError> {
            if value >= 1 {
                Ok(())
            } else {
                Err(StrategyError::OutOfRange {
                    name,
                    value: value as f64,
                    range: "[1, inf)",
                })
            }
        }
        match *self {
            StrategyConfig::Strict | StrategyConfig::Oracle { .. } => Ok(()),
            StrategyConfig::Random { p, .. } => unit("p", p),
            StrategyConfig::EntropyGate { threshold: t } => threshold(t),
            StrategyConfig::FlyWindow { threshold: t, window } => {
                threshold(t)?;
                positive("window", window)
            }
            StrategyConfig::LvSpec { lambda, top_n, .. } => {
                unit("lambda", lambda)?;
                positive("n", top_n)
            }
        }
    }
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyConfig::Strict => f.write_str("strict"),
            StrategyConfig::Random { p, seed } => write!(f, "random:p={p},seed={seed}"),
            StrategyConfig::EntropyGate { threshold } => write!(f, "fly-gate:entropy={threshold}"),
            StrategyConfig::FlyWindow { threshold, window } => {
                write!(f, "fly:entropy={threshold},window={window}")
            }
            StrategyConfig::LvSpec { lambda, top_n, pst } => {
                write!(f, "lvspec:lambda={lambda},n={top_n}")?;
                if *pst {
                    f.write_str(",pst")?;
                }
                Ok(())
            }
            StrategyConfig::Oracle { pst } => f.write_str(if *pst { "oracle:pst" } else { "oracle" }),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, StrategyError> {
    value.parse().map_err(|_| StrategyError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_flag(key: &str, value: Option<&str>) -> Result<bool, StrategyError> {
    match value {
        None => Ok(true),
        Some(v) => parse_value(key, v),
    }
}

impl FromStr for StrategyConfig {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p),
            None => (s, ""),
        };
        let pairs = params
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| match p.split_once('=') {
                Some((k, v)) => (k.trim(), Some(v.trim())),
                None => (p, None),
            });

        let mut config = match name {
            "strict" => StrategyConfig::Strict,
            "random" => StrategyConfig::Random {
                p: DEFAULT_RANDOM_P,
                seed: 0,
            },
            "fly-gate" | "entropy-gate" | "fly0" => StrategyConfig::EntropyGate {
                threshold: DEFAULT_ENTROPY_THRESHOLD,
            },
            "fly" => StrategyConfig::FlyWindow {
                threshold: DEFAULT_ENTROPY_THRESHOLD,
                window: DEFAULT_WINDOW,
            },
            "lvspec" => StrategyConfig::LvSpec {
                lambda: DEFAULT_LAMBDA,
                top_n: DEFAULT_TOP_N,
                pst: false,
            },
            "oracle" => StrategyConfig::Oracle { pst: false },
            other => return Err(StrategyError::UnknownName(other.to_string())),
        };

        let strategy = config.name();
        for (key, value) in pairs {
            let needs_value = |v: Option<&str>| -> Result<String, StrategyError> {
                v.map(str::to_string).ok_or_else(|| StrategyError::BadValue {
                    key: key.to_string(),
                    value: String::new(),
                })
            };
            match (&mut config, key) {
                (StrategyConfig::Random { p, .. }, "p") => *p = parse_value(key, &needs_value(value)?)?,
                (StrategyConfig::Random { seed, .. }, "seed") => *seed = parse_value(key, &needs_value(value)?)?,
                (StrategyConfig::EntropyGate { threshold }, "entropy")
                | (StrategyConfig::FlyWindow { threshold, .. }, "entropy") => {
                    *threshold = parse_value(key, &needs_value(value)?)?
                }
                (StrategyConfig::FlyWindow { window, .. }, "window" | "w") => {
                    *window = parse_value(key, &needs_value(value)?)?
                }
                (StrategyConfig::LvSpec { lambda, .. }, "lambda") => *lambda = parse_value(key, &needs_value(value)?)?,
                (StrategyConfig::LvSpec { top_n, .. }, "n") => *top_n = parse_value(key, &needs_value(value)?)?,
                (StrategyConfig::LvSpec { pst, .. }, "pst") | (StrategyConfig::Oracle { pst }, "pst") => {
                    *pst = parse_flag(key, value)?
                }
                _ => {
                    return Err(StrategyError::UnknownKey {
                        strategy,
                        key: key.to_string(),
                    })
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

/// Parses a `;`-separated list of strategy specs.
pub fn parse_strategy_list(s: &str) -> Result<Vec<StrategyConfig>, StrategyError> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}
