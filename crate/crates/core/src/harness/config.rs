//! Sweep configuration: a flat TOML table whose keys can each be
//! overridden from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::amp::TuningPolicy;
use crate::constellation::Constellation;
use crate::denoise::Family;
use crate::error::{Error, Result};

pub const DEFAULT_T_MAX: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(format!("unknown format '{other}'"))),
        }
    }
}

/// One curve of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum DetectorSpec {
    Amp {
        family: Family,
        tuning: TuningPolicy,
        t_max: usize,
    },
    Lmmse,
    Zf,
    Mf,
    Box,
}

impl DetectorSpec {
    /// Tuning used when a key names only the family. Gray families have
    /// no cheap optimum and fall back to `tau = sigma^2`.
    pub fn default_tuning(family: Family) -> TuningPolicy {
        match family {
            Family::GrayExact | Family::GrayMaxLog => TuningPolicy::MatchSigma,
            _ => TuningPolicy::Optimal,
        }
    }

    pub fn key(&self) -> String {
        match self {
            DetectorSpec::Amp {
                family,
                tuning,
                t_max,
            } => format!("{family}/{tuning}/{t_max}"),
            DetectorSpec::Lmmse => "lmmse".into(),
            DetectorSpec::Zf => "zf".into(),
            DetectorSpec::Mf => "mf".into(),
            DetectorSpec::Box => "box".into(),
        }
    }
}

impl FromStr for DetectorSpec {
    type Err = Error;

    /// `lmmse`, `zf`, `mf`, `box`, or `family[/tuning[/t_max]]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "lmmse" => return Ok(DetectorSpec::Lmmse),
            "zf" => return Ok(DetectorSpec::Zf),
            "mf" => return Ok(DetectorSpec::Mf),
            "box" => return Ok(DetectorSpec::Box),
            _ => {}
        }
        let mut parts = s.split('/');
        let family: Family = parts.next().unwrap_or_default().parse()?;
        let tuning = match parts.next() {
            Some(t) => t.parse()?,
            None => Self::default_tuning(family),
        };
        let t_max = match parts.next() {
            Some(t) => t
                .parse()
                .map_err(|_| Error::config(format!("bad iteration count in '{s}'")))?,
            None => DEFAULT_T_MAX,
        };
        if parts.next().is_some() {
            return Err(Error::config(format!("too many fields in detector '{s}'")));
        }
        if t_max == 0 {
            return Err(Error::config(format!(
                "detector '{s}' needs at least one iteration"
            )));
        }
        Ok(DetectorSpec::Amp {
            family,
            tuning,
            t_max,
        })
    }
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

fn default_mr() -> usize {
    128
}
fn default_mt() -> usize {
    64
}
fn default_constellation() -> String {
    "qpsk".into()
}
fn default_min_errors() -> u64 {
    200
}
fn default_max_trials() -> u64 {
    100_000
}
fn default_batch() -> u64 {
    32
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_name() -> String {
    "sweep".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_mr")]
    pub mr: usize,
    #[serde(default = "default_mt")]
    pub mt: usize,
    #[serde(default = "default_constellation")]
    pub constellation: String,
    /// Scale the constellation to unit symbol energy.
    #[serde(default)]
    pub normalize: bool,
    pub detectors: Vec<String>,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_min_errors")]
    pub min_symbol_errors: u64,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    /// Trials per scheduling round; the stopping rule is checked between
    /// rounds, so this (not the worker count) fixes the trial total.
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub format: Format,
    /// Worker threads; unset means one per core.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn beta(&self) -> f64 {
        self.mt as f64 / self.mr as f64
    }

    pub fn constellation(&self) -> Result<Constellation> {
        let c = Constellation::from_key(&self.constellation)?;
        Ok(if self.normalize { c.normalized() } else { c })
    }

    pub fn detector_specs(&self) -> Result<Vec<DetectorSpec>> {
        self.detectors.iter().map(|d| d.parse()).collect()
    }

    /// Checks every invariant a sweep relies on.
    pub fn validate(&self) -> Result<()> {
        if self.mr == 0 || self.mt == 0 {
            return Err(Error::config("mr and mt must be positive"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db grid is empty"));
        }
        if let Some(x) = self.snr_db.iter().find(|x| !x.is_finite()) {
            return Err(Error::config(format!("snr_db value {x} is not finite")));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("no detectors configured"));
        }
        if self.min_symbol_errors == 0 {
            return Err(Error::config("min_symbol_errors must be at least 1"));
        }
        if self.max_trials == 0 {
            return Err(Error::config("max_trials must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config(format!("bad output name '{}'", self.name)));
        }
        let c = self.constellation()?;
        for spec in self.detector_specs()? {
            match spec {
                DetectorSpec::Zf if self.mt > self.mr => {
                    return Err(Error::config("zf needs mt <= mr"));
                }
                DetectorSpec::Amp { family, .. } => {
                    crate::denoise::Denoiser::new(family, &c)?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}
