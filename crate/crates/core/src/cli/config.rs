//! TOML run configuration.
//!
//! Every table and key is optional. Parsing overlays the user's document on
//! the rendered defaults, so partially specified tables inherit the remaining
//! fields, and reports which leaves were taken from the defaults. Arrays
//! replace their default wholesale.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::sweep::SweepConfig;
use crate::circuit::{Design1Netlist, Design2Netlist};
use crate::error::{Error, Result};
use crate::experiments::{
    default_anchors, splitmix64, Anchor, Bench, Calibration, Design, NoiseModel,
    BASELINE_FLASH_EFFICACY, DEFAULT_PULSES, DEFAULT_PULSE_PERIOD, RACE_DISTANCE, RACE_REPEATS,
};
use crate::netsim::Scenario;
use crate::optics::OpticalSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudgetConfig {
    pub distances: Vec<f64>,
    /// Ambient levels at which the noise-free reliable range is reported.
    pub lux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrGridConfig {
    pub design: Design,
    pub lux: Vec<f64>,
    pub distances: Vec<f64>,
    pub pulses: u32,
    pub pulse_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmunityConfig {
    pub lux_from: f64,
    pub lux_to: f64,
    /// Duration of the slow ramp [s].
    pub ramp_duration: f64,
    /// Rise time of the fast step [s].
    pub step_rise: f64,
    /// Observation window after the fast step [s].
    pub step_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaceConfig {
    pub lux: Vec<f64>,
    pub distance: f64,
    pub repeats: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandbyConfig {
    pub lux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestConfig {
    pub ambient: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub max_evals: usize,
    pub anchors: Vec<Anchor>,
}

/// Complete parameter set of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Effective lux per W/m² of flash irradiance on the design 1 cell.
    pub flash_efficacy: f64,
    pub design1: Design1Netlist,
    pub design2: Design2Netlist,
    pub source: OpticalSource,
    pub noise: NoiseModel,
    pub linkbudget: LinkBudgetConfig,
    pub errgrid: ErrGridConfig,
    pub immunity: ImmunityConfig,
    pub race: RaceConfig,
    pub standby: StandbyConfig,
    pub harvest: HarvestConfig,
    pub calibrate: CalibrateConfig,
    pub netsim: Scenario,
    pub sweep: SweepConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            flash_efficacy: BASELINE_FLASH_EFFICACY,
            design1: Design1Netlist::default(),
            design2: Design2Netlist::default(),
            source: OpticalSource::default(),
            noise: NoiseModel::default(),
            linkbudget: LinkBudgetConfig {
                distances: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.40, 0.50],
                lux: vec![0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0],
            },
            errgrid: ErrGridConfig {
                design: Design::One,
                lux: vec![0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0],
                distances: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30],
                pulses: DEFAULT_PULSES,
                pulse_period: DEFAULT_PULSE_PERIOD,
            },
            immunity: ImmunityConfig {
                lux_from: 0.0,
                lux_to: 1600.0,
                ramp_duration: 600.0,
                step_rise: 1e-3,
                step_window: 2.0,
            },
            race: RaceConfig {
                lux: vec![0.0, 400.0, 800.0],
                distance: RACE_DISTANCE,
                repeats: RACE_REPEATS,
            },
            standby: StandbyConfig {
                lux: vec![0.0, 400.0, 800.0, 1600.0],
            },
            harvest: HarvestConfig {
                ambient: 400.0,
                distance: 0.10,
            },
            calibrate: CalibrateConfig {
                max_evals: 400,
                anchors: default_anchors(),
            },
            netsim: Scenario::chain(5, 0.15, 400.0),
            sweep: SweepConfig::default(),
        }
    }
}

/// Parsed configuration plus the dotted keys filled from defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: Config,
    pub defaulted: Vec<String>,
}

impl Config {
    /// Calibration assembled from the configured receivers.
    pub fn calibration(&self) -> Calibration {
        Calibration {
            id: "baseline".into(),
            design1: self.design1.clone(),
            design2: self.design2.clone(),
            flash_efficacy: self.flash_efficacy,
        }
    }

    pub fn bench(&self) -> Result<Bench> {
        Bench::new(self.calibration(), self.source.clone())
    }

    /// Check every section, naming the offending table.
    pub fn validate(&self) -> Result<()> {
        let at = |key: &str| {
            let key = key.to_string();
            move |e: Error| Error::Config {
                key: key.clone(),
                reason: match e {
                    Error::Domain(m) => m,
                    other => other.to_string(),
                },
            }
        };
        let reject = |key: &str, reason: &str| Error::Config {
            key: key.into(),
            reason: reason.into(),
        };
        self.design1.validate().map_err(at("design1"))?;
        self.design2.validate().map_err(at("design2"))?;
        self.source.validate().map_err(at("source"))?;
        self.noise.validate().map_err(at("noise"))?;
        if !(self.flash_efficacy > 0.0) {
            return Err(reject("flash_efficacy", "must be > 0"));
        }
        let positive = |key: &str, v: &[f64]| {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                Err(reject(key, "must be a non-empty list of values > 0"))
            } else {
                Ok(())
            }
        };
        let non_negative = |key: &str, v: &[f64]| {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                Err(reject(key, "must be a non-empty list of values >= 0"))
            } else {
                Ok(())
            }
        };
        positive("linkbudget.distances", &self.linkbudget.distances)?;
        non_negative("linkbudget.lux", &self.linkbudget.lux)?;
        positive("errgrid.distances", &self.errgrid.distances)?;
        non_negative("errgrid.lux", &self.errgrid.lux)?;
        if self.errgrid.pulses == 0 {
            return Err(reject("errgrid.pulses", "must be >= 1"));
        }
        if !(self.errgrid.pulse_period > self.source.pulse.duration) {
            return Err(reject(
                "errgrid.pulse_period",
                "must exceed the pulse duration",
            ));
        }
        let im = &self.immunity;
        if !(im.lux_from >= 0.0 && im.lux_to >= 0.0) {
            return Err(reject("immunity", "lux levels must be >= 0"));
        }
        if !(im.ramp_duration > 0.0 && im.step_rise > 0.0 && im.step_window > im.step_rise) {
            return Err(reject(
                "immunity",
                "durations must be > 0 and step_window must exceed step_rise",
            ));
        }
        non_negative("race.lux", &self.race.lux)?;
        if !(self.race.distance > 0.0) || self.race.repeats == 0 {
            return Err(reject("race", "distance must be > 0 and repeats >= 1"));
        }
        non_negative("standby.lux", &self.standby.lux)?;
        if !(self.harvest.ambient >= 0.0 && self.harvest.distance > 0.0) {
            return Err(reject("harvest", "ambient must be >= 0 and distance > 0"));
        }
        if self.calibrate.anchors.is_empty() || self.calibrate.max_evals == 0 {
            return Err(reject("calibrate", "needs anchors and max_evals >= 1"));
        }
        for a in &self.calibrate.anchors {
            a.validate().map_err(at("calibrate.anchors"))?;
        }
        self.netsim.validate().map_err(at("netsim"))?;
        self.sweep.validate().map_err(at("sweep"))?;
        Ok(())
    }

    /// Canonical TOML text; `parse_config(render(c))` returns `c`.
    pub fn render(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable 64-bit digest of the rendered parameters.
    pub fn param_hash(&self) -> u64 {
        text_hash(&self.render())
    }
}

pub fn text_hash(text: &str) -> u64 {
    text.as_bytes().chunks(8).fold(0x5eed_u64, |h, c| {
        let mut w = [0u8; 8];
        w[..c.len()].copy_from_slice(c);
        splitmix64(h ^ u64::from_le_bytes(w))
    })
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let user: Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
        key: "<document>".into(),
        reason: e.message().to_string(),
    })?;
    let defaults = match Value::try_from(Config::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("defaults render to a table"),
    };
    let mut defaulted = Vec::new();
    let merged = overlay(defaults, user, "", &mut defaulted);
    let config: Config = serde_path_to_error::deserialize(Value::Table(merged)).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner().to_string().trim().to_string();
        let reason = if inner.starts_with("unknown field") {
            format!("unknown key ({inner})")
        } else {
            inner
        };
        Error::Config { key, reason }
    })?;
    config.validate()?;
    Ok(ParsedConfig { config, defaulted })
}

/// Overlay `user` on `base`, recording base leaves that the user left unset.
fn overlay(mut base: Table, user: Table, prefix: &str, defaulted: &mut Vec<String>) -> Table {
    let mut user = user;
    for (k, v) in base.iter_mut() {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (user.remove(k), v) {
            (Some(Value::Table(u)), Value::Table(b)) => {
                let merged = overlay(std::mem::take(b), u, &path, defaulted);
                *b = merged;
            }
            (Some(u), slot) => *slot = u,
            (None, Value::Table(b)) => collect_leaves(b, &path, defaulted),
            (None, _) => defaulted.push(path),
        }
    }
    // keys without a default are passed through for the strict decoder
    base.extend(user);
    base
}

fn collect_leaves(t: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in t {
        let path = format!("{prefix}.{k}");
        match v {
            Value::Table(inner) => collect_leaves(inner, &path, out),
            _ => out.push(path),
        }
    }
}
