//! Command-line front end: configuration, dispatch and run summaries.

pub mod config;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{parse_config, text_hash, Config, ParsedConfig};
pub use sweep::{sweep, Candidate, Objective, SweepConfig, SweepReport, SWEEP_HEADER};

use crate::error::{Error, Result};
use crate::experiments::{
    ambient_immunity_trial, calibrate, error_rate_grid, harvest_conflict_demo, race_condition_demo,
    reliable_range, standby_sweep, Bench, CalibrationRecord, Design, ErrorRateReport, TrialConfig,
    STANDBY_HEADER,
};
use crate::netsim::{lifetime_csv, lifetime_report, run_scenario};
use crate::optics::AmbientProfile;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name used for the uncalibrated parameter set taken from the config.
pub const BASELINE_ID: &str = "baseline";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Flash irradiance and illuminance versus distance, and noise-free range per ambient level.
    Linkbudget,
    /// Error counts over an ambient × distance grid.
    Errgrid {
        /// Receiver design (1 or 2); overrides the config.
        #[arg(long)]
        design: Option<u8>,
    },
    /// False wake-ups under a slow ramp and a fast step of ambient light.
    Immunity,
    /// Design 2 race between phototransistor and LDR at several ambient levels.
    Race,
    /// Settled standby current and power of design 1.
    Standby,
    /// Flash response through a harvesting PMIC versus the dedicated wake-up cell.
    Harvest,
    /// Fit the free model parameters to the anchors and write a calibration record.
    Calibrate,
    /// Run the configured network scenario.
    Netsim,
    /// Rank divider and capacitor choices.
    Sweep {
        #[arg(long, value_enum)]
        objective: Option<Objective>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Linkbudget => "linkbudget",
            Command::Errgrid { .. } => "errgrid",
            Command::Immunity => "immunity",
            Command::Race => "race",
            Command::Standby => "standby",
            Command::Harvest => "harvest",
            Command::Calibrate => "calibrate",
            Command::Netsim => "netsim",
            Command::Sweep { .. } => "sweep",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "optiwake",
    version,
    about = "Optical wake-up receiver and sensor network simulator"
)]
pub struct Cli {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSVs and the run summary.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed override for every stochastic part of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Calibration to apply: `baseline`, a record id under OUT/calibration, or a record path.
    #[arg(long, global = true)]
    pub calibration: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

/// Everything needed to perform one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub calibration: Option<String>,
}

impl From<Cli> for RunManifest {
    fn from(c: Cli) -> Self {
        Self {
            command: c.command,
            config: c.config,
            out: c.out,
            seed: c.seed,
            calibration: c.calibration,
        }
    }
}

/// Metadata written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub calibration_id: String,
    pub param_hash: String,
    pub config: String,
    pub defaulted_keys: usize,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

/// Process exit status for an error: 2 config, 3 calibration, 4 runtime.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Calibration { .. } | Error::CalibrationMissing { .. } => 3,
        _ => 4,
    }
}

fn load_config(m: &RunManifest) -> Result<ParsedConfig> {
    let text = match &m.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Config {
            key: "<document>".into(),
            reason: format!("cannot read {}: {e}", p.display()),
        })?,
        None => String::new(),
    };
    let mut parsed = parse_config(&text)?;
    if let Some(seed) = m.seed {
        parsed.config.seed = seed;
        parsed.config.netsim.seed = seed;
    }
    Ok(parsed)
}

/// Bench for the run and the id of the calibration it carries.
fn resolve_bench(m: &RunManifest, cfg: &Config) -> Result<(Bench, String)> {
    let base = cfg.calibration();
    let id = match m.calibration.as_deref() {
        None | Some(BASELINE_ID) => {
            return Ok((cfg.bench()?, BASELINE_ID.to_string()));
        }
        Some(id) => id,
    };
    let candidates = [
        PathBuf::from(id),
        m.out.join("calibration").join(format!("{id}.toml")),
    ];
    let path = candidates.iter().find(|p| p.is_file()).ok_or_else(|| Error::CalibrationMissing {
        id: id.to_string(),
        hint: format!(
            "no record at {} or {}; run `optiwake calibrate --out {}` first or pass `--calibration baseline`",
            candidates[0].display(),
            candidates[1].display(),
            m.out.display()
        ),
    })?;
    let record = CalibrationRecord::from_toml(&fs::read_to_string(path)?)?;
    let mut cal = record.apply(&base)?;
    cal.id = record.id.clone();
    Ok((Bench::new(cal, cfg.source.clone())?, record.id))
}

fn write(out: &Path, name: &str, body: &str, outputs: &mut Vec<String>) -> Result<()> {
    let path = out.join(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, body)?;
    outputs.push(name.to_string());
    Ok(())
}

/// Perform a run, writing its artifacts and `summary.toml` into `m.out`.
pub fn dispatch(m: &RunManifest) -> Result<RunSummary> {
    let parsed = load_config(m)?;
    let mut cfg = parsed.config;
    fs::create_dir_all(&m.out).map_err(|e| Error::Io(format!("{}: {e}", m.out.display())))?;
    let (bench, cal_id) = resolve_bench(m, &cfg)?;
    let mut outputs = Vec::new();
    let mut notes = Vec::new();
    let out = m.out.as_path();

    match m.command {
        Command::Linkbudget => {
            let mut body = String::from("distance_m,irradiance_w_m2,flash_lux\n");
            for &d in &cfg.linkbudget.distances {
                body.push_str(&format!(
                    "{d},{},{}\n",
                    bench.flash_irradiance(d)?,
                    bench.flash_lux(d)?
                ));
            }
            write(out, "linkbudget.csv", &body, &mut outputs)?;
            let mut body = String::from("lux,reliable_range_m\n");
            for &lux in &cfg.linkbudget.lux {
                body.push_str(&format!("{lux},{}\n", reliable_range(&bench, lux)?));
            }
            write(out, "range.csv", &body, &mut outputs)?;
        }
        Command::Errgrid { design } => {
            if let Some(d) = design {
                cfg.errgrid.design = Design::try_from(d).map_err(|reason| Error::Config {
                    key: "errgrid.design".into(),
                    reason,
                })?;
            }
            let g = &cfg.errgrid;
            let mut base = TrialConfig::new(g.design, 0.0, 1.0);
            base.pulses = g.pulses;
            base.pulse_period = g.pulse_period;
            base.noise = cfg.noise;
            base.rng_seed = cfg.seed;
            let report: ErrorRateReport = error_rate_grid(&bench, &g.lux, &g.distances, &base)?;
            write(out, "errgrid.csv", &report.to_csv(), &mut outputs)?;
        }
        Command::Immunity => {
            let im = &cfg.immunity;
            let ramp = AmbientProfile::ramp(im.lux_from, im.lux_to, im.ramp_duration);
            let slow = ambient_immunity_trial(&bench, &ramp, im.ramp_duration)?;
            let step = AmbientProfile::ramp(im.lux_from, im.lux_to, im.step_rise);
            let fast = ambient_immunity_trial(&bench, &step, im.step_window)?;
            let body = format!(
                "profile,transition_s,false_wakeups\nramp,{},{slow}\nstep,{},{fast}\n",
                im.ramp_duration, im.step_rise
            );
            write(out, "immunity.csv", &body, &mut outputs)?;
        }
        Command::Race => {
            let r = &cfg.race;
            let results =
                race_condition_demo(&bench, &r.lux, r.distance, r.repeats, cfg.seed, cfg.noise)?;
            let mut body = String::from("lux,repeats,detected,missed\n");
            for res in &results {
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    res.lux,
                    res.repeats,
                    res.detected,
                    res.missed()
                ));
                let mut trace = format!("{}\n", crate::circuit::Design2Trace::HEADER);
                for row in res.trace.csv_rows() {
                    trace.push_str(&row);
                    trace.push('\n');
                }
                write(
                    out,
                    &format!("race_trace_{}lx.csv", res.lux),
                    &trace,
                    &mut outputs,
                )?;
            }
            write(out, "race.csv", &body, &mut outputs)?;
        }
        Command::Standby => {
            let rows = standby_sweep(&bench.calibration.design1, &cfg.standby.lux)?;
            let mut body = format!("{STANDBY_HEADER}\n");
            for r in rows {
                body.push_str(&format!("{},{},{}\n", r.lux, r.current, r.power));
            }
            write(out, "standby.csv", &body, &mut outputs)?;
        }
        Command::Harvest => {
            let h = harvest_conflict_demo(&bench, cfg.harvest.ambient, cfg.harvest.distance)?;
            let body = format!(
                "pmic_vsc_pp,unloaded_pp,ratio,pmic_detected,dedicated_detected\n{},{},{},{},{}\n",
                h.pmic_vsc_pp,
                h.unloaded_pp,
                h.ratio(),
                h.pmic_detected,
                h.dedicated_detected
            );
            write(out, "harvest.csv", &body, &mut outputs)?;
        }
        Command::Calibrate => {
            let record = calibrate(&bench, &cfg.calibrate.anchors, cfg.calibrate.max_evals)?;
            let mut body = String::from("anchor,residual,tolerance\n");
            for r in &record.residuals {
                body.push_str(&format!("{},{},{}\n", r.anchor, r.residual, r.tolerance));
            }
            write(out, "calibration_residuals.csv", &body, &mut outputs)?;
            write(
                out,
                &format!("calibration/{}.toml", record.id),
                &record.to_toml(),
                &mut outputs,
            )?;
            notes.push(format!("apply with --calibration {}", record.id));
        }
        Command::Netsim => {
            let trace = run_scenario(&bench, &cfg.netsim)?;
            write(out, "netsim_events.csv", &trace.events_csv(), &mut outputs)?;
            write(out, "netsim_ledger.csv", &trace.ledger_csv(), &mut outputs)?;
            write(
                out,
                "netsim_lifetime.csv",
                &lifetime_csv(&lifetime_report(&trace)),
                &mut outputs,
            )?;
            let worst = trace
                .nodes
                .iter()
                .map(|n| n.ledger.balance_error().abs())
                .fold(0.0, f64::max);
            notes.push(format!("worst ledger imbalance {worst:e} J"));
        }
        Command::Sweep { objective } => {
            if let Some(o) = objective {
                cfg.sweep.objective = o;
            }
            let report = sweep(&bench, &cfg.sweep)?;
            write(out, "sweep.csv", &report.to_csv(), &mut outputs)?;
        }
    }

    // record the effective parameters, including any applied calibration
    cfg.design1 = bench.calibration.design1.clone();
    cfg.design2 = bench.calibration.design2.clone();
    cfg.flash_efficacy = bench.calibration.flash_efficacy;
    let rendered = cfg.render();
    write(out, "config.toml", &rendered, &mut outputs)?;
    let summary = RunSummary {
        command: m.command.name().to_string(),
        version: VERSION.to_string(),
        seed: cfg.seed,
        calibration_id: cal_id,
        param_hash: format!("{:016x}", text_hash(&rendered)),
        config: m
            .config
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "<defaults>".into()),
        defaulted_keys: parsed.defaulted.len(),
        outputs,
        notes,
    };
    let text = toml::to_string(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out.join("summary.toml"), text)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(command: Command, out: &Path) -> RunManifest {
        RunManifest {
            command,
            config: None,
            out: out.to_path_buf(),
            seed: None,
            calibration: None,
        }
    }

    #[test]
    fn cli_parses_global_flags() {
        let cli = Cli::try_parse_from([
            "optiwake",
            "standby",
            "--out",
            "x",
            "--seed",
            "7",
            "--calibration",
            "cal-1",
        ])
        .unwrap();
        let m = RunManifest::from(cli);
        assert_eq!(m.command, Command::Standby);
        assert_eq!(m.seed, Some(7));
        assert_eq!(m.calibration.as_deref(), Some("cal-1"));
        assert!(Cli::try_parse_from(["optiwake", "bogus"]).is_err());
    }

    #[test]
    fn missing_calibration_exits_3() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(Command::Standby, dir.path());
        m.calibration = Some("cal-nope".into());
        let err = dispatch(&m).unwrap_err();
        assert_eq!(exit_code(&err), 3);
        assert!(err.to_string().contains("optiwake calibrate"));
    }

    #[test]
    fn bad_config_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        fs::write(&cfg, "[design1]\nr3 = 1.0\n").unwrap();
        let mut m = manifest(Command::Standby, dir.path());
        m.config = Some(cfg);
        assert_eq!(exit_code(&dispatch(&m).unwrap_err()), 2);
    }

    #[test]
    fn standby_run_writes_summary() {
        let dir = tempfile::tempdir().unwrap();
        let s = dispatch(&manifest(Command::Standby, dir.path())).unwrap();
        assert_eq!(s.calibration_id, BASELINE_ID);
        assert_eq!(s.version, VERSION);
        let csv = fs::read_to_string(dir.path().join("standby.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        let summary = fs::read_to_string(dir.path().join("summary.toml")).unwrap();
        assert!(summary.contains("param_hash") && summary.contains("seed = 1"));
    }
}
