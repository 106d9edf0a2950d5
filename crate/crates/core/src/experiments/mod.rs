//! Scripted reproductions of the bench campaigns: error-rate grids over
//! illuminance and distance, ambient-immunity trials, the design 2 race
//! condition, standby sweeps, the harvesting conflict and model calibration.
//!
//! Every stochastic quantity is drawn from a ChaCha stream seeded per grid
//! cell, so cells can be evaluated in any order or in parallel.

mod calibrate;

pub use calibrate::{
    calibrate, default_anchors, reliable_range, Anchor, AnchorResidual, CalibrationRecord,
    FREE_PARAMETERS,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::{
    step_frontend, Design1Netlist, Design1Sim, Design2Netlist, Design2Node, Design2Sim,
    Design2Trace, HarvestFrontEnd, RcNode,
};
use crate::devices::solar_voc;
use crate::error::{domain, Error, Result};
use crate::optics::{
    ambient_at, illuminance_from_irradiance, irradiance, AmbientProfile, LinkGeometry,
    OpticalSource,
};

/// Interval between wake-up pulses on the bench [s].
pub const DEFAULT_PULSE_PERIOD: f64 = 5.0;
pub const DEFAULT_PULSES: u32 = 100;

/// Effective lux per W/m² of flash irradiance on the wake-up cell.
///
/// Fitted so that the reliable range at 400 to 1600 lx exceeds 25 cm; it lumps
/// the LED spectrum together with the cell's spectral response and is larger
/// than any photometric efficacy.
pub const BASELINE_FLASH_EFFICACY: f64 = 9800.0;

/// Noise-free settling time simulated before each flash so that the flicker
/// process is stationary when the pulse starts [s].
const PRE_ROLL: f64 = 20e-3;

/// Time simulated after the flash ends. Once the flash is off the cell voltage
/// falls and the receiver moves away from its threshold, so later detections
/// are impossible without noise.
const TAIL: f64 = 5e-3;

/// Which wake-up receiver a trial drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Design {
    /// Solar cell with divider and adaptation capacitor.
    One,
    /// Coated phototransistor with LDR compensation.
    Two,
}

impl TryFrom<u8> for Design {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Design::One),
            2 => Ok(Design::Two),
            _ => Err(format!("design must be 1 or 2, got {v}")),
        }
    }
}

impl From<Design> for u8 {
    fn from(d: Design) -> u8 {
        match d {
            Design::One => 1,
            Design::Two => 2,
        }
    }
}

/// Stochastic perturbations applied during trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of the ambient flicker as a fraction of the ambient
    /// level (0.02 = 2 %).
    pub ambient_flicker_sd: f64,
    /// Corner frequency of the first-order flicker process [Hz].
    pub flicker_bandwidth: f64,
    /// Relative standard deviation of the flash power, drawn once per pulse.
    pub amplitude_jitter: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            ambient_flicker_sd: 0.02,
            flicker_bandwidth: 100.0,
            amplitude_jitter: 0.03,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            ambient_flicker_sd: 0.0,
            flicker_bandwidth: 100.0,
            amplitude_jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ambient_flicker_sd >= 0.0 && self.amplitude_jitter >= 0.0) {
            return Err(domain("noise standard deviations must be >= 0"));
        }
        if !(self.flicker_bandwidth > 0.0) {
            return Err(domain("flicker_bandwidth must be > 0"));
        }
        Ok(())
    }
}

/// Band-limited ambient flicker: a stationary AR(1) process.
struct Flicker {
    rho: f64,
    kick: f64,
    value: f64,
}

impl Flicker {
    fn new(sd: f64, bandwidth: f64, dt: f64) -> Self {
        let rho = (-2.0 * std::f64::consts::PI * bandwidth * dt).exp();
        Self {
            rho,
            kick: sd * (1.0 - rho * rho).sqrt(),
            value: 0.0,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.kick > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            self.value = self.rho * self.value + self.kick * z;
        }
        self.value
    }
}

fn jitter(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (1.0 + sd * z).max(0.0)
}

/// Parameter sets produced by a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub id: String,
    pub design1: Design1Netlist,
    pub design2: Design2Netlist,
    /// Effective lux per W/m² of flash irradiance on the design 1 cell.
    pub flash_efficacy: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            id: "baseline".into(),
            design1: Design1Netlist::default(),
            design2: Design2Netlist::default(),
            flash_efficacy: BASELINE_FLASH_EFFICACY,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        self.design1.validate()?;
        self.design2.validate()?;
        if !(self.flash_efficacy > 0.0) {
            return Err(domain("flash_efficacy must be > 0"));
        }
        Ok(())
    }
}

/// Transmitter plus calibrated receivers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bench {
    pub calibration: Calibration,
    pub source: OpticalSource,
}

impl Bench {
    pub fn new(calibration: Calibration, source: OpticalSource) -> Result<Self> {
        calibration.validate()?;
        source.validate()?;
        Ok(Self {
            calibration,
            source,
        })
    }

    /// On-axis flash irradiance at `distance` [W/m²].
    pub fn flash_irradiance(&self, distance: f64) -> Result<f64> {
        irradiance(&self.source, &LinkGeometry::line_of_sight(distance))
    }

    /// Flash seen by the design 1 cell at `distance` [lx].
    pub fn flash_lux(&self, distance: f64) -> Result<f64> {
        illuminance_from_irradiance(
            self.flash_irradiance(distance)?,
            self.calibration.flash_efficacy,
        )
    }
}

/// One cell of a measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub design: Design,
    pub ambient_lux: f64,
    pub distance: f64,
    pub pulses: u32,
    pub pulse_period: f64,
    pub rng_seed: u64,
    pub noise: NoiseModel,
    /// Settled ambient time before the first pulse [s]; `None` uses three
    /// adaptation times.
    #[serde(default)]
    pub warmup: Option<f64>,
}

impl TrialConfig {
    pub fn new(design: Design, ambient_lux: f64, distance: f64) -> Self {
        Self {
            design,
            ambient_lux,
            distance,
            pulses: DEFAULT_PULSES,
            pulse_period: DEFAULT_PULSE_PERIOD,
            rng_seed: 0,
            noise: NoiseModel::default(),
            warmup: None,
        }
    }

    pub fn validate(&self, pulse_duration: f64) -> Result<()> {
        if self.pulses == 0 {
            return Err(domain("pulses must be >= 1"));
        }
        if !(self.pulse_period > pulse_duration) {
            return Err(domain("pulse_period must exceed the pulse duration"));
        }
        if !(self.ambient_lux >= 0.0 && self.distance > 0.0) {
            return Err(domain("ambient_lux must be >= 0 and distance > 0"));
        }
        self.noise.validate()
    }
}

/// Adaptation time of a design at a given ambient level [s].
pub fn settling_time(cal: &Calibration, design: Design, lux: f64) -> f64 {
    match design {
        Design::One => cal.design1.adaptation_time_at(lux),
        Design::Two => 5.0 * cal.design2.ldr.tau_rise,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub transmitted: u32,
    pub detected: u32,
}

impl TrialOutcome {
    pub fn errors(&self) -> u32 {
        self.transmitted - self.detected
    }
}

/// Transmit `cfg.pulses` flashes and count detections.
///
/// Each pulse starts from the ambient steady state; the warm-up must cover
/// three adaptation times or the run is refused.
pub fn run_trials(bench: &Bench, cfg: &TrialConfig) -> Result<TrialOutcome> {
    let pulse = bench.source.pulse;
    cfg.validate(pulse.duration)?;
    let t_amb = settling_time(&bench.calibration, cfg.design, cfg.ambient_lux);
    if let Some(w) = cfg.warmup {
        if w < 3.0 * t_amb {
            return Err(Error::Unsettled(format!(
                "warm-up {w:.3} s is shorter than 3 x t_amb = {:.3} s",
                3.0 * t_amb
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let detected = match cfg.design {
        Design::One => {
            let sim = Design1Sim::new(bench.calibration.design1.clone())?;
            let flash = bench.flash_lux(cfg.distance)?;
            (0..cfg.pulses)
                .filter(|_| pulse_design1(&sim, cfg, flash, &pulse, &mut rng))
                .count()
        }
        Design::Two => {
            let sim = Design2Sim::new(bench.calibration.design2.clone())?;
            let irr = bench.flash_irradiance(cfg.distance)?;
            (0..cfg.pulses)
                .filter(|_| pulse_design2(&sim, cfg, irr, &pulse, &mut rng, None).0)
                .count()
        }
    };
    Ok(TrialOutcome {
        transmitted: cfg.pulses,
        detected: detected as u32,
    })
}

fn pulse_design1(
    sim: &Design1Sim,
    cfg: &TrialConfig,
    flash: f64,
    pulse: &crate::optics::PulseShape,
    rng: &mut ChaCha8Rng,
) -> bool {
    let amb = cfg.ambient_lux;
    let gain = jitter(rng, cfg.noise.amplitude_jitter);
    let mut flicker = Flicker::new(
        cfg.noise.ambient_flicker_sd * amb,
        cfg.noise.flicker_bandwidth,
        sim.dt,
    );
    let mut node = sim.dc_node(amb);
    let steps = ((PRE_ROLL + pulse.duration + TAIL) / sim.dt).ceil() as usize;
    for k in 1..=steps {
        let t = k as f64 * sim.dt - PRE_ROLL;
        let lux = (amb + flicker.next(rng)).max(0.0) + flash * gain * pulse.envelope(t);
        sim.advance(&mut node, lux, sim.dt);
        if t >= 0.0 && sim.is_awake(&node) {
            return true;
        }
    }
    false
}

fn pulse_design2(
    sim: &Design2Sim,
    cfg: &TrialConfig,
    irr: f64,
    pulse: &crate::optics::PulseShape,
    rng: &mut ChaCha8Rng,
    record: Option<usize>,
) -> (bool, Design2Trace) {
    let amb = cfg.ambient_lux;
    let gain = jitter(rng, cfg.noise.amplitude_jitter);
    let mut flicker = Flicker::new(
        cfg.noise.ambient_flicker_sd * amb,
        cfg.noise.flicker_bandwidth,
        sim.dt,
    );
    let mut node: Design2Node = sim.dc_node(amb);
    let mut trace = Design2Trace::default();
    let steps = ((PRE_ROLL + pulse.duration + TAIL) / sim.dt).ceil() as usize;
    for k in 1..=steps {
        let t = k as f64 * sim.dt - PRE_ROLL;
        let lux = (amb + flicker.next(rng)).max(0.0);
        sim.advance(&mut node, lux, irr * gain * pulse.envelope(t), sim.dt);
        if let Some(stride) = record {
            if t >= -TAIL && k % stride.max(1) == 0 {
                trace.t.push(t);
                trace.pt_current.push(node.i_pt);
                trace.ldr_resistance.push(node.r_ldr);
                trace.v_gate.push(sim.gate(&node));
            }
        }
        if t >= 0.0 && trace.detected_at.is_none() && sim.is_awake(&node) {
            trace.detected_at = Some(t);
            if record.is_none() {
                break;
            }
        }
    }
    (trace.detected_at.is_some(), trace)
}

/// Deterministic 64-bit mix used to derive per-cell seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the grid cell at (`lux`, `distance`).
pub fn cell_seed(base: u64, lux: f64, distance: f64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ lux.to_bits()) ^ distance.to_bits())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lux: f64,
    pub distance: f64,
    pub transmitted: u32,
    pub detected: u32,
}

impl GridCell {
    pub fn errors(&self) -> u32 {
        self.transmitted - self.detected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateReport {
    pub design: Design,
    pub seed: u64,
    pub calibration_id: String,
    /// Row-major over the lux list, then distances.
    pub cells: Vec<GridCell>,
}

impl ErrorRateReport {
    pub const HEADER: &'static str = "lux,distance_m,transmitted,detected,errors";

    pub fn cell(&self, lux: f64, distance: f64) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.lux == lux && (c.distance - distance).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                c.lux,
                c.distance,
                c.transmitted,
                c.detected,
                c.errors()
            ));
        }
        s
    }
}

/// Full factorial sweep of `run_trials` over lux × distance.
///
/// Cells are spread over the available cores; the result does not depend on
/// the thread count.
pub fn error_rate_grid(
    bench: &Bench,
    lux_list: &[f64],
    distance_list: &[f64],
    base: &TrialConfig,
) -> Result<ErrorRateReport> {
    let jobs: Vec<(f64, f64)> = lux_list
        .iter()
        .flat_map(|&l| distance_list.iter().map(move |&d| (l, d)))
        .collect();
    let run = |&(lux, d): &(f64, f64)| -> Result<GridCell> {
        let cfg = TrialConfig {
            ambient_lux: lux,
            distance: d,
            rng_seed: cell_seed(base.rng_seed, lux, d),
            ..base.clone()
        };
        let out = run_trials(bench, &cfg)?;
        Ok(GridCell {
            lux,
            distance: d,
            transmitted: out.transmitted,
            detected: out.detected,
        })
    };
    let cells = parallel_map(&jobs, run)?;
    Ok(ErrorRateReport {
        design: base.design,
        seed: base.rng_seed,
        calibration_id: bench.calibration.id.clone(),
        cells,
    })
}

/// Order-preserving map over scoped worker threads.
pub(crate) fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<R>>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}

/// Count false wake-ups of design 1 under `profile` with no flash present.
pub fn ambient_immunity_trial(
    bench: &Bench,
    profile: &AmbientProfile,
    duration: f64,
) -> Result<usize> {
    profile.validate()?;
    if !(duration > 0.0) {
        return Err(domain("duration must be > 0"));
    }
    let sim = Design1Sim::new(bench.calibration.design1.clone())?;
    let mut node: RcNode = sim.dc_node(ambient_at(profile, 0.0));
    Ok(sim.count_wakeups(&mut node, duration, |t| ambient_at(profile, t)))
}

/// Largest open-circuit-voltage slew [V/s] that design 1 absorbs anywhere in
/// `[lux_lo, lux_hi]` without waking.
///
/// A ramp of slope `s` in Voc displaces PMOS1's gate-source voltage from its
/// settled value by at most `s` times the divider time constant, so the bound
/// is the smallest settled margin to the wake threshold divided by the largest
/// time constant over the band.
pub fn immunity_slew_bound(netlist: &Design1Netlist, lux_lo: f64, lux_hi: f64) -> Result<f64> {
    netlist.validate()?;
    if !(lux_lo >= 0.0 && lux_hi >= lux_lo) {
        return Err(domain("band must satisfy 0 <= lux_lo <= lux_hi"));
    }
    const SAMPLES: usize = 65;
    let vgs_wake = netlist.wake_vgs();
    let mut margin = f64::INFINITY;
    let mut tau = 0.0_f64;
    for k in 0..SAMPLES {
        let lux = lux_lo + (lux_hi - lux_lo) * k as f64 / (SAMPLES - 1) as f64;
        let vgs = netlist.dc_node(lux).vgs_pmos1(netlist.r1);
        margin = margin.min(vgs - vgs_wake);
        tau = tau.max(netlist.adaptation_time_at(lux) / 5.0);
    }
    if !(margin > 0.0) {
        return Err(Error::Infeasible(format!(
            "receiver is awake at ambient somewhere in [{lux_lo}, {lux_hi}] lx"
        )));
    }
    Ok(margin / tau)
}

/// Distance of the race-condition demonstration [m].
pub const RACE_DISTANCE: f64 = 0.10;
pub const RACE_REPEATS: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RaceResult {
    pub lux: f64,
    pub repeats: u32,
    pub detected: u32,
    /// Traces of the first repeat, from just before the flash.
    pub trace: Design2Trace,
}

impl RaceResult {
    pub fn missed(&self) -> u32 {
        self.repeats - self.detected
    }
}

/// Design 2 flashes at `distance` under each ambient level, `repeats` seeded
/// pulses per level, with traces of PT current, LDR resistance and gate voltage.
pub fn race_condition_demo(
    bench: &Bench,
    lux_list: &[f64],
    distance: f64,
    repeats: u32,
    seed: u64,
    noise: NoiseModel,
) -> Result<Vec<RaceResult>> {
    let sim = Design2Sim::new(bench.calibration.design2.clone())?;
    let irr = bench.flash_irradiance(distance)?;
    let pulse = bench.source.pulse;
    let stride = ((20e-6 / sim.dt).round() as usize).max(1);
    lux_list
        .iter()
        .map(|&lux| {
            let cfg = TrialConfig {
                pulses: repeats,
                rng_seed: cell_seed(seed, lux, distance),
                noise,
                ..TrialConfig::new(Design::Two, lux, distance)
            };
            cfg.validate(pulse.duration)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let mut detected = 0;
            let mut first = None;
            for i in 0..repeats {
                let rec = if i == 0 { Some(stride) } else { None };
                let (hit, trace) = pulse_design2(&sim, &cfg, irr, &pulse, &mut rng, rec);
                detected += u32::from(hit);
                if i == 0 {
                    first = Some(trace);
                }
            }
            Ok(RaceResult {
                lux,
                repeats,
                detected,
                trace: first.unwrap_or_default(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandbyRow {
    pub lux: f64,
    pub current: f64,
    pub power: f64,
}

pub const STANDBY_HEADER: &str = "lux,current_a,power_w";

/// Settled supply current and power of design 1 per ambient level.
pub fn standby_sweep(netlist: &Design1Netlist, lux_list: &[f64]) -> Result<Vec<StandbyRow>> {
    netlist.validate()?;
    Ok(lux_list
        .iter()
        .map(|&lux| {
            let current = crate::circuit::standby_current(netlist, lux);
            StandbyRow {
                lux,
                current,
                power: current * netlist.supply_voltage,
            }
        })
        .collect())
}

/// Outcome of flashing a cell that is also harvesting through a PMIC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestConflict {
    /// Peak-to-peak cell voltage with the PMIC clamping it [V].
    pub pmic_vsc_pp: f64,
    /// Open-circuit response of the same cell to the same flash [V].
    pub unloaded_pp: f64,
    /// Detection through the divider when the cell is shared with the PMIC.
    pub pmic_detected: bool,
    /// Detection by a dedicated wake-up cell.
    pub dedicated_detected: bool,
}

impl HarvestConflict {
    pub fn ratio(&self) -> f64 {
        if self.unloaded_pp > 0.0 {
            self.pmic_vsc_pp / self.unloaded_pp
        } else {
            0.0
        }
    }
}

/// Flash a design 1 receiver whose cell also feeds a charging PMIC, and the
/// same flash on a dedicated cell.
pub fn harvest_conflict_demo(
    bench: &Bench,
    ambient: f64,
    distance: f64,
) -> Result<HarvestConflict> {
    let sim = Design1Sim::new(bench.calibration.design1.clone())?;
    let cell = &bench.calibration.design1.solar;
    let flash = bench.flash_lux(distance)?;
    let pulse = bench.source.pulse;
    let mut fe = HarvestFrontEnd::pmic(2.0);
    fe.validate()?;
    let dt = sim.dt;
    let lead = 1.0;

    // settle the PMIC setpoint and the divider on the clamped cell
    let (v0, _) = step_frontend(&mut fe, cell, ambient, dt);
    let mut node = RcNode {
        v_oc: v0,
        voc_target: v0,
        v_b1: v0 * sim.netlist.r2 / (sim.netlist.r1 + sim.netlist.r2),
        r_sc: 0.0,
    };
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut pmic_detected = false;
    let steps = ((lead + pulse.duration + TAIL) / dt).ceil() as usize;
    for k in 1..=steps {
        let t = k as f64 * dt - lead;
        let lux = ambient + flash * pulse.envelope(t);
        let (v, _) = step_frontend(&mut fe, cell, lux, dt);
        sim.advance_forced(&mut node, v, 0.0, dt);
        if t >= -TAIL {
            vmin = vmin.min(v);
            vmax = vmax.max(v);
            pmic_detected |= sim.is_awake(&node);
        }
    }
    let unloaded_pp = solar_voc(cell, ambient + flash) - solar_voc(cell, ambient);
    let dedicated = sim.detects_flash(ambient, flash, pulse.duration);
    Ok(HarvestConflict {
        pmic_vsc_pp: vmax - vmin,
        unloaded_pp,
        pmic_detected,
        dedicated_detected: dedicated.detected_at.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_cell() {
        let a = cell_seed(7, 400.0, 0.1);
        assert_ne!(a, cell_seed(7, 400.0, 0.15));
        assert_ne!(a, cell_seed(7, 800.0, 0.1));
        assert_ne!(a, cell_seed(8, 400.0, 0.1));
        assert_eq!(a, cell_seed(7, 400.0, 0.1));
    }

    #[test]
    fn design_serde_numeric() {
        assert_eq!(Design::try_from(2u8), Ok(Design::Two));
        assert!(Design::try_from(3u8).is_err());
        assert_eq!(u8::from(Design::One), 1);
    }

    #[test]
    fn short_warmup_is_refused() {
        let bench = Bench::default();
        let cfg = TrialConfig {
            warmup: Some(0.5),
            pulses: 1,
            ..TrialConfig::new(Design::One, 400.0, 0.1)
        };
        assert!(matches!(run_trials(&bench, &cfg), Err(Error::Unsettled(_))));
    }

    #[test]
    fn far_flash_is_never_detected() {
        let bench = Bench::default();
        for design in [Design::One, Design::Two] {
            let cfg = TrialConfig {
                pulses: 5,
                ..TrialConfig::new(design, 400.0, 50.0)
            };
            assert_eq!(run_trials(&bench, &cfg).unwrap().detected, 0);
        }
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<u64> = (0..50).collect();
        let out = parallel_map(&v, |x| Ok(x * 2)).unwrap();
        assert_eq!(out, (0..50).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn flicker_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dt = 1e-5;
        let mut f = Flicker::new(1.0, 100.0, dt);
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..2000 {
            f.next(&mut rng);
        }
        for _ in 0..n {
            let v = f.next(&mut rng);
            acc += v * v;
        }
        let sd = (acc / n as f64).sqrt();
        assert!((sd - 1.0).abs() < 0.15, "{sd}");
    }
}
