//! Behavioral photodetector and switch models.
//!
//! Each model is reduced to what the wake-up circuits consume: an open-circuit
//! voltage and source resistance for the solar cell, a collector current for the
//! phototransistor, a relaxing resistance for the LDR and a three-region channel
//! current for the MOSFETs.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_10;

use crate::error::{domain, Result};
use crate::optics::DEFAULT_EFFICACY;

/// Drain-source voltage scale over which a channel current reaches saturation [V].
pub const VDS_SAT: f64 = 0.05;

/// Smooth upper bound on the open-circuit voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocSaturation {
    /// Asymptotic open-circuit voltage [V].
    pub v_max: f64,
    /// Width of the soft-min transition [V].
    pub softness: f64,
}

/// Series resistance of the cell as a function of illuminance:
/// `r_min + r_span / (1 + lux / knee_lux)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesResistance {
    pub r_min: f64,
    pub r_span: f64,
    pub knee_lux: f64,
}

impl Default for SeriesResistance {
    // 200 kΩ in the dark, 20 kΩ at 1600 lx
    fn default() -> Self {
        Self {
            r_min: 10e3,
            r_span: 190e3,
            knee_lux: 1600.0 / 18.0,
        }
    }
}

impl SeriesResistance {
    pub fn at(&self, lux: f64) -> f64 {
        self.r_min + self.r_span / (1.0 + lux.max(0.0) / self.knee_lux)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarCellModel {
    /// Active area [mm²].
    pub area: f64,
    /// Log-law intercept [V].
    pub voc_a: f64,
    /// Log-law slope [V per e-fold of lux].
    pub voc_b: f64,
    #[serde(default)]
    pub saturation: Option<VocSaturation>,
    #[serde(default)]
    pub series_resistance: SeriesResistance,
    /// Response time at `response_area_ref` [s].
    pub response_time_ref: f64,
    /// Reference area [mm²].
    pub response_area_ref: f64,
    /// Area the series resistance curve is quoted for [mm²].
    pub resistance_area_ref: f64,
}

/// Open-circuit voltage anchors of the 8 mm × 10 mm wake-up cell.
pub const VOC_ANCHORS: [(f64, f64); 2] = [(400.0, 0.60), (1600.0, 0.75)];

impl Default for SolarCellModel {
    fn default() -> Self {
        let (a, b) = fit_log_law(VOC_ANCHORS[0], VOC_ANCHORS[1]);
        Self {
            area: 80.0,
            voc_a: a,
            voc_b: b,
            saturation: None,
            series_resistance: SeriesResistance::default(),
            response_time_ref: 1e-3,
            response_area_ref: 375.0,
            resistance_area_ref: 80.0,
        }
    }
}

/// Coefficients `(a, b)` of `a + b ln(lux)` through two points.
pub fn fit_log_law(p1: (f64, f64), p2: (f64, f64)) -> (f64, f64) {
    let b = (p2.1 - p1.1) / (p2.0 / p1.0).ln();
    (p1.1 - b * p1.0.ln(), b)
}

impl SolarCellModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.response_area_ref > 0.0 && self.resistance_area_ref > 0.0) {
            return Err(domain("solar cell areas must be > 0"));
        }
        if !(self.voc_b >= 0.0) {
            return Err(domain("voc_b must be >= 0 so Voc is non-decreasing"));
        }
        if !(self.response_time_ref > 0.0) {
            return Err(domain("response_time_ref must be > 0"));
        }
        let r = &self.series_resistance;
        if !(r.r_min > 0.0 && r.r_span >= 0.0 && r.knee_lux > 0.0) {
            return Err(domain("series resistance curve parameters out of range"));
        }
        if let Some(s) = self.saturation {
            if !(s.v_max > 0.0 && s.softness > 0.0) {
                return Err(domain("saturation parameters must be > 0"));
            }
        }
        Ok(())
    }

    /// Calibrated 8 mm × 10 mm wake-up cell: Voc saturating near 0.79 V and a
    /// series resistance of about 1 MΩ in the dark.
    pub fn wake_up_cell() -> Self {
        let mut m = Self {
            saturation: Some(VocSaturation {
                v_max: 0.79,
                softness: 0.005,
            }),
            series_resistance: SeriesResistance {
                r_min: 20e3,
                r_span: 1e6,
                knee_lux: 100.0,
            },
            ..Self::default()
        };
        m.refit_anchors(VOC_ANCHORS[0], VOC_ANCHORS[1]);
        m
    }

    /// Same cell technology with a different area.
    pub fn with_area(&self, area: f64) -> Self {
        Self {
            area,
            ..self.clone()
        }
    }

    /// Refit `voc_a`/`voc_b` so that the (possibly saturated) law passes
    /// through both anchors.
    pub fn refit_anchors(&mut self, p1: (f64, f64), p2: (f64, f64)) {
        let (a, b) = fit_log_law(p1, p2);
        self.voc_a = a;
        self.voc_b = b;
        if self.saturation.is_none() {
            return;
        }
        // 2x2 Newton on the two anchor residuals.
        for _ in 0..50 {
            let r = |m: &Self| [solar_voc(m, p1.0) - p1.1, solar_voc(m, p2.0) - p2.1];
            let r0 = r(self);
            if r0[0].abs() < 1e-13 && r0[1].abs() < 1e-13 {
                break;
            }
            let h = 1e-7;
            let mut ma = self.clone();
            ma.voc_a += h;
            let ra = r(&ma);
            let mut mb = self.clone();
            mb.voc_b += h;
            let rb = r(&mb);
            let j = [
                [(ra[0] - r0[0]) / h, (rb[0] - r0[0]) / h],
                [(ra[1] - r0[1]) / h, (rb[1] - r0[1]) / h],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                break;
            }
            let da = (r0[0] * j[1][1] - r0[1] * j[0][1]) / det;
            let db = (j[0][0] * r0[1] - j[1][0] * r0[0]) / det;
            self.voc_a -= da;
            self.voc_b -= db;
        }
    }

    /// Source resistance at this area; resistance scales inversely with area.
    pub fn series_resistance_at(&self, lux: f64) -> f64 {
        self.series_resistance.at(lux) * self.resistance_area_ref / self.area
    }
}

/// Open-circuit voltage of the cell at `lux`.
///
/// Log-law above 1 lx, linear to zero below, optionally soft-clipped at `v_max`.
pub fn solar_voc(model: &SolarCellModel, lux: f64) -> f64 {
    let lux = lux.max(0.0);
    let raw = if lux >= 1.0 {
        model.voc_a + model.voc_b * lux.ln()
    } else {
        model.voc_a.max(0.0) * lux
    };
    let raw = raw.max(0.0);
    match model.saturation {
        None => raw,
        Some(VocSaturation { v_max, softness }) => {
            // soft minimum of raw and v_max, evaluated stably
            let lo = raw.min(v_max);
            let hi = raw.max(v_max);
            let v = lo - softness * (1.0 + (-(hi - lo) / softness).exp()).ln();
            v.max(0.0)
        }
    }
}

/// Response time scaled linearly with area (junction capacitance ∝ area).
pub fn solar_response_time(model: &SolarCellModel) -> f64 {
    model.response_time_ref * model.area / model.response_area_ref
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhototransistorModel {
    /// [mm²]
    pub sensitive_area: f64,
    /// Collector current per W/m² at the package [A·m²/W].
    pub responsivity: f64,
    pub response_time_on: f64,
    pub response_time_off: f64,
    /// Transmission of the coating foil, 1 = uncoated.
    pub coating_attenuation: f64,
    /// Converts ambient lux into an equivalent irradiance [lm/W].
    pub ambient_efficacy: f64,
}

/// Uncoated collector current at 500 lx of ambient light.
pub const PT_ANCHOR: (f64, f64) = (500.0, 100e-6);

impl Default for PhototransistorModel {
    fn default() -> Self {
        Self {
            sensitive_area: 0.29,
            responsivity: PT_ANCHOR.1 / (PT_ANCHOR.0 / DEFAULT_EFFICACY),
            response_time_on: 20e-6,
            response_time_off: 60e-6,
            coating_attenuation: 1.0,
            ambient_efficacy: DEFAULT_EFFICACY,
        }
    }
}

impl PhototransistorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sensitive_area > 0.0 && self.responsivity > 0.0 && self.ambient_efficacy > 0.0) {
            return Err(domain(
                "phototransistor area, responsivity and efficacy must be > 0",
            ));
        }
        for t in [self.response_time_on, self.response_time_off] {
            if !(5e-6..=90e-6).contains(&t) {
                return Err(domain(
                    "phototransistor response times must lie in [5 µs, 90 µs]",
                ));
            }
        }
        if !(self.coating_attenuation > 0.0 && self.coating_attenuation <= 1.0) {
            return Err(domain("coating_attenuation must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Steady collector current for a flash irradiance on top of ambient light.
pub fn pt_collector_current(
    model: &PhototransistorModel,
    irradiance: f64,
    ambient_lux: f64,
) -> f64 {
    let equiv = irradiance.max(0.0) + ambient_lux.max(0.0) / model.ambient_efficacy;
    model.responsivity * model.coating_attenuation * equiv
}

/// Resistance curve `r_dark ∥ r_100 (lux / 100)^-gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdrCurve {
    pub r_100: f64,
    pub gamma: f64,
    pub r_dark: f64,
}

impl Default for LdrCurve {
    // 10 kΩ at 100 lx down to 0.5 kΩ at 1600 lx
    fn default() -> Self {
        Self {
            r_100: 10e3,
            gamma: 20f64.ln() / 16f64.ln(),
            r_dark: 10e6,
        }
    }
}

impl LdrCurve {
    pub fn at(&self, lux: f64) -> f64 {
        let lux = lux.max(0.0);
        if lux == 0.0 {
            return self.r_dark;
        }
        let g_light = (lux / 100.0).powf(self.gamma) / self.r_100;
        1.0 / (1.0 / self.r_dark + g_light)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdrModel {
    pub resistance_curve: LdrCurve,
    pub tau_fall: f64,
    pub tau_rise: f64,
    pub coating_attenuation: f64,
}

impl Default for LdrModel {
    fn default() -> Self {
        Self {
            resistance_curve: LdrCurve::default(),
            tau_fall: 10e-3,
            tau_rise: 1.5,
            coating_attenuation: 1.0,
        }
    }
}

impl LdrModel {
    pub fn validate(&self) -> Result<()> {
        let c = &self.resistance_curve;
        if !(c.r_100 > 0.0 && c.gamma > 0.0 && c.r_dark > 0.0) {
            return Err(domain("LDR curve parameters must be > 0"));
        }
        if !(self.tau_fall > 0.0 && self.tau_fall < self.tau_rise) {
            return Err(domain("LDR requires 0 < tau_fall < tau_rise"));
        }
        if !(self.coating_attenuation > 0.0 && self.coating_attenuation <= 1.0) {
            return Err(domain("coating_attenuation must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Steady-state resistance behind the coating.
    pub fn target(&self, lux: f64) -> f64 {
        self.resistance_curve.at(lux * self.coating_attenuation)
    }
}

/// Advance the LDR resistance by `dt` under constant `lux`.
///
/// Relaxation is first order in conductance, which keeps the trajectory on one
/// side of the target. Brightening uses `tau_fall`, darkening `tau_rise`.
pub fn ldr_resistance_step(model: &LdrModel, r_now: f64, lux: f64, dt: f64) -> f64 {
    let target = model.target(lux);
    let tau = if target < r_now {
        model.tau_fall
    } else {
        model.tau_rise
    };
    let g_now = 1.0 / r_now;
    let g_target = 1.0 / target;
    let g = g_target + (g_now - g_target) * (-dt / tau).exp();
    1.0 / g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    N,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosfetParams {
    pub polarity: Polarity,
    /// Negative for P-channel.
    pub vgs_threshold: f64,
    /// [V/decade]
    pub subthreshold_swing: f64,
    pub off_current_floor: f64,
    pub on_resistance: f64,
    /// Channel current at zero overdrive.
    pub threshold_current: f64,
}

impl MosfetParams {
    pub fn nmos() -> Self {
        Self {
            polarity: Polarity::N,
            vgs_threshold: 0.5,
            subthreshold_swing: 0.090,
            off_current_floor: 10e-12,
            on_resistance: 3.0,
            threshold_current: 10e-6,
        }
    }

    pub fn pmos() -> Self {
        Self {
            polarity: Polarity::P,
            vgs_threshold: -0.45,
            subthreshold_swing: 0.090,
            off_current_floor: 10e-12,
            on_resistance: 1.5,
            threshold_current: 10e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.polarity {
            Polarity::N if !(self.vgs_threshold > 0.0) => {
                return Err(domain("N-channel threshold must be > 0"))
            }
            Polarity::P if !(self.vgs_threshold < 0.0) => {
                return Err(domain("P-channel threshold must be < 0"))
            }
            _ => {}
        }
        if !(self.subthreshold_swing > 0.0
            && self.off_current_floor >= 0.0
            && self.on_resistance > 0.0
            && self.threshold_current > 0.0)
        {
            return Err(domain(
                "MOSFET swing, floor, on-resistance and knee current out of range",
            ));
        }
        Ok(())
    }

    /// Gate overdrive, positive when the channel is beyond threshold.
    pub fn overdrive(&self, vgs: f64) -> f64 {
        match self.polarity {
            Polarity::N => vgs - self.vgs_threshold,
            Polarity::P => self.vgs_threshold - vgs,
        }
    }

    /// Channel current before the drain-voltage and on-resistance limits.
    fn channel_drive(&self, overdrive: f64) -> f64 {
        let s = self.subthreshold_swing;
        let i0 = self.threshold_current;
        if overdrive < 0.0 {
            (i0 * 10f64.powf(overdrive / s)).max(self.off_current_floor)
        } else {
            // square law with value and slope matched to the exponential at zero overdrive
            let k = 1.0 + overdrive * LN_10 / (2.0 * s);
            i0 * k * k
        }
    }
}

/// Magnitude of the channel current.
///
/// Off: the leakage floor. Subthreshold: one decade per `subthreshold_swing`.
/// On: square-law drive capped by `|vds| / on_resistance`. Every branch is
/// scaled by `1 - exp(-|vds| / VDS_SAT)` so no current flows without a bias.
pub fn mosfet_current(params: &MosfetParams, vgs: f64, vds: f64) -> f64 {
    let vds = vds.abs();
    let drive = params.channel_drive(params.overdrive(vgs));
    let sat = 1.0 - (-vds / VDS_SAT).exp();
    (drive * sat).min(vds / params.on_resistance)
}
