//! LED-to-detector link budget and ambient illumination profiles.
//!
//! The transmitter is a generalized Lambertian emitter whose order is set by
//! its half-intensity viewing angle. Ambient light is a piecewise profile in
//! lux that is evaluated independently of the flash.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Default luminous efficacy of the white LED flash [lm/W].
pub const DEFAULT_EFFICACY: f64 = 300.0;

/// Radiant flux of the bench transmitter [W].
pub const DEFAULT_OPTICAL_POWER: f64 = 0.020;

/// Full viewing angle of the bench transmitter [deg].
pub const DEFAULT_VIEWING_ANGLE: f64 = 120.0;

/// Default flash duration [s].
pub const DEFAULT_PULSE_DURATION: f64 = 0.050;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PulseProfile {
    Rectangular,
    Trapezoidal { rise: f64, fall: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Seconds.
    pub duration: f64,
    pub profile: PulseProfile,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self {
            duration: DEFAULT_PULSE_DURATION,
            profile: PulseProfile::Rectangular,
        }
    }
}

impl PulseShape {
    pub fn rectangular(duration: f64) -> Result<Self> {
        let p = Self {
            duration,
            profile: PulseProfile::Rectangular,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(domain("pulse duration must be > 0"));
        }
        if let PulseProfile::Trapezoidal { rise, fall } = self.profile {
            if rise < 0.0 || fall < 0.0 || rise + fall > self.duration {
                return Err(domain("pulse rise + fall must fit inside the duration"));
            }
        }
        Ok(())
    }

    /// Relative emitted amplitude in [0, 1] at `t` seconds after the pulse starts.
    pub fn envelope(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.duration {
            return 0.0;
        }
        match self.profile {
            PulseProfile::Rectangular => 1.0,
            PulseProfile::Trapezoidal { rise, fall } => {
                if rise > 0.0 && t < rise {
                    t / rise
                } else if fall > 0.0 && t > self.duration - fall {
                    (self.duration - t) / fall
                } else {
                    1.0
                }
            }
        }
    }
}

/// LED transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalSource {
    /// Radiant flux [W].
    pub optical_power: f64,
    /// Full angle at half intensity [deg].
    pub viewing_angle: f64,
    /// Position [m]; 2D positions use z = 0.
    pub position: [f64; 3],
    /// Unit vector along the optical axis.
    pub orientation: [f64; 3],
    pub pulse: PulseShape,
}

impl Default for OpticalSource {
    fn default() -> Self {
        Self {
            optical_power: DEFAULT_OPTICAL_POWER,
            viewing_angle: DEFAULT_VIEWING_ANGLE,
            position: [0.0; 3],
            orientation: [1.0, 0.0, 0.0],
            pulse: PulseShape::default(),
        }
    }
}

impl OpticalSource {
    pub fn validate(&self) -> Result<()> {
        if !(self.optical_power > 0.0) {
            return Err(domain("optical_power must be > 0"));
        }
        if !(self.viewing_angle > 0.0 && self.viewing_angle < 180.0) {
            return Err(domain("viewing_angle must lie in (0, 180) degrees"));
        }
        if norm(self.orientation) == 0.0 {
            return Err(domain("orientation must be a non-zero vector"));
        }
        self.pulse.validate()
    }
}

/// Geometry of a single line-of-sight link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub distance: f64,
    /// Degrees off the source axis.
    pub emission_angle: f64,
    /// Degrees off the detector normal.
    pub incidence_angle: f64,
}

impl LinkGeometry {
    pub fn line_of_sight(distance: f64) -> Self {
        Self {
            distance,
            emission_angle: 0.0,
            incidence_angle: 0.0,
        }
    }

    /// Geometry between a source and a detector with the given normal.
    ///
    /// Angles beyond 90° are clamped to 90°, which zeroes the irradiance.
    pub fn between(
        source_pos: [f64; 3],
        source_axis: [f64; 3],
        detector_pos: [f64; 3],
        detector_normal: [f64; 3],
    ) -> Result<Self> {
        let d = sub(detector_pos, source_pos);
        let dist = norm(d);
        if dist <= 0.0 {
            return Err(domain("source and detector coincide"));
        }
        let emission = angle_deg(source_axis, d);
        let incidence = angle_deg(detector_normal, scale(d, -1.0));
        Ok(Self {
            distance: dist,
            emission_angle: emission.min(90.0),
            incidence_angle: incidence.min(90.0),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance > 0.0) {
            return Err(domain("distance must be > 0"));
        }
        for a in [self.emission_angle, self.incidence_angle] {
            if !(0.0..=90.0).contains(&a) {
                return Err(domain("link angles must lie in [0, 90] degrees"));
            }
        }
        Ok(())
    }
}

/// Generalized Lambertian order for a full half-intensity viewing angle.
pub fn lambertian_order(viewing_angle: f64) -> Result<f64> {
    if !(viewing_angle > 0.0 && viewing_angle < 180.0) {
        return Err(domain(format!(
            "viewing angle {viewing_angle} deg outside (0, 180)"
        )));
    }
    let half = (viewing_angle / 2.0).to_radians();
    Ok(-std::f64::consts::LN_2 / half.cos().ln())
}

/// Radiant intensity pattern normalised so that the hemisphere integral equals `power`.
pub(crate) fn radiant_intensity(power: f64, order: f64, theta: f64) -> f64 {
    (order + 1.0) * power / (2.0 * PI) * theta.cos().max(0.0).powf(order)
}

/// Irradiance at the detector [W/m²].
pub fn irradiance(source: &OpticalSource, geom: &LinkGeometry) -> Result<f64> {
    source.validate()?;
    geom.validate()?;
    let m = lambertian_order(source.viewing_angle)?;
    let intensity = radiant_intensity(source.optical_power, m, geom.emission_angle.to_radians());
    let cos_in = geom.incidence_angle.to_radians().cos().max(0.0);
    Ok(intensity / (geom.distance * geom.distance) * cos_in)
}

pub fn illuminance_from_irradiance(e: f64, efficacy: f64) -> Result<f64> {
    if e < 0.0 {
        return Err(domain("irradiance must be >= 0"));
    }
    if !(efficacy > 0.0) {
        return Err(domain("efficacy must be > 0"));
    }
    Ok(e * efficacy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SegmentKind {
    Constant {
        lux: f64,
    },
    /// Linear change from `from` to `to` over `duration` seconds, then held.
    LinearRamp {
        from: f64,
        to: f64,
        duration: f64,
    },
    Step {
        lux: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientSegment {
    pub start: f64,
    #[serde(flatten)]
    pub kind: SegmentKind,
}

/// Time-varying background illuminance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientProfile {
    pub segments: Vec<AmbientSegment>,
}

impl AmbientProfile {
    pub fn constant(lux: f64) -> Self {
        Self {
            segments: vec![AmbientSegment {
                start: 0.0,
                kind: SegmentKind::Constant { lux },
            }],
        }
    }

    pub fn ramp(from: f64, to: f64, duration: f64) -> Self {
        Self {
            segments: vec![AmbientSegment {
                start: 0.0,
                kind: SegmentKind::LinearRamp { from, to, duration },
            }],
        }
    }

    /// Constant `before` until `at`, then `after`.
    pub fn step(before: f64, after: f64, at: f64) -> Self {
        Self {
            segments: vec![
                AmbientSegment {
                    start: 0.0,
                    kind: SegmentKind::Constant { lux: before },
                },
                AmbientSegment {
                    start: at,
                    kind: SegmentKind::Step { lux: after },
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(domain("ambient profile has no segments"));
        }
        for w in self.segments.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(domain("ambient segments must be strictly time-ordered"));
            }
        }
        for s in &self.segments {
            if !s.start.is_finite() {
                return Err(domain("segment start must be finite"));
            }
            let ok = match s.kind {
                SegmentKind::Constant { lux } | SegmentKind::Step { lux } => lux >= 0.0,
                SegmentKind::LinearRamp { from, to, duration } => {
                    from >= 0.0 && to >= 0.0 && duration > 0.0
                }
            };
            if !ok {
                return Err(domain(
                    "ambient lux must be >= 0 and ramps need duration > 0",
                ));
            }
            if let SegmentKind::LinearRamp { duration, .. } = s.kind {
                let end = s.start + duration;
                if let Some(next) = self.segments.iter().find(|n| n.start > s.start) {
                    if end > next.start + 1e-12 {
                        return Err(domain("ramp overlaps the following segment"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest absolute lux slew rate anywhere in the profile [lx/s]; steps count as infinite.
    pub fn max_slew(&self) -> f64 {
        let mut slew: f64 = 0.0;
        let mut prev_end: Option<f64> = None;
        for s in &self.segments {
            let start_val = s.kind.start_value();
            if let Some(p) = prev_end {
                if (p - start_val).abs() > 0.0 {
                    return f64::INFINITY;
                }
            }
            if let SegmentKind::LinearRamp { from, to, duration } = s.kind {
                slew = slew.max((to - from).abs() / duration);
            }
            prev_end = Some(s.kind.end_value());
        }
        slew
    }
}

impl SegmentKind {
    fn start_value(&self) -> f64 {
        match *self {
            SegmentKind::Constant { lux } | SegmentKind::Step { lux } => lux,
            SegmentKind::LinearRamp { from, .. } => from,
        }
    }

    fn end_value(&self) -> f64 {
        match *self {
            SegmentKind::Constant { lux } | SegmentKind::Step { lux } => lux,
            SegmentKind::LinearRamp { to, .. } => to,
        }
    }
}

/// Ambient illuminance at time `t`.
///
/// A segment takes effect exactly at its start time. Before the first segment
/// the first segment's start value is returned.
pub fn ambient_at(profile: &AmbientProfile, t: f64) -> f64 {
    let Some(first) = profile.segments.first() else {
        return 0.0;
    };
    let idx = profile.segments.partition_point(|s| s.start <= t);
    if idx == 0 {
        return first.kind.start_value().max(0.0);
    }
    let seg = &profile.segments[idx - 1];
    let v = match seg.kind {
        SegmentKind::Constant { lux } | SegmentKind::Step { lux } => lux,
        SegmentKind::LinearRamp { from, to, duration } => {
            let u = ((t - seg.start) / duration).clamp(0.0, 1.0);
            from + (to - from) * u
        }
    };
    v.max(0.0)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: [f64; 3], k: f64) -> [f64; 3] {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
    c.clamp(-1.0, 1.0).acos().to_degrees()
}
