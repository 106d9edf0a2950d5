use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{splitmix64, Bench, Calibration};
use crate::circuit::{standby_current, Design1Sim};
use crate::devices::solar_voc;
use crate::error::{domain, Error, Result};

/// A measured quantity the model is fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Anchor {
    /// Open-circuit voltage of the wake-up cell.
    Voc { lux: f64, volts: f64 },
    /// Settled supply current of design 1.
    Standby { lux: f64, amps: f64 },
    /// Noise-free detection range must reach `distance` at every ambient level
    /// from `lux_lo` to `lux_hi`.
    ReliableRange {
        lux_lo: f64,
        lux_hi: f64,
        distance: f64,
    },
}

/// Headroom demanded above a reliable-range anchor so that noise does not
/// eat into it.
const RANGE_HEADROOM: f64 = 0.10;

impl Anchor {
    pub fn name(&self) -> String {
        match self {
            Anchor::Voc { lux, .. } => format!("voc@{lux}lx"),
            Anchor::Standby { lux, .. } => format!("standby@{lux}lx"),
            Anchor::ReliableRange {
                lux_lo,
                lux_hi,
                distance,
            } => {
                format!("range{distance}m@{lux_lo}-{lux_hi}lx")
            }
        }
    }

    /// Largest acceptable |residual|.
    pub fn tolerance(&self) -> f64 {
        match self {
            Anchor::Voc { .. } => 0.01,
            Anchor::Standby { .. } => 0.30,
            Anchor::ReliableRange { .. } => 0.02,
        }
    }

    /// Signed relative residual; range anchors are one-sided.
    pub fn residual(&self, bench: &Bench) -> Result<f64> {
        let cal = &bench.calibration;
        Ok(match *self {
            Anchor::Voc { lux, volts } => (solar_voc(&cal.design1.solar, lux) - volts) / volts,
            Anchor::Standby { lux, amps } => (standby_current(&cal.design1, lux) - amps) / amps,
            Anchor::ReliableRange {
                lux_lo,
                lux_hi,
                distance,
            } => {
                let mid = 0.5 * (lux_lo + lux_hi);
                let mut worst: f64 = 0.0;
                for lux in [lux_lo, mid, lux_hi] {
                    let d = reliable_range(bench, lux)?;
                    worst = worst.max((distance * (1.0 + RANGE_HEADROOM) - d) / distance);
                }
                worst
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Anchor::Voc { lux, volts } => lux >= 0.0 && volts > 0.0,
            Anchor::Standby { lux, amps } => lux >= 0.0 && amps > 0.0,
            Anchor::ReliableRange {
                lux_lo,
                lux_hi,
                distance,
            } => lux_lo >= 0.0 && lux_hi >= lux_lo && distance > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("anchor {} out of range", self.name())))
        }
    }
}

/// Voc at 400/1600 lx, standby at 0/1600 lx and the 25 cm reliable range.
pub fn default_anchors() -> Vec<Anchor> {
    vec![
        Anchor::Voc {
            lux: 400.0,
            volts: 0.60,
        },
        Anchor::Voc {
            lux: 1600.0,
            volts: 0.75,
        },
        Anchor::Standby {
            lux: 0.0,
            amps: 88.5e-12,
        },
        Anchor::Standby {
            lux: 1600.0,
            amps: 224e-9,
        },
        Anchor::ReliableRange {
            lux_lo: 400.0,
            lux_hi: 1600.0,
            distance: 0.25,
        },
    ]
}

/// Noise-free on-axis detection range of design 1 at `lux` [m].
pub fn reliable_range(bench: &Bench, lux: f64) -> Result<f64> {
    let sim = Design1Sim::new(bench.calibration.design1.clone())?;
    let threshold = sim.flash_threshold(lux, bench.source.pulse.duration);
    if !threshold.is_finite() {
        return Ok(0.0);
    }
    // flash lux falls as 1/d²
    let at_1m = bench.flash_lux(1.0)?;
    Ok((at_1m / threshold).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResidual {
    pub anchor: String,
    pub residual: f64,
    pub tolerance: f64,
}

/// Named parameter values and per-anchor residuals of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRecord {
    pub id: String,
    pub evaluations: usize,
    pub params: BTreeMap<String, f64>,
    pub residuals: Vec<AnchorResidual>,
}

/// Free parameters with their bounds and whether they are searched in log space.
pub const FREE_PARAMETERS: [(&str, f64, f64, bool); 8] = [
    ("pmos1.vgs_threshold", -1.2, -0.3, false),
    ("pmos1.subthreshold_swing", 0.065, 0.15, false),
    ("pmos1.off_current_floor", 1e-13, 1e-10, true),
    ("solar.r_span", 1e4, 1e7, true),
    ("solar.knee_lux", 10.0, 2000.0, true),
    ("solar.voc_a", -0.3, 0.3, false),
    ("solar.voc_b", 0.02, 0.3, false),
    ("flash_efficacy", 100.0, 1e5, true),
];

fn get(cal: &Calibration, name: &str) -> f64 {
    let d = &cal.design1;
    match name {
        "pmos1.vgs_threshold" => d.pmos1.vgs_threshold,
        "pmos1.subthreshold_swing" => d.pmos1.subthreshold_swing,
        "pmos1.off_current_floor" => d.pmos1.off_current_floor,
        "solar.r_span" => d.solar.series_resistance.r_span,
        "solar.knee_lux" => d.solar.series_resistance.knee_lux,
        "solar.voc_a" => d.solar.voc_a,
        "solar.voc_b" => d.solar.voc_b,
        "flash_efficacy" => cal.flash_efficacy,
        _ => unreachable!("unknown free parameter {name}"),
    }
}

fn set(cal: &mut Calibration, name: &str, v: f64) {
    let d = &mut cal.design1;
    match name {
        "pmos1.vgs_threshold" => d.pmos1.vgs_threshold = v,
        "pmos1.subthreshold_swing" => d.pmos1.subthreshold_swing = v,
        "pmos1.off_current_floor" => d.pmos1.off_current_floor = v,
        "solar.r_span" => d.solar.series_resistance.r_span = v,
        "solar.knee_lux" => d.solar.series_resistance.knee_lux = v,
        "solar.voc_a" => d.solar.voc_a = v,
        "solar.voc_b" => d.solar.voc_b = v,
        "flash_efficacy" => cal.flash_efficacy = v,
        _ => unreachable!("unknown free parameter {name}"),
    }
}

fn to_unit(v: f64, lo: f64, hi: f64, log: bool) -> f64 {
    let u = if log {
        (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
    } else {
        (v - lo) / (hi - lo)
    };
    u.clamp(0.0, 1.0)
}

fn from_unit(u: f64, lo: f64, hi: f64, log: bool) -> f64 {
    let u = u.clamp(0.0, 1.0);
    if log {
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    } else {
        lo + u * (hi - lo)
    }
}

impl CalibrationRecord {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("record serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            key: "calibration".into(),
            reason: e.message().to_string(),
        })
    }

    /// Apply the fitted values on top of `base`.
    pub fn apply(&self, base: &Calibration) -> Result<Calibration> {
        let mut cal = base.clone();
        for (name, &v) in &self.params {
            if !FREE_PARAMETERS.iter().any(|p| p.0 == name) {
                return Err(Error::Config {
                    key: name.clone(),
                    reason: "unknown calibration parameter".into(),
                });
            }
            set(&mut cal, name, v);
        }
        cal.id = self.id.clone();
        cal.validate()?;
        Ok(cal)
    }

    pub fn worst(&self) -> Option<&AnchorResidual> {
        self.residuals.iter().max_by(|a, b| {
            (a.residual.abs() / a.tolerance).total_cmp(&(b.residual.abs() / b.tolerance))
        })
    }
}

fn evaluate(bench: &Bench, anchors: &[Anchor]) -> Result<Vec<f64>> {
    anchors.iter().map(|a| a.residual(bench)).collect()
}

fn objective(res: &[f64], anchors: &[Anchor]) -> f64 {
    res.iter()
        .zip(anchors)
        .map(|(r, a)| (r / a.tolerance()).powi(2))
        .sum()
}

/// Bounded Nelder-Mead fit of [`FREE_PARAMETERS`] against `anchors`,
/// starting from `bench`.
///
/// Fails with the worst anchor when any residual stays above its tolerance.
pub fn calibrate(bench: &Bench, anchors: &[Anchor], max_evals: usize) -> Result<CalibrationRecord> {
    if anchors.is_empty() {
        return Err(domain("calibration needs at least one anchor"));
    }
    for a in anchors {
        a.validate()?;
    }
    let n = FREE_PARAMETERS.len();
    let build = |u: &[f64]| {
        let mut b = bench.clone();
        for (i, &(name, lo, hi, log)) in FREE_PARAMETERS.iter().enumerate() {
            set(&mut b.calibration, name, from_unit(u[i], lo, hi, log));
        }
        b
    };
    let evals = std::cell::Cell::new(0usize);
    let cost = |u: &[f64]| -> f64 {
        evals.set(evals.get() + 1);
        let b = build(u);
        if b.calibration.validate().is_err() {
            return f64::INFINITY;
        }
        match evaluate(&b, anchors) {
            Ok(r) => objective(&r, anchors),
            Err(_) => f64::INFINITY,
        }
    };

    let x0: Vec<f64> = FREE_PARAMETERS
        .iter()
        .map(|&(name, lo, hi, log)| to_unit(get(&bench.calibration, name), lo, hi, log))
        .collect();
    let mut simplex = vec![x0.clone()];
    for i in 0..n {
        let mut x = x0.clone();
        x[i] = if x[i] + 0.05 <= 1.0 {
            x[i] + 0.05
        } else {
            x[i] - 0.05
        };
        simplex.push(x);
    }
    let mut f: Vec<f64> = simplex.iter().map(|x| cost(x)).collect();

    while evals.get() < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        f = order.iter().map(|&i| f[i]).collect();
        if f[0] < 1e-12 || (f[n] - f[0]).abs() <= 1e-10 * (1.0 + f[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| (centroid[j] + t * (simplex[n][j] - centroid[j])).clamp(0.0, 1.0))
                .collect()
        };
        let xr = along(-1.0);
        let fr = cost(&xr);
        if fr < f[0] {
            let xe = along(-2.0);
            let fe = cost(&xe);
            if fe < fr {
                simplex[n] = xe;
                f[n] = fe;
            } else {
                simplex[n] = xr;
                f[n] = fr;
            }
        } else if fr < f[n - 1] {
            simplex[n] = xr;
            f[n] = fr;
        } else {
            let xc = if fr < f[n] { along(-0.5) } else { along(0.5) };
            let fc = cost(&xc);
            if fc < f[n].min(fr) {
                simplex[n] = xc;
                f[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n)
                        .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                        .collect();
                    f[i] = cost(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| f[a].total_cmp(&f[b]))
        .expect("non-empty simplex");
    let fitted = build(&simplex[best]);
    let res = evaluate(&fitted, anchors)?;

    let mut params = BTreeMap::new();
    let mut h = 0u64;
    for &(name, ..) in FREE_PARAMETERS.iter() {
        let v = get(&fitted.calibration, name);
        h = splitmix64(h ^ v.to_bits());
        params.insert(name.to_string(), v);
    }
    let record = CalibrationRecord {
        id: format!("cal-{h:016x}"),
        evaluations: evals.get(),
        params,
        residuals: anchors
            .iter()
            .zip(&res)
            .map(|(a, &r)| AnchorResidual {
                anchor: a.name(),
                residual: r,
                tolerance: a.tolerance(),
            })
            .collect(),
    };
    if let Some(w) = record.worst() {
        if w.residual.abs() > w.tolerance {
            return Err(Error::Calibration {
                anchor: w.anchor.clone(),
                residual: w.residual,
                tolerance: w.tolerance,
            });
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_anchor_set_is_rejected() {
        assert!(matches!(
            calibrate(&Bench::default(), &[], 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn contradictory_anchors_fail_with_worst_anchor() {
        let anchors = [
            Anchor::Voc {
                lux: 400.0,
                volts: 0.6,
            },
            Anchor::Voc {
                lux: 400.0,
                volts: 0.7,
            },
        ];
        match calibrate(&Bench::default(), &anchors, 300) {
            Err(Error::Calibration {
                anchor,
                residual,
                tolerance,
            }) => {
                assert!(anchor.starts_with("voc@400"));
                assert!(residual.abs() > tolerance);
            }
            other => panic!("expected a calibration failure, got {other:?}"),
        }
    }

    #[test]
    fn unit_mapping_round_trips() {
        for &(_, lo, hi, log) in FREE_PARAMETERS.iter() {
            let mid = if log {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
            let u = to_unit(mid, lo, hi, log);
            assert!((from_unit(u, lo, hi, log) - mid).abs() <= 1e-9 * mid.abs().max(1e-12));
        }
    }

    #[test]
    fn record_toml_round_trip() {
        let mut params = BTreeMap::new();
        params.insert("flash_efficacy".to_string(), 1234.5);
        let rec = CalibrationRecord {
            id: "cal-x".into(),
            evaluations: 3,
            params,
            residuals: vec![AnchorResidual {
                anchor: "voc@400lx".into(),
                residual: 1e-4,
                tolerance: 0.01,
            }],
        };
        let back = CalibrationRecord::from_toml(&rec.to_toml()).unwrap();
        assert_eq!(back, rec);
        let cal = back.apply(&Calibration::default()).unwrap();
        assert_eq!(cal.flash_efficacy, 1234.5);
        assert_eq!(cal.id, "cal-x");
    }
}
