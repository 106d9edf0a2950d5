//! Design-space sweep over the divider and adaptation capacitor of design 1.

use serde::{Deserialize, Serialize};

use crate::circuit::standby_current;
use crate::error::{domain, Error, Result};
use crate::experiments::{parallel_map, reliable_range, Bench};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxRange,
    MinStandby,
    Pareto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub c1: Vec<f64>,
    pub objective: Objective,
    /// Lower bound on the adaptation time over the band [s].
    pub min_adaptation_time: f64,
    /// Illuminance band over which the adaptation time is checked [lx].
    pub band: [f64; 2],
    /// A candidate's range is its smallest reliable range over these levels.
    pub reference_lux: Vec<f64>,
    /// Level at which standby current is compared [lx].
    pub standby_lux: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r1: vec![0.68e6, 1.33e6, 2.2e6],
            r2: vec![0.56e6, 1.13e6, 2.2e6],
            c1: vec![100e-9, 470e-9, 1e-6],
            objective: Objective::Pareto,
            min_adaptation_time: 1.0,
            band: [0.0, 1600.0],
            reference_lux: vec![400.0, 1600.0],
            standby_lux: 1600.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r1", &self.r1), ("r2", &self.r2), ("c1", &self.c1)] {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(domain(format!(
                    "{name} must be a non-empty list of values > 0"
                )));
            }
        }
        if self.reference_lux.is_empty() || self.reference_lux.iter().any(|x| !(*x >= 0.0)) {
            return Err(domain(
                "reference_lux must be a non-empty list of values >= 0",
            ));
        }
        if !(self.band[0] >= 0.0 && self.band[1] >= self.band[0] && self.standby_lux >= 0.0) {
            return Err(domain("band must be ordered and non-negative"));
        }
        if !(self.min_adaptation_time >= 0.0) {
            return Err(domain("min_adaptation_time must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub r1: f64,
    pub r2: f64,
    pub c1: f64,
    /// Smallest adaptation time over the band [s].
    pub t_amb: f64,
    /// Smallest reliable range over the reference levels [m].
    pub range: f64,
    pub standby: f64,
    pub feasible: bool,
    /// First violated constraint, empty when feasible.
    pub violation: &'static str,
}

impl Candidate {
    /// True if `self` is at least as good on both axes and better on one.
    pub fn dominates(&self, other: &Candidate) -> bool {
        self.range >= other.range
            && self.standby <= other.standby
            && (self.range > other.range || self.standby < other.standby)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub objective: Objective,
    /// Every candidate in grid order.
    pub candidates: Vec<Candidate>,
    /// Feasible candidates selected by the objective, best first.
    pub ranked: Vec<Candidate>,
}

pub const SWEEP_HEADER: &str = "rank,r1,r2,c1,t_amb_s,range_m,standby_a,feasible,violation";

/// Ambient levels across the band at which a candidate must stay asleep.
const BAND_CHECKS: usize = 9;

impl SweepReport {
    /// All candidates; ranked ones carry their rank, the rest an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for c in &self.candidates {
            let rank = self
                .ranked
                .iter()
                .position(|r| r == c)
                .map(|k| (k + 1).to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{rank},{},{},{},{},{},{},{},{}\n",
                c.r1, c.r2, c.c1, c.t_amb, c.range, c.standby, c.feasible, c.violation
            ));
        }
        out
    }
}

/// Evaluate the grid and rank feasible designs by `cfg.objective`.
pub fn sweep(bench: &Bench, cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut grid = Vec::new();
    for &r1 in &cfg.r1 {
        for &r2 in &cfg.r2 {
            for &c1 in &cfg.c1 {
                grid.push((r1, r2, c1));
            }
        }
    }
    let candidates = parallel_map(&grid, |&(r1, r2, c1)| -> Result<Candidate> {
        let mut b = bench.clone();
        let n = &mut b.calibration.design1;
        n.r1 = r1;
        n.r2 = r2;
        n.c1 = c1;
        n.validate()?;
        let t_amb = n.min_adaptation_time(cfg.band[0], cfg.band[1]);
        let standby = standby_current(n, cfg.standby_lux);
        let [lo, hi] = cfg.band;
        let awake = (0..BAND_CHECKS).any(|k| {
            let lux = lo + (hi - lo) * k as f64 / (BAND_CHECKS - 1) as f64;
            n.steady_state(lux).mcu_connected
        });
        let mut range = f64::INFINITY;
        for &lux in &cfg.reference_lux {
            range = range.min(reliable_range(&b, lux)?);
        }
        let violation = if awake {
            "awake_at_ambient"
        } else if t_amb < cfg.min_adaptation_time {
            "t_amb_below_minimum"
        } else if !(range > 0.0) {
            "never_wakes"
        } else {
            ""
        };
        Ok(Candidate {
            r1,
            r2,
            c1,
            t_amb,
            range,
            standby,
            feasible: violation.is_empty(),
            violation,
        })
    })?;

    let mut feasible: Vec<Candidate> = candidates.iter().copied().filter(|c| c.feasible).collect();
    if feasible.is_empty() {
        let mut near = candidates.clone();
        // closest to satisfying the adaptation bound first
        near.sort_by(|a, b| b.t_amb.total_cmp(&a.t_amb));
        let diag: Vec<String> = near
            .iter()
            .take(3)
            .map(|c| {
                format!(
                    "r1={} r2={} c1={} t_amb={:.3} s (bound {} s) range={:.3} m: {}",
                    c.r1, c.r2, c.c1, c.t_amb, cfg.min_adaptation_time, c.range, c.violation
                )
            })
            .collect();
        return Err(Error::Infeasible(format!(
            "nearest candidates: {}",
            diag.join("; ")
        )));
    }
    let by_range = |a: &Candidate, b: &Candidate| {
        b.range
            .total_cmp(&a.range)
            .then(a.standby.total_cmp(&b.standby))
    };
    match cfg.objective {
        Objective::MaxRange => feasible.sort_by(by_range),
        Objective::MinStandby => feasible.sort_by(|a, b| {
            a.standby
                .total_cmp(&b.standby)
                .then(b.range.total_cmp(&a.range))
        }),
        Objective::Pareto => {
            let all = feasible.clone();
            feasible.retain(|c| !all.iter().any(|o| o.dominates(c)));
            feasible.sort_by(by_range);
        }
    }
    Ok(SweepReport {
        objective: cfg.objective,
        candidates,
        ranked: feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            r1: vec![1.33e6],
            r2: vec![1.13e6],
            c1: vec![100e-9, 470e-9, 1e-6],
            reference_lux: vec![400.0],
            ..SweepConfig::default()
        }
    }

    #[test]
    fn adaptation_time_scales_with_c1() {
        let rep = sweep(&Bench::default(), &small()).unwrap();
        let t: Vec<f64> = rep.candidates.iter().map(|c| c.t_amb).collect();
        assert!((t[1] / t[0] - 4.7).abs() < 1e-9);
        assert!((t[2] / t[0] - 10.0).abs() < 1e-9);
        // the bench triple is feasible and the 100 nF variant is not
        assert!(rep.candidates[1].feasible && !rep.candidates[0].feasible);
    }

    #[test]
    fn empty_feasible_set_reports_nearest() {
        let cfg = SweepConfig {
            c1: vec![10e-9],
            ..small()
        };
        match sweep(&Bench::default(), &cfg) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("t_amb")),
            other => panic!("{other:?}"),
        }
    }
}
