//! Fixed-topology transient models of the wake-up receivers and harvesting
//! front-ends.
//!
//! Both designs end in the same switch chain: a gate node driving NMOS1, whose
//! drain (pulled up to the rail through `r_aux`) is the gate of the PMOS that
//! connects the microcontroller. Design 1 feeds that chain from PMOS1, which
//! compares the solar-cell node against the divider/capacitor node B1. Design 2
//! feeds it from a phototransistor loaded by an LDR.

mod design1;
mod design2;
mod frontend;

pub use design1::{
    standby_current, step_design1, Design1Netlist, Design1Sim, PulseOutcome, RcNode,
};
pub use design2::{step_design2, Design2Netlist, Design2Node, Design2Sim, Design2Trace};
pub use frontend::{step_frontend, FrontEndKind, HarvestFrontEnd};

use serde::{Deserialize, Serialize};

use crate::devices::{mosfet_current, MosfetParams};
use crate::error::{domain, Result};

/// Fraction of the rail the MCU supply must reach to count as connected.
pub const CONNECT_FRACTION: f64 = 0.95;

/// Node voltages and derived quantities of a wake-up circuit at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitState {
    pub t: f64,
    /// Solar-cell terminal voltage.
    pub v_sc: f64,
    /// Internal (junction) voltage of the cell behind its series resistance.
    pub v_oc: f64,
    /// Open-circuit target the junction was relaxing toward at `t`.
    pub voc_target: f64,
    /// Divider/capacitor node, gate of PMOS1.
    pub v_b1: f64,
    /// Series resistance of the cell at the last step.
    pub r_sc: f64,
    pub v_gate_nmos1: f64,
    pub v_mcu: f64,
    pub mcu_connected: bool,
    pub supply_current: f64,
    /// Design 2 only.
    pub ldr_resistance: f64,
    /// Design 2 only.
    pub pt_current: f64,
    /// Microcontroller is holding its own supply path.
    pub hold: bool,
    /// Set when a hold was requested while the MCU was not connected.
    pub hold_warning: bool,
}

impl CircuitState {
    pub fn zero() -> Self {
        Self {
            t: 0.0,
            v_sc: 0.0,
            v_oc: 0.0,
            voc_target: 0.0,
            v_b1: 0.0,
            r_sc: 0.0,
            v_gate_nmos1: 0.0,
            v_mcu: 0.0,
            mcu_connected: false,
            supply_current: 0.0,
            ldr_resistance: 0.0,
            pt_current: 0.0,
            hold: false,
            hold_warning: false,
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        let vals = [
            self.v_sc,
            self.v_oc,
            self.v_b1,
            self.v_gate_nmos1,
            self.v_mcu,
            self.supply_current,
            self.ldr_resistance,
            self.pt_current,
        ];
        if vals.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(crate::error::Error::Integration {
                t: self.t,
                detail: format!("non-finite node voltage in {self:?}"),
            })
        }
    }

    /// One CSV row matching [`TRAJECTORY_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.t,
            self.v_sc,
            self.v_b1,
            self.v_mcu,
            self.supply_current,
            u8::from(self.mcu_connected)
        )
    }
}

pub const TRAJECTORY_HEADER: &str = "t,v_sc,v_b1,v_mcu,supply_current,mcu_connected";

/// `(R_sc + R1) ∥ R2`.
pub fn equivalent_resistance(r_sc: f64, r1: f64, r2: f64) -> Result<f64> {
    if !(r1 > 0.0) || !(r2 > 0.0) {
        return Err(domain("r1 and r2 must be > 0"));
    }
    if !(r_sc >= 0.0) {
        return Err(domain("r_sc must be >= 0"));
    }
    if r2.is_infinite() {
        return Ok(r_sc + r1);
    }
    Ok(1.0 / (1.0 / (r_sc + r1) + 1.0 / r2))
}

/// Time over which the divider capacitor absorbs ambient changes: five time constants.
pub fn adaptation_time(r_e: f64, c: f64) -> Result<f64> {
    if !(r_e > 0.0) || !(c > 0.0) {
        return Err(domain("adaptation_time needs r_e > 0 and c > 0"));
    }
    Ok(5.0 * r_e * c)
}

/// Latch or release the microcontroller's own supply path.
///
/// A hold request while disconnected is ignored and flagged.
pub fn mcu_hold_and_release(state: &CircuitState, hold: bool) -> CircuitState {
    let mut next = state.clone();
    next.hold_warning = false;
    if hold {
        if state.mcu_connected || state.hold {
            next.hold = true;
        } else {
            next.hold_warning = true;
        }
    } else {
        next.hold = false;
    }
    next
}

/// Switch chain from the NMOS1 gate to the MCU supply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchChain {
    pub nmos1: MosfetParams,
    pub pmos2: MosfetParams,
    /// Pull-up from the NMOS1 drain to the rail.
    pub r_aux: f64,
    /// Powered-off MCU seen as a load resistance.
    pub r_mcu: f64,
    pub supply_voltage: f64,
}

/// Solved chain operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPoint {
    pub v_drain_nmos1: f64,
    pub v_mcu: f64,
    pub connected: bool,
    /// Current drawn from the rail by the chain (pull-up and PMOS2 channel).
    pub supply_current: f64,
}

impl SwitchChain {
    /// Operating point for a given NMOS1 gate voltage; `hold` pulls the PMOS2
    /// gate to ground as the MCU's latch transistor does.
    pub fn solve(&self, v_gate: f64, hold: bool) -> ChainPoint {
        let vs = self.supply_voltage;
        let v_d = if hold {
            0.0
        } else {
            solve_increasing(
                |v| mosfet_current(&self.nmos1, v_gate, v) - (vs - v) / self.r_aux,
                0.0,
                vs,
            )
        };
        let v_m = solve_increasing(
            |v| v / self.r_mcu - mosfet_current(&self.pmos2, v_d - vs, v - vs),
            0.0,
            vs,
        );
        let i_pull = (vs - v_d) / self.r_aux;
        let i_p2 = mosfet_current(&self.pmos2, v_d - vs, v_m - vs);
        ChainPoint {
            v_drain_nmos1: v_d,
            v_mcu: v_m,
            connected: vs > 0.0 && v_m >= CONNECT_FRACTION * vs,
            supply_current: i_pull + i_p2,
        }
    }

    /// Smallest NMOS1 gate voltage that connects the MCU.
    pub fn wake_gate_voltage(&self) -> f64 {
        let vs = self.supply_voltage;
        if !self.solve(vs, false).connected {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (0.0, vs);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.solve(mid, false).connected {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Root of a non-decreasing function on `[lo, hi]` by bisection; clamps to the
/// nearer end when there is no sign change.
pub(crate) fn solve_increasing(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    if f(a) >= 0.0 {
        return a;
    }
    if f(b) <= 0.0 {
        return b;
    }
    for _ in 0..64 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}
