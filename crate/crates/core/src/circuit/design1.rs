use serde::{Deserialize, Serialize};

use super::{solve_increasing, CircuitState, SwitchChain};
use crate::devices::{
    mosfet_current, solar_response_time, solar_voc, MosfetParams, SolarCellModel,
};
use crate::error::{domain, Error, Result};

/// Solar-cell wake-up receiver with divider, adaptation capacitor and a
/// PMOS1 → NMOS1 → PMOS2 cascade.
///
/// PMOS1 compares B1 (its gate) against the cell terminal (its source
/// reference) and sources current from the rail into the NMOS1 gate, which is
/// held down by `r_gs_nmos1`. NMOS1 pulls the PMOS2 gate down against the
/// `r_aux` pull-up; PMOS2 connects the MCU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design1Netlist {
    pub r1: f64,
    pub r2: f64,
    pub c1: f64,
    pub r_gs_nmos1: f64,
    pub r_aux: f64,
    pub r_mcu: f64,
    pub pmos1: MosfetParams,
    pub nmos1: MosfetParams,
    pub pmos2: MosfetParams,
    pub supply_voltage: f64,
    pub solar: SolarCellModel,
}

impl Default for Design1Netlist {
    /// Bench component values with the calibrated transistor and cell
    /// parameters (standby 88.5 pA / 224 nA, wake at about -0.43 V on PMOS1).
    fn default() -> Self {
        Self {
            r1: 1.33e6,
            r2: 1.13e6,
            c1: 470e-9,
            r_gs_nmos1: 10e6,
            r_aux: 3.3e6,
            r_mcu: 2.8 / 1.2e-3,
            pmos1: MosfetParams {
                vgs_threshold: -0.5997,
                subthreshold_swing: 0.1216,
                threshold_current: 5.84e-6,
                ..MosfetParams::pmos()
            },
            nmos1: MosfetParams {
                vgs_threshold: 0.3716,
                subthreshold_swing: 0.1466,
                threshold_current: 2.057e-9,
                ..MosfetParams::nmos()
            },
            pmos2: MosfetParams {
                vgs_threshold: -1.6263,
                subthreshold_swing: 0.0736,
                threshold_current: 56.56e-6,
                ..MosfetParams::pmos()
            },
            supply_voltage: 2.8,
            solar: SolarCellModel::wake_up_cell(),
        }
    }
}

/// Dynamic state of the linear part: cell junction and node B1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcNode {
    pub v_oc: f64,
    pub voc_target: f64,
    pub v_b1: f64,
    pub r_sc: f64,
}

impl RcNode {
    /// Terminal voltage of the cell loaded by R1 into B1.
    pub fn v_sc(&self, r1: f64) -> f64 {
        (self.v_oc * r1 + self.v_b1 * self.r_sc) / (self.r_sc + r1)
    }

    pub fn vgs_pmos1(&self, r1: f64) -> f64 {
        self.v_b1 - self.v_sc(r1)
    }
}

impl Design1Netlist {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r1", self.r1),
            ("r2", self.r2),
            ("r_gs_nmos1", self.r_gs_nmos1),
            ("r_aux", self.r_aux),
            ("r_mcu", self.r_mcu),
        ] {
            if !(v > 0.0) {
                return Err(domain(format!("{name} must be > 0")));
            }
        }
        if !(self.c1 > 0.0) {
            return Err(domain("c1 must be > 0"));
        }
        if !(self.supply_voltage > 0.0) {
            return Err(domain("supply_voltage must be > 0"));
        }
        if self.pmos1.polarity != crate::devices::Polarity::P
            || self.pmos2.polarity != crate::devices::Polarity::P
            || self.nmos1.polarity != crate::devices::Polarity::N
        {
            return Err(domain("design 1 needs P/N/P transistor polarities"));
        }
        self.pmos1.validate()?;
        self.nmos1.validate()?;
        self.pmos2.validate()?;
        self.solar.validate()
    }

    pub fn chain(&self) -> SwitchChain {
        SwitchChain {
            nmos1: self.nmos1,
            pmos2: self.pmos2,
            r_aux: self.r_aux,
            r_mcu: self.r_mcu,
            supply_voltage: self.supply_voltage,
        }
    }

    /// Largest stable step for the transient integrator.
    pub fn max_dt(&self) -> f64 {
        solar_response_time(&self.solar) / 10.0
    }

    pub fn default_dt(&self) -> f64 {
        solar_response_time(&self.solar) / 20.0
    }

    /// Equivalent resistance seen by C1 at the given illuminance.
    pub fn equivalent_resistance_at(&self, lux: f64) -> f64 {
        super::equivalent_resistance(self.solar.series_resistance_at(lux), self.r1, self.r2)
            .expect("validated netlist")
    }

    pub fn adaptation_time_at(&self, lux: f64) -> f64 {
        5.0 * self.equivalent_resistance_at(lux) * self.c1
    }

    /// Smallest adaptation time over `[lux_lo, lux_hi]`.
    pub fn min_adaptation_time(&self, lux_lo: f64, lux_hi: f64) -> f64 {
        // R_sc falls monotonically with light, so the bright end is the minimum
        self.adaptation_time_at(lux_hi)
            .min(self.adaptation_time_at(lux_lo))
    }

    /// DC operating point of the linear part at constant illuminance.
    pub fn dc_node(&self, lux: f64) -> RcNode {
        let voc = solar_voc(&self.solar, lux);
        let r_sc = self.solar.series_resistance_at(lux);
        RcNode {
            v_oc: voc,
            voc_target: voc,
            v_b1: voc * self.r2 / (r_sc + self.r1 + self.r2),
            r_sc,
        }
    }

    /// PMOS1 current into the NMOS1 gate node and the resulting gate voltage.
    pub fn pmos1_stage(&self, vgs1: f64) -> (f64, f64) {
        let vs = self.supply_voltage;
        let v_g = solve_increasing(
            |v| v / self.r_gs_nmos1 - mosfet_current(&self.pmos1, vgs1, v - vs),
            0.0,
            vs,
        );
        (v_g, mosfet_current(&self.pmos1, vgs1, v_g - vs))
    }

    /// Fill the switch-chain fields of a state from its linear node.
    pub fn evaluate(&self, node: &RcNode, t: f64, hold: bool) -> CircuitState {
        let vgs1 = node.vgs_pmos1(self.r1);
        let (v_g, i_p1) = self.pmos1_stage(vgs1);
        let cp = self.chain().solve(v_g, hold);
        CircuitState {
            t,
            v_sc: node.v_sc(self.r1),
            v_oc: node.v_oc,
            voc_target: node.voc_target,
            v_b1: node.v_b1,
            r_sc: node.r_sc,
            v_gate_nmos1: v_g,
            v_mcu: cp.v_mcu,
            mcu_connected: cp.connected,
            supply_current: i_p1 + cp.supply_current,
            ldr_resistance: 0.0,
            pt_current: 0.0,
            hold,
            hold_warning: false,
        }
    }

    /// Settled state at constant illuminance.
    pub fn steady_state(&self, lux: f64) -> CircuitState {
        self.evaluate(&self.dc_node(lux), 0.0, false)
    }

    /// Most positive PMOS1 gate-source voltage at which the MCU is connected,
    /// or `-inf` if the cascade can never connect.
    pub fn wake_vgs(&self) -> f64 {
        let connected = |vgs: f64| {
            let (v_g, _) = self.pmos1_stage(vgs);
            self.chain().solve(v_g, false).connected
        };
        let mut lo = -(self.supply_voltage + 1.0);
        if !connected(lo) {
            return f64::NEG_INFINITY;
        }
        let mut hi = 0.0;
        if connected(hi) {
            return 0.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if connected(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Advance the junction and node B1 over `dt`, with the cell target and series
/// resistance held at their end-of-step values. The junction relaxes exactly
/// under the held target; B1 uses the trapezoidal rule.
fn advance_node(
    n: &Design1Netlist,
    tau_sc: f64,
    node: &mut RcNode,
    voc_next: f64,
    r_sc_next: f64,
    dt: f64,
) {
    let v_oc_next = voc_next + (node.v_oc - voc_next) * (-dt / tau_sc).exp();
    advance_b1(n, node, v_oc_next, r_sc_next, dt);
    node.voc_target = voc_next;
}

fn advance_b1(n: &Design1Netlist, node: &mut RcNode, v_oc_next: f64, r_sc_next: f64, dt: f64) {
    let g1a = 1.0 / (node.r_sc + n.r1);
    let g1b = 1.0 / (r_sc_next + n.r1);
    let g2 = 1.0 / n.r2;
    let ch = n.c1 / dt;
    let lhs = ch + 0.5 * (g1b + g2);
    let rhs = node.v_b1 * (ch - 0.5 * (g1a + g2)) + 0.5 * (g1a * node.v_oc + g1b * v_oc_next);
    node.v_b1 = rhs / lhs;
    node.v_oc = v_oc_next;
    node.r_sc = r_sc_next;
}

/// Advance a design 1 circuit by `dt` under total illuminance `lux_total`.
pub fn step_design1(
    netlist: &Design1Netlist,
    state: &CircuitState,
    lux_total: f64,
    dt: f64,
) -> Result<CircuitState> {
    let limit = netlist.max_dt();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, limit });
    }
    state.check_finite()?;
    let tau = solar_response_time(&netlist.solar);
    let r_sc = netlist.solar.series_resistance_at(lux_total);
    let mut node = RcNode {
        v_oc: state.v_oc,
        voc_target: state.voc_target,
        v_b1: state.v_b1,
        r_sc: if state.r_sc > 0.0 { state.r_sc } else { r_sc },
    };
    let voc = solar_voc(&netlist.solar, lux_total);
    advance_node(netlist, tau, &mut node, voc, r_sc, dt);
    let mut next = netlist.evaluate(&node, state.t + dt, state.hold);
    if next.mcu_connected && state.hold {
        next.hold = true;
    }
    next.check_finite()?;
    Ok(next)
}

/// Steady supply current at constant illuminance.
pub fn standby_current(netlist: &Design1Netlist, lux: f64) -> f64 {
    netlist.steady_state(lux).supply_current
}

/// Result of driving a design 1 circuit through one stimulus window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseOutcome {
    /// Time of the first connection, relative to the window start.
    pub detected_at: Option<f64>,
    /// Most negative PMOS1 gate-source voltage reached.
    pub min_vgs: f64,
}

/// Precomputed fast integrator for design 1.
///
/// Connection of the MCU is monotone in PMOS1's gate-source voltage, so the
/// cascade is solved once for its wake threshold and the transient only
/// integrates the linear part.
#[derive(Debug, Clone)]
pub struct Design1Sim {
    pub netlist: Design1Netlist,
    pub tau_sc: f64,
    pub vgs_wake: f64,
    pub dt: f64,
}

impl Design1Sim {
    pub fn new(netlist: Design1Netlist) -> Result<Self> {
        netlist.validate()?;
        let tau_sc = solar_response_time(&netlist.solar);
        let vgs_wake = netlist.wake_vgs();
        let dt = netlist.default_dt();
        Ok(Self {
            netlist,
            tau_sc,
            vgs_wake,
            dt,
        })
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn dc_node(&self, lux: f64) -> RcNode {
        self.netlist.dc_node(lux)
    }

    /// Advance with the cell junction relaxing toward `Voc(lux)`.
    pub fn advance(&self, node: &mut RcNode, lux: f64, dt: f64) {
        let voc = solar_voc(&self.netlist.solar, lux);
        let r_sc = self.netlist.solar.series_resistance_at(lux);
        advance_node(&self.netlist, self.tau_sc, node, voc, r_sc, dt);
    }

    /// Advance with the junction forced to `v_src` behind `r_sc` (an ideal
    /// voltage source, e.g. a cell clamped by a harvesting front-end).
    pub fn advance_forced(&self, node: &mut RcNode, v_src: f64, r_sc: f64, dt: f64) {
        advance_b1(&self.netlist, node, v_src, r_sc, dt);
        node.voc_target = v_src;
    }

    pub fn is_awake(&self, node: &RcNode) -> bool {
        node.vgs_pmos1(self.netlist.r1) <= self.vgs_wake
    }

    /// Run from `node` for `duration` seconds with illuminance `lux(t)`,
    /// stopping at the first connection when `stop_on_detect` is set.
    pub fn run(
        &self,
        node: &mut RcNode,
        duration: f64,
        stop_on_detect: bool,
        mut lux: impl FnMut(f64) -> f64,
    ) -> PulseOutcome {
        let steps = (duration / self.dt).ceil() as usize;
        let mut out = PulseOutcome {
            detected_at: None,
            min_vgs: node.vgs_pmos1(self.netlist.r1),
        };
        for k in 1..=steps {
            let t = k as f64 * self.dt;
            self.advance(node, lux(t), self.dt);
            let vgs = node.vgs_pmos1(self.netlist.r1);
            out.min_vgs = out.min_vgs.min(vgs);
            if out.detected_at.is_none() && vgs <= self.vgs_wake {
                out.detected_at = Some(t);
                if stop_on_detect {
                    break;
                }
            }
        }
        out
    }

    /// Count rising edges of the connection signal over `duration`.
    pub fn count_wakeups(
        &self,
        node: &mut RcNode,
        duration: f64,
        mut lux: impl FnMut(f64) -> f64,
    ) -> usize {
        let steps = (duration / self.dt).ceil() as usize;
        let mut awake = self.is_awake(node);
        let mut edges = 0;
        for k in 1..=steps {
            let t = k as f64 * self.dt;
            self.advance(node, lux(t), self.dt);
            let now = self.is_awake(node);
            if now && !awake {
                edges += 1;
            }
            awake = now;
        }
        edges
    }

    /// Noise-free single flash from the ambient steady state: does it wake?
    pub fn detects_flash(&self, ambient: f64, flash_lux: f64, pulse_duration: f64) -> PulseOutcome {
        let mut node = self.dc_node(ambient);
        let tail = 10.0 * self.tau_sc;
        self.run(&mut node, pulse_duration + tail, true, |t| {
            if t <= pulse_duration {
                ambient + flash_lux
            } else {
                ambient
            }
        })
    }

    /// Smallest flash illuminance that wakes the receiver at `ambient`, by bisection.
    pub fn flash_threshold(&self, ambient: f64, pulse_duration: f64) -> f64 {
        let mut hi = 1.0;
        while self
            .detects_flash(ambient, hi, pulse_duration)
            .detected_at
            .is_none()
        {
            hi *= 2.0;
            if hi > 1e9 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self
                .detects_flash(ambient, mid, pulse_duration)
                .detected_at
                .is_some()
            {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-4 * hi {
                break;
            }
        }
        hi
    }

    /// Full-state trajectory for plotting, evaluated every `stride` steps.
    pub fn trajectory(
        &self,
        start: RcNode,
        duration: f64,
        stride: usize,
        mut lux: impl FnMut(f64) -> f64,
    ) -> Vec<CircuitState> {
        let mut node = start;
        let mut out = vec![self.netlist.evaluate(&node, 0.0, false)];
        let steps = (duration / self.dt).ceil() as usize;
        for k in 1..=steps {
            let t = k as f64 * self.dt;
            self.advance(&mut node, lux(t), self.dt);
            if k % stride.max(1) == 0 || k == steps {
                out.push(self.netlist.evaluate(&node, t, false));
            }
        }
        out
    }
}
