use serde::{Deserialize, Serialize};

use super::{CircuitState, SwitchChain};
use crate::devices::{
    ldr_resistance_step, pt_collector_current, LdrCurve, LdrModel, MosfetParams,
    PhototransistorModel,
};
use crate::error::{domain, Error, Result};

/// Phototransistor wake-up receiver with an LDR for ambient compensation.
///
/// PT1 sources its collector current from the rail into the NMOS1 gate node,
/// which returns to ground through `r_series` and the LDR. More ambient light
/// raises the PT current but lowers the LDR resistance; a flash raises the PT
/// current before the LDR has time to follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design2Netlist {
    pub pt: PhototransistorModel,
    pub ldr: LdrModel,
    pub nmos1: MosfetParams,
    pub pmos_chain: MosfetParams,
    /// Bias resistor in series with the LDR.
    pub r_series: f64,
    pub r_aux: f64,
    pub r_mcu: f64,
    pub supply_voltage: f64,
    /// Collector-emitter saturation voltage of PT1.
    pub pt_vce_sat: f64,
    /// Converts flash irradiance into lux at the LDR [lm/W].
    pub flash_efficacy: f64,
}

impl Default for Design2Netlist {
    /// Coated configuration.
    fn default() -> Self {
        Self {
            pt: PhototransistorModel {
                coating_attenuation: 0.02,
                response_time_on: 60e-6,
                response_time_off: 90e-6,
                ..PhototransistorModel::default()
            },
            ldr: LdrModel {
                resistance_curve: LdrCurve::default(),
                coating_attenuation: 0.01,
                ..LdrModel::default()
            },
            // gate threshold of the chain near 0.65 V, above the ~0.53 V
            // the coated PT/LDR pair settles to in ambient light
            nmos1: MosfetParams {
                vgs_threshold: 0.78,
                ..MosfetParams::nmos()
            },
            pmos_chain: MosfetParams::pmos(),
            r_series: 10e3,
            r_aux: 3.3e6,
            r_mcu: 2.8 / 1.2e-3,
            supply_voltage: 2.8,
            pt_vce_sat: 0.2,
            flash_efficacy: crate::optics::DEFAULT_EFFICACY,
        }
    }
}

impl Design2Netlist {
    /// Same circuit without the coating foil.
    pub fn uncoated(&self) -> Self {
        let mut n = self.clone();
        n.pt.coating_attenuation = 1.0;
        n.ldr.coating_attenuation = 1.0;
        n
    }

    pub fn validate(&self) -> Result<()> {
        self.pt.validate()?;
        self.ldr.validate()?;
        self.nmos1.validate()?;
        self.pmos_chain.validate()?;
        for (name, v) in [
            ("r_series", self.r_series),
            ("r_aux", self.r_aux),
            ("r_mcu", self.r_mcu),
            ("supply_voltage", self.supply_voltage),
            ("flash_efficacy", self.flash_efficacy),
        ] {
            if !(v > 0.0) {
                return Err(domain(format!("{name} must be > 0")));
            }
        }
        if !(self.pt_vce_sat >= 0.0 && self.pt_vce_sat < self.supply_voltage) {
            return Err(domain("pt_vce_sat must lie in [0, supply_voltage)"));
        }
        Ok(())
    }

    pub fn chain(&self) -> SwitchChain {
        SwitchChain {
            nmos1: self.nmos1,
            pmos2: self.pmos_chain,
            r_aux: self.r_aux,
            r_mcu: self.r_mcu,
            supply_voltage: self.supply_voltage,
        }
    }

    pub fn max_dt(&self) -> f64 {
        self.pt
            .response_time_on
            .min(self.pt.response_time_off)
            .min(self.ldr.tau_fall)
            / 10.0
    }

    pub fn default_dt(&self) -> f64 {
        self.max_dt() / 2.0
    }

    pub fn gate_voltage(&self, i_pt: f64, r_ldr: f64) -> f64 {
        (i_pt * (self.r_series + r_ldr)).min(self.supply_voltage - self.pt_vce_sat)
    }

    pub fn steady_state(&self, ambient_lux: f64) -> CircuitState {
        let i = pt_collector_current(&self.pt, 0.0, ambient_lux);
        let r = self.ldr.target(ambient_lux);
        self.evaluate(i, r, 0.0, false)
    }

    pub fn evaluate(&self, i_pt: f64, r_ldr: f64, t: f64, hold: bool) -> CircuitState {
        let v_g = self.gate_voltage(i_pt, r_ldr);
        let cp = self.chain().solve(v_g, hold);
        CircuitState {
            t,
            v_gate_nmos1: v_g,
            v_mcu: cp.v_mcu,
            mcu_connected: cp.connected,
            supply_current: i_pt + cp.supply_current,
            ldr_resistance: r_ldr,
            pt_current: i_pt,
            hold,
            ..CircuitState::zero()
        }
    }
}

fn relax(now: f64, target: f64, tau_up: f64, tau_down: f64, dt: f64) -> f64 {
    let tau = if target > now { tau_up } else { tau_down };
    target + (now - target) * (-dt / tau).exp()
}

/// Advance a design 2 circuit by `dt`.
///
/// The PT sees the flash irradiance on top of `ambient_lux`; the LDR sees the
/// flash converted to lux with the netlist's flash efficacy.
pub fn step_design2(
    netlist: &Design2Netlist,
    state: &CircuitState,
    ambient_lux: f64,
    irradiance_flash: f64,
    dt: f64,
) -> Result<CircuitState> {
    let limit = netlist.max_dt();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, limit });
    }
    state.check_finite()?;
    if !(state.ldr_resistance > 0.0) {
        return Err(Error::Integration {
            t: state.t,
            detail: "LDR resistance must be > 0; start from steady_state()".into(),
        });
    }
    let target = pt_collector_current(&netlist.pt, irradiance_flash, ambient_lux);
    let i_pt = relax(
        state.pt_current,
        target,
        netlist.pt.response_time_on,
        netlist.pt.response_time_off,
        dt,
    );
    let lux_ldr = ambient_lux + irradiance_flash * netlist.flash_efficacy;
    let r = ldr_resistance_step(&netlist.ldr, state.ldr_resistance, lux_ldr, dt);
    let next = netlist.evaluate(i_pt, r, state.t + dt, state.hold);
    next.check_finite()?;
    Ok(next)
}

/// Time-aligned samples of a design 2 run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Design2Trace {
    pub t: Vec<f64>,
    pub pt_current: Vec<f64>,
    pub ldr_resistance: Vec<f64>,
    pub v_gate: Vec<f64>,
    pub detected_at: Option<f64>,
}

impl Design2Trace {
    pub const HEADER: &'static str = "t,pt_current,ldr_resistance,v_gate_nmos1";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.t.len()).map(move |i| {
            format!(
                "{},{},{},{}",
                self.t[i], self.pt_current[i], self.ldr_resistance[i], self.v_gate[i]
            )
        })
    }
}

/// Fast integrator: connection is monotone in the NMOS1 gate voltage, so the
/// chain is solved once for its threshold.
#[derive(Debug, Clone)]
pub struct Design2Sim {
    pub netlist: Design2Netlist,
    pub v_gate_wake: f64,
    pub dt: f64,
}

/// PT current and LDR resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design2Node {
    pub i_pt: f64,
    pub r_ldr: f64,
}

impl Design2Sim {
    pub fn new(netlist: Design2Netlist) -> Result<Self> {
        netlist.validate()?;
        let v_gate_wake = netlist.chain().wake_gate_voltage();
        let dt = netlist.default_dt();
        Ok(Self {
            netlist,
            v_gate_wake,
            dt,
        })
    }

    pub fn dc_node(&self, ambient: f64) -> Design2Node {
        Design2Node {
            i_pt: pt_collector_current(&self.netlist.pt, 0.0, ambient),
            r_ldr: self.netlist.ldr.target(ambient),
        }
    }

    pub fn advance(&self, node: &mut Design2Node, ambient: f64, irradiance: f64, dt: f64) {
        let n = &self.netlist;
        let target = pt_collector_current(&n.pt, irradiance, ambient);
        node.i_pt = relax(
            node.i_pt,
            target,
            n.pt.response_time_on,
            n.pt.response_time_off,
            dt,
        );
        let lux_ldr = ambient + irradiance * n.flash_efficacy;
        node.r_ldr = ldr_resistance_step(&n.ldr, node.r_ldr, lux_ldr, dt);
    }

    pub fn gate(&self, node: &Design2Node) -> f64 {
        self.netlist.gate_voltage(node.i_pt, node.r_ldr)
    }

    pub fn is_awake(&self, node: &Design2Node) -> bool {
        self.gate(node) >= self.v_gate_wake
    }

    /// Drive the circuit with `stimulus(t) -> (ambient lux, flash irradiance)`
    /// for `duration`; samples are kept every `stride` steps when `record` is set.
    pub fn run(
        &self,
        node: &mut Design2Node,
        duration: f64,
        stop_on_detect: bool,
        record: Option<usize>,
        mut stimulus: impl FnMut(f64) -> (f64, f64),
    ) -> Design2Trace {
        let mut trace = Design2Trace::default();
        let push = |tr: &mut Design2Trace, t: f64, n: &Design2Node| {
            tr.t.push(t);
            tr.pt_current.push(n.i_pt);
            tr.ldr_resistance.push(n.r_ldr);
            tr.v_gate.push(self.gate(n));
        };
        if record.is_some() {
            push(&mut trace, 0.0, node);
        }
        let steps = (duration / self.dt).ceil() as usize;
        for k in 1..=steps {
            let t = k as f64 * self.dt;
            let (amb, irr) = stimulus(t);
            self.advance(node, amb, irr, self.dt);
            if let Some(stride) = record {
                if k % stride.max(1) == 0 {
                    push(&mut trace, t, node);
                }
            }
            if trace.detected_at.is_none() && self.is_awake(node) {
                trace.detected_at = Some(t);
                if stop_on_detect {
                    break;
                }
            }
        }
        trace
    }
}
