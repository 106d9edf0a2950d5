use serde::{Deserialize, Serialize};

use crate::devices::{solar_voc, SolarCellModel};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrontEndKind {
    /// Boost converter with fractional-Voc MPPT. The open-circuit voltage is
    /// sampled once per `sample_period` and the cell is held at
    /// `clamp_fraction` of it in between.
    PmicMppt {
        clamp_fraction: f64,
        sample_period: f64,
        efficiency: f64,
    },
    /// Cell tied to the storage through a Schottky diode.
    Schottky { v_drop: f64 },
}

/// Harvesting path from a solar cell into an energy store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestFrontEnd {
    pub kind: FrontEndKind,
    pub storage_voltage: f64,
    pub storage_capacitance: f64,
    pub storage_max_voltage: f64,
    #[serde(skip)]
    mppt_setpoint: Option<f64>,
    #[serde(skip)]
    since_sample: f64,
}

impl HarvestFrontEnd {
    pub fn pmic(storage_voltage: f64) -> Self {
        Self::new(
            FrontEndKind::PmicMppt {
                clamp_fraction: 0.8,
                sample_period: 16.0,
                efficiency: 0.8,
            },
            storage_voltage,
        )
    }

    pub fn schottky(storage_voltage: f64) -> Self {
        Self::new(FrontEndKind::Schottky { v_drop: 0.3 }, storage_voltage)
    }

    pub fn new(kind: FrontEndKind, storage_voltage: f64) -> Self {
        Self {
            kind,
            storage_voltage,
            storage_capacitance: 0.1,
            storage_max_voltage: 4.2,
            mppt_setpoint: None,
            since_sample: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FrontEndKind::PmicMppt {
                clamp_fraction,
                sample_period,
                efficiency,
            } => {
                if !(clamp_fraction > 0.0 && clamp_fraction < 1.0) {
                    return Err(domain("clamp_fraction must lie in (0, 1)"));
                }
                if !(sample_period > 0.0 && efficiency > 0.0 && efficiency <= 1.0) {
                    return Err(domain("sample_period must be > 0 and efficiency in (0, 1]"));
                }
            }
            FrontEndKind::Schottky { v_drop } => {
                if !(0.15..=0.45).contains(&v_drop) {
                    return Err(domain("v_drop must lie in [0.15, 0.45] V"));
                }
            }
        }
        if !(self.storage_capacitance > 0.0
            && self.storage_voltage >= 0.0
            && self.storage_max_voltage > 0.0)
        {
            return Err(domain("storage parameters out of range"));
        }
        Ok(())
    }

    pub fn stored_energy(&self) -> f64 {
        0.5 * self.storage_capacitance * self.storage_voltage * self.storage_voltage
    }

    pub fn set_stored_energy(&mut self, e: f64) {
        self.storage_voltage = (2.0 * e.max(0.0) / self.storage_capacitance).sqrt();
    }

    /// Current MPPT operating voltage, if sampled.
    pub fn mppt_setpoint(&self) -> Option<f64> {
        self.mppt_setpoint
    }
}

/// Advance a front-end by `dt`. Returns the cell terminal voltage and the
/// power delivered toward the store; anything above `storage_max_voltage` is
/// discarded.
pub fn step_frontend(
    fe: &mut HarvestFrontEnd,
    solar: &SolarCellModel,
    lux_total: f64,
    dt: f64,
) -> (f64, f64) {
    let voc = solar_voc(solar, lux_total);
    let r_sc = solar.series_resistance_at(lux_total);
    let (v_sc, power) = match fe.kind {
        FrontEndKind::PmicMppt {
            clamp_fraction,
            sample_period,
            efficiency,
        } => {
            if fe.mppt_setpoint.is_none() || fe.since_sample >= sample_period {
                fe.mppt_setpoint = Some(clamp_fraction * voc);
                fe.since_sample = 0.0;
            }
            fe.since_sample += dt;
            let set = fe.mppt_setpoint.unwrap_or(0.0);
            let v = set.min(voc);
            let i = ((voc - v) / r_sc).max(0.0);
            (v, v * i * efficiency)
        }
        FrontEndKind::Schottky { v_drop } => {
            let v_on = fe.storage_voltage + v_drop;
            if voc > v_on {
                let i = (voc - v_on) / r_sc;
                (v_on, i * fe.storage_voltage.max(0.0))
            } else {
                (voc, 0.0)
            }
        }
    };
    if power > 0.0 {
        let e = fe.stored_energy() + power * dt;
        let e_max = 0.5 * fe.storage_capacitance * fe.storage_max_voltage.powi(2);
        fe.set_stored_energy(e.min(e_max));
    }
    (v_sc, power)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harvest_cell() -> SolarCellModel {
        SolarCellModel::default().with_area(250.0)
    }

    #[test]
    fn pmic_ignores_flash() {
        let cell = SolarCellModel::default();
        let mut fe = HarvestFrontEnd::pmic(1.0);
        let dt = 1e-4;
        let (v0, _) = step_frontend(&mut fe, &cell, 400.0, dt);
        let mut vmax: f64 = v0;
        let mut vmin: f64 = v0;
        for k in 0..1000 {
            let lux = if (200..700).contains(&k) {
                1400.0
            } else {
                400.0
            };
            let (v, _) = step_frontend(&mut fe, &cell, lux, dt);
            vmax = vmax.max(v);
            vmin = vmin.min(v);
        }
        let unloaded = solar_voc(&cell, 1400.0) - solar_voc(&cell, 400.0);
        assert!(vmax - vmin < 0.05 * unloaded);
    }

    #[test]
    fn schottky_pins_cell_to_storage() {
        let mut cell = harvest_cell();
        // three series cells reach above a 1.5 V store
        cell.voc_a *= 3.0;
        cell.voc_b *= 3.0;
        let mut fe = HarvestFrontEnd::schottky(1.5);
        let (v, p) = step_frontend(&mut fe, &cell, 1600.0, 1e-3);
        assert!((v - 1.8).abs() < 1e-12);
        assert!(p > 0.0);
    }

    #[test]
    fn dark_harvests_nothing() {
        let cell = harvest_cell();
        for mut fe in [HarvestFrontEnd::pmic(1.0), HarvestFrontEnd::schottky(1.0)] {
            let (_, p) = step_frontend(&mut fe, &cell, 0.0, 1.0);
            assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn validation() {
        let mut fe = HarvestFrontEnd::schottky(1.0);
        fe.kind = FrontEndKind::Schottky { v_drop: 0.6 };
        assert!(fe.validate().is_err());
        assert!(HarvestFrontEnd::pmic(1.0).validate().is_ok());
    }
}
