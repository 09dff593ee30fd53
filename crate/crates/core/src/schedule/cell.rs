//! Per-cm² stack model shared by the optimizer and by post-solve reporting.
//! All flows are mol/(s·cm²) of active area.

use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::balances::{drag_coefficient, outflow_enthalpy, vapor_ratio, BalanceParams};
use crate::degradation::DegradationParams;
use crate::electrochem::{undegraded_voltage, ElectrochemParams, FARADAY};

/// Per-cell mol/s represented by one unit of the scaled liquid variable.
pub const LIQUID_UNIT: f64 = 0.1;
/// Per-cell mol/s represented by one unit of the scaled purge variable.
pub const N2_UNIT: f64 = 1.0e-3;
pub const TAU_ORIGIN: f64 = 298.15;
pub const TAU_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct CellModel {
    pub electrochem: ElectrochemParams,
    pub balances: BalanceParams,
    pub degradation: DegradationParams,
}

#[derive(Debug, Clone, Copy)]
pub struct CellFlows<D> {
    pub h2_gen: D,
    pub gross_crossover: D,
    pub recombined: D,
    pub h2_anode: D,
    pub o2_anode: D,
    pub h2_product: D,
    pub vapor_anode: D,
    pub vapor_cathode: D,
    pub drag: D,
    pub liquid_anode: D,
    pub liquid_cathode: D,
    pub n2: D,
    pub consumed: D,
    pub water_in: D,
}

impl<D: DualNum<Primitive = f64> + Copy> CellFlows<D> {
    pub fn anode_dry(&self) -> D {
        self.o2_anode + self.h2_anode + self.n2
    }
}

pub fn temperature<D: DualNum<Primitive = f64> + Copy>(tau: D) -> D {
    tau * TAU_SCALE + TAU_ORIGIN
}

pub fn tau_of(temp: f64) -> f64 {
    (temp - TAU_ORIGIN) / TAU_SCALE
}

impl CellModel {
    /// Net product per Faradaic H₂.
    pub fn product_fraction(&self) -> f64 {
        self.balances.product_fraction()
    }

    pub fn flows<D: DualNum<Primitive = f64> + Copy>(&self, i: D, temp: D, n2: D, liquid: D) -> CellFlows<D> {
        let b = &self.balances;
        let h2_gen = i / (2.0 * FARADAY);
        let gross = h2_gen * b.crossover_fraction();
        let recombined = gross * b.recombination;
        let h2_anode = gross - recombined;
        let o2_anode = h2_gen * 0.5 - recombined * 0.5;
        let h2_product = h2_gen - gross;
        let vapor_anode = vapor_ratio(temp, b.p_anode, &b.antoine) * (o2_anode + h2_anode + n2);
        let vapor_cathode = vapor_ratio(temp, b.p_cathode, &b.antoine) * h2_product;
        let drag = drag_coefficient(i, temp, b.p_cathode, b.drag_temperature_unit) * h2_gen;
        CellFlows {
            h2_gen,
            gross_crossover: gross,
            recombined,
            h2_anode,
            o2_anode,
            h2_product,
            vapor_anode,
            vapor_cathode,
            drag,
            liquid_anode: liquid,
            liquid_cathode: drag - vapor_cathode,
            n2,
            consumed: h2_gen,
            water_in: liquid + vapor_anode + drag + h2_gen - recombined,
        }
    }

    pub fn voltage<D: DualNum<Primitive = f64> + Copy>(&self, i: D, temp: D) -> D {
        undegraded_voltage(i, temp, &self.electrochem)
    }

    /// Stored heat minus net heat input over one implicit Euler step (W/cm²).
    #[allow(clippy::too_many_arguments)]
    pub fn heat_residual<D: DualNum<Primitive = f64> + Copy>(
        &self,
        i: D,
        temp: D,
        temp_prev: D,
        v_deg: D,
        liquid: D,
        n2: D,
        dt_seconds: f64,
    ) -> D {
        let b = &self.balances;
        let f = self.flows(i, temp, n2, liquid);
        let v = self.voltage(i, temp) + v_deg;
        let generation = (v - b.v_thermoneutral) * i;
        let loss = (temp - b.t_ambient) / b.thermal.resistance_times_area();
        let out = outflow_enthalpy(
            temp,
            f.liquid_anode + f.liquid_cathode,
            f.vapor_anode + f.vapor_cathode,
            f.o2_anode,
            f.h2_anode + f.h2_product,
            f.n2,
        );
        (temp - temp_prev) * (b.thermal.capacitance_per_area() / dt_seconds) - (generation - loss - out)
    }

    /// y_max·(dry anode gas) − H₂·(1 − y_vapor), scaled by 2F; non-negative
    /// exactly when the anode H₂ fraction is within `y_max`.
    pub fn safety_margin<D: DualNum<Primitive = f64> + Copy>(&self, i: D, temp: D, n2: D, y_max: f64) -> D {
        let b = &self.balances;
        let f = self.flows(i, temp, n2, D::zero());
        let y_vap = b.antoine.saturation_pressure(temp) / b.p_anode;
        (f.anode_dry() * y_max - f.h2_anode * (-y_vap + 1.0)) * (2.0 * FARADAY)
    }

    /// Consumption plus both vapor losses (mol/(s·cm²)).
    pub fn water_use<D: DualNum<Primitive = f64> + Copy>(&self, i: D, temp: D, n2: D) -> D {
        let f = self.flows(i, temp, n2, D::zero());
        f.consumed + f.vapor_anode + f.vapor_cathode
    }

    /// Liquid circulation (mol/(s·cm²)) that holds `temp` steady at current `i`.
    pub fn steady_liquid(&self, i: f64, temp: f64, v_deg: f64) -> f64 {
        let r0 = self.heat_residual(i, temp, temp, v_deg, 0.0, 0.0, 1.0);
        let r1 = self.heat_residual(i, temp, temp, v_deg, 1.0, 0.0, 1.0);
        let slope = r1 - r0;
        if slope > 0.0 {
            (-r0 / slope).max(0.0)
        } else {
            0.0
        }
    }

    /// Per-cell scale that turns per-cm² flows into scaled liquid units.
    pub fn liquid_unit_per_cm2(cell_area: f64) -> f64 {
        LIQUID_UNIT / cell_area
    }

    pub fn n2_unit_per_cm2(cell_area: f64) -> f64 {
        N2_UNIT / cell_area
    }
}
