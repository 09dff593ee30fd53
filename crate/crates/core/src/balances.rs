//! Species balances at both electrodes and the lumped stack energy balance.
//!
//! All flows are in mol/s for the whole stack. Pressures are in bar.

use log::warn;
use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::electrochem::FARADAY;
use crate::thermo::{species, vapor_enthalpy_from_liquid, Species, T_STD};

/// Thermoneutral voltage (V).
pub const V_THERMONEUTRAL: f64 = 1.48;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BalanceError {
    #[error("cathode pressure {p_cat} bar is below anode pressure {p_an} bar")]
    NegativePressureDifference { p_cat: f64, p_an: f64 },
    #[error("recombination conversion {0} is outside [0, 1]")]
    InvalidConversion(f64),
    #[error("invalid stack geometry: {0}")]
    InvalidGeometry(String),
}

/// Temperature unit expected by the electro-osmotic drag polynomial.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DragTemperatureUnit {
    Celsius,
    Kelvin,
}

/// Antoine coefficients for log10(P / bar) = A - B / (T / K + C).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Antoine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Antoine {
    fn default() -> Self {
        // Stull (1947), valid 255.9 - 373 K.
        Self {
            a: 4.6543,
            b: 1435.264,
            c: -64.848,
        }
    }
}

impl Antoine {
    pub fn saturation_pressure<D: DualNum<Primitive = f64> + Copy>(&self, temp: D) -> D {
        let log10 = (temp + self.c).recip() * (-self.b) + self.a;
        (log10 * std::f64::consts::LN_10).exp()
    }
}

/// Thermal mass and resistance of a reference stack; scaled by active area.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalReference {
    /// cm² of active area in the reference stack.
    pub area: f64,
    /// J/K.
    pub capacitance: f64,
    /// K/W.
    pub resistance: f64,
}

impl Default for ThermalReference {
    fn default() -> Self {
        Self {
            area: 17_400.0,
            capacitance: 1.62e5,
            resistance: 0.575,
        }
    }
}

impl ThermalReference {
    /// J/(K cm²).
    pub fn capacitance_per_area(&self) -> f64 {
        self.capacitance / self.area
    }

    /// K cm²/W.
    pub fn resistance_times_area(&self) -> f64 {
        self.resistance * self.area
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceParams {
    /// Gross crossover per unit Faradaic rate and bar of pressure difference.
    pub crossover_coefficient: f64,
    /// Fraction of crossed-over H₂ recombined with O₂.
    pub recombination: f64,
    pub p_cathode: f64,
    pub p_anode: f64,
    pub drag_temperature_unit: DragTemperatureUnit,
    pub antoine: Antoine,
    pub thermal: ThermalReference,
    pub t_ambient: f64,
    pub v_thermoneutral: f64,
}

impl Default for BalanceParams {
    fn default() -> Self {
        Self {
            crossover_coefficient: 0.0031,
            recombination: 0.9,
            p_cathode: 30.0,
            p_anode: 1.0,
            drag_temperature_unit: DragTemperatureUnit::Celsius,
            antoine: Antoine::default(),
            thermal: ThermalReference::default(),
            t_ambient: T_STD,
            v_thermoneutral: V_THERMONEUTRAL,
        }
    }
}

impl BalanceParams {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if self.p_cathode < self.p_anode {
            return Err(BalanceError::NegativePressureDifference {
                p_cat: self.p_cathode,
                p_an: self.p_anode,
            });
        }
        if !(0.0..=1.0).contains(&self.recombination) {
            return Err(BalanceError::InvalidConversion(self.recombination));
        }
        Ok(())
    }

    /// Gross crossover as a fraction of the Faradaic H₂ rate.
    pub fn crossover_fraction(&self) -> f64 {
        self.crossover_coefficient * (self.p_cathode - self.p_anode)
    }

    /// Net H₂ product per Faradaic H₂.
    pub fn product_fraction(&self) -> f64 {
        1.0 - self.crossover_fraction()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct StackGeometry {
    pub n_cells: f64,
    /// cm².
    pub cell_area: f64,
    /// cm.
    pub electrode_thickness: f64,
    /// J/K.
    pub thermal_capacitance: f64,
    /// K/W, equivalently K·s/J.
    pub thermal_resistance: f64,
}

impl StackGeometry {
    pub fn scaled(n_cells: f64, cell_area: f64, reference: &ThermalReference) -> Self {
        let area = n_cells * cell_area;
        Self {
            n_cells,
            cell_area,
            electrode_thickness: 8.0e-3,
            thermal_capacitance: reference.capacitance_per_area() * area,
            thermal_resistance: reference.resistance_times_area() / area,
        }
    }

    pub fn active_area(&self) -> f64 {
        self.n_cells * self.cell_area
    }

    pub fn validate(&self) -> Result<(), BalanceError> {
        if !(self.n_cells >= 1.0) || !(self.cell_area > 0.0) {
            return Err(BalanceError::InvalidGeometry(
                "n_cells must be at least 1 and cell_area positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct FaradaicRates {
    pub h2_gen: f64,
    pub o2_gen: f64,
    pub h2o_consumed: f64,
}

pub fn faradaic_rates(i: f64, geom: &StackGeometry) -> FaradaicRates {
    let h2 = geom.n_cells * i * geom.cell_area / (2.0 * FARADAY);
    FaradaicRates {
        h2_gen: h2,
        o2_gen: h2 / 2.0,
        h2o_consumed: h2,
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Crossover {
    pub gross: f64,
    pub h2_to_anode: f64,
    pub h2_recombined: f64,
    pub water_from_recombination: f64,
    pub o2_consumed: f64,
}

/// H₂ permeation to the anode with partial catalytic recombination.
///
/// `coefficient` multiplies the Faradaic rate per bar of pressure difference.
pub fn h2_crossover(
    i: f64,
    p_cat: f64,
    p_an: f64,
    geom: &StackGeometry,
    coefficient: f64,
    conversion: f64,
) -> Result<Crossover, BalanceError> {
    if p_cat < p_an {
        return Err(BalanceError::NegativePressureDifference { p_cat, p_an });
    }
    if !(0.0..=1.0).contains(&conversion) {
        return Err(BalanceError::InvalidConversion(conversion));
    }
    let gross = geom.n_cells * coefficient * i * geom.cell_area / (2.0 * FARADAY) * (p_cat - p_an);
    let rec = gross * conversion;
    Ok(Crossover {
        gross,
        h2_to_anode: gross - rec,
        h2_recombined: rec,
        water_from_recombination: rec,
        o2_consumed: rec / 2.0,
    })
}

/// Drag coefficient n_g (mol H₂O per mol H⁺ pair) before clamping.
pub fn drag_coefficient<D: DualNum<Primitive = f64> + Copy>(
    i: D,
    temp_k: D,
    p_cat: f64,
    unit: DragTemperatureUnit,
) -> D {
    let t = match unit {
        DragTemperatureUnit::Celsius => temp_k - 273.15,
        DragTemperatureUnit::Kelvin => temp_k,
    };
    let p = p_cat;
    -i * 0.70 + 2.27 - 0.02 * p + i * (0.02 * p) + t * 0.003 + i * t * 0.005 - t * (0.0002 * p)
}

/// Water carried from anode to cathode (mol/s).
pub fn electroosmotic_drag(i: f64, temp: f64, p_cat: f64, geom: &StackGeometry, unit: DragTemperatureUnit) -> f64 {
    let mut ng = drag_coefficient(i, temp, p_cat, unit);
    if ng < 0.0 {
        warn!("drag coefficient {ng:.3} is negative at i = {i}, T = {temp}; clamped to zero");
        ng = 0.0;
    }
    geom.n_cells * ng * i * geom.cell_area / (2.0 * FARADAY)
}

/// Vapor carried per mole of dry gas at saturation.
pub fn vapor_ratio<D: DualNum<Primitive = f64> + Copy>(temp: D, pressure: f64, antoine: &Antoine) -> D {
    let y = antoine.saturation_pressure(temp) / pressure;
    y / (-y + 1.0)
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Default)]
pub struct FlowState {
    /// Stream 1/2.
    pub water_in: f64,
    /// Stream 3 liquid.
    pub anode_out_liquid_water: f64,
    pub anode_out_o2: f64,
    pub anode_out_h2: f64,
    pub anode_out_vapor: f64,
    /// Stream 11.
    pub n2_purge: f64,
    /// Stream 4, gas phase H₂ and vapor.
    pub cathode_out_h2: f64,
    pub cathode_out_vapor: f64,
    pub cathode_out_liquid_water: f64,
    /// Water dragged through the membrane.
    pub drag: f64,
}

impl FlowState {
    pub fn anode_out_gas(&self) -> f64 {
        self.anode_out_o2 + self.anode_out_h2 + self.anode_out_vapor + self.n2_purge
    }

    pub fn cathode_out_gas(&self) -> f64 {
        self.cathode_out_h2 + self.cathode_out_vapor
    }

    pub fn y_h2_anode(&self) -> f64 {
        let g = self.anode_out_gas();
        if g > 0.0 {
            self.anode_out_h2 / g
        } else {
            0.0
        }
    }

    pub fn y_o2_anode(&self) -> f64 {
        let g = self.anode_out_gas();
        if g > 0.0 {
            self.anode_out_o2 / g
        } else {
            0.0
        }
    }

    /// Dried product (stream 6).
    pub fn h2_net(&self) -> f64 {
        self.cathode_out_h2
    }

    /// Steady flows at current density `i`, with anode liquid outflow `liquid`
    /// and nitrogen purge `n2` chosen by the caller.
    pub fn steady(
        i: f64,
        temp: f64,
        n2: f64,
        liquid: f64,
        geom: &StackGeometry,
        params: &BalanceParams,
    ) -> Self {
        let rates = faradaic_rates(i, geom);
        let x = h2_crossover(
            i,
            params.p_cathode,
            params.p_anode,
            geom,
            params.crossover_coefficient,
            params.recombination,
        )
        .expect("validated balance parameters");
        let drag = electroosmotic_drag(i, temp, params.p_cathode, geom, params.drag_temperature_unit);
        let o2 = rates.o2_gen - x.o2_consumed;
        let h2_an = x.h2_to_anode;
        let vap_an = vapor_ratio(temp, params.p_anode, &params.antoine) * (o2 + h2_an + n2);
        let h2_cat = rates.h2_gen - x.gross;
        let vap_cat = vapor_ratio(temp, params.p_cathode, &params.antoine) * h2_cat;
        Self {
            water_in: liquid + vap_an + drag + rates.h2o_consumed - x.water_from_recombination,
            anode_out_liquid_water: liquid,
            anode_out_o2: o2,
            anode_out_h2: h2_an,
            anode_out_vapor: vap_an,
            n2_purge: n2,
            cathode_out_h2: h2_cat,
            cathode_out_vapor: vap_cat,
            cathode_out_liquid_water: drag - vap_cat,
            drag,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct AnodeResiduals {
    pub water: f64,
    /// dN_O₂/dt of the anode gas holdup.
    pub o2: f64,
    /// dN_H₂/dt of the anode gas holdup.
    pub h2: f64,
    /// Raoult's-law vapor equilibrium residual.
    pub vapor: f64,
}

pub fn anode_balance(
    flows: &FlowState,
    rates: &FaradaicRates,
    crossover: &Crossover,
    temp: f64,
    params: &BalanceParams,
) -> AnodeResiduals {
    let dry = flows.anode_out_o2 + flows.anode_out_h2 + flows.n2_purge;
    AnodeResiduals {
        water: flows.water_in - flows.anode_out_liquid_water - flows.anode_out_vapor - flows.drag
            - rates.h2o_consumed
            + crossover.water_from_recombination,
        o2: rates.o2_gen - crossover.o2_consumed - flows.anode_out_o2,
        h2: crossover.h2_to_anode - flows.anode_out_h2,
        vapor: flows.anode_out_vapor - vapor_ratio(temp, params.p_anode, &params.antoine) * dry,
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct CathodeResiduals {
    pub water: f64,
    /// dN_H₂/dt of the cathode gas holdup.
    pub h2: f64,
    pub vapor: f64,
}

pub fn cathode_balance(
    flows: &FlowState,
    rates: &FaradaicRates,
    crossover: &Crossover,
    drag: f64,
    temp: f64,
    params: &BalanceParams,
) -> CathodeResiduals {
    CathodeResiduals {
        water: drag - flows.cathode_out_liquid_water - flows.cathode_out_vapor,
        h2: rates.h2_gen - crossover.gross - flows.cathode_out_h2,
        vapor: flows.cathode_out_vapor
            - vapor_ratio(temp, params.p_cathode, &params.antoine) * flows.cathode_out_h2,
    }
}

/// Enthalpy carried out by the product streams relative to liquid water and
/// gases at 298.15 K (W). Inlet water and purge enter at ambient.
pub fn outflow_enthalpy<D: DualNum<Primitive = f64> + Copy>(
    temp: D,
    liquid_out: D,
    vapor_out: D,
    o2: D,
    h2: D,
    n2: D,
) -> D {
    let hl = species(Species::WaterLiquid).sensible_enthalpy(temp);
    let hv = vapor_enthalpy_from_liquid(temp);
    let ho = species(Species::Oxygen).sensible_enthalpy(temp);
    let hh = species(Species::Hydrogen).sensible_enthalpy(temp);
    let hn = species(Species::Nitrogen).sensible_enthalpy(temp);
    liquid_out * hl + vapor_out * hv + o2 * ho + h2 * hh + n2 * hn
}

/// Heat generated, lost to ambient and carried out by streams (all in W).
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct HeatTerms {
    pub generation: f64,
    pub loss: f64,
    pub outflow: f64,
}

pub fn heat_terms(
    temp: f64,
    flows: &FlowState,
    v_total: f64,
    i: f64,
    geom: &StackGeometry,
    params: &BalanceParams,
) -> HeatTerms {
    HeatTerms {
        generation: geom.n_cells * (v_total - params.v_thermoneutral) * i * geom.cell_area,
        loss: (temp - params.t_ambient) / geom.thermal_resistance,
        outflow: outflow_enthalpy(
            temp,
            flows.anode_out_liquid_water + flows.cathode_out_liquid_water,
            flows.anode_out_vapor + flows.cathode_out_vapor,
            flows.anode_out_o2,
            flows.anode_out_h2 + flows.cathode_out_h2,
            flows.n2_purge,
        ),
    }
}

/// dT/dt of the lumped stack (K/s).
pub fn energy_balance_rhs(
    temp: f64,
    flows: &FlowState,
    v_total: f64,
    i: f64,
    geom: &StackGeometry,
    params: &BalanceParams,
) -> f64 {
    let h = heat_terms(temp, flows, v_total, i, geom, params);
    (h.generation - h.loss - h.outflow) / geom.thermal_capacitance
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell() -> StackGeometry {
        StackGeometry::scaled(1.0, 450.0, &ThermalReference::default())
    }

    #[test]
    fn faradaic_arithmetic() {
        let r = faradaic_rates(2.0, &one_cell());
        assert!((r.h2_gen - 900.0 / (2.0 * 96_485.0)).abs() < 1e-15);
        assert!((r.h2_gen - 4.664e-3).abs() < 1e-6);
        assert_eq!(r.o2_gen, r.h2_gen / 2.0);
        assert_eq!(faradaic_rates(0.0, &one_cell()).h2_gen, 0.0);
    }

    #[test]
    fn crossover_literal_coefficient() {
        let x = h2_crossover(1.0, 30.0, 1.0, &one_cell(), 0.31, 0.9).unwrap();
        let gross = 0.31 * 450.0 * 29.0 / (2.0 * 96_485.0);
        assert!((x.gross - gross).abs() < 1e-15);
        assert!((x.gross - 2.097e-2).abs() < 1e-5);
        assert!((x.h2_to_anode - 2.097e-3).abs() < 1e-6);
        assert_eq!(x.o2_consumed, x.h2_recombined / 2.0);
        let zero = h2_crossover(1.0, 5.0, 5.0, &one_cell(), 0.31, 0.9).unwrap();
        assert_eq!(zero.gross, 0.0);
        let full = h2_crossover(1.0, 30.0, 1.0, &one_cell(), 0.31, 1.0).unwrap();
        assert_eq!(full.h2_to_anode, 0.0);
        assert!(h2_crossover(1.0, 1.0, 30.0, &one_cell(), 0.31, 0.9).is_err());
    }

    #[test]
    fn drag_polynomial_celsius() {
        let ng = drag_coefficient(1.0_f64, 333.15, 30.0, DragTemperatureUnit::Celsius);
        assert!((ng - 1.69).abs() < 1e-12, "{ng}");
        assert_eq!(electroosmotic_drag(0.0, 333.15, 30.0, &one_cell(), DragTemperatureUnit::Celsius), 0.0);
    }

    #[test]
    fn negative_drag_is_clamped() {
        // High pressure at low current drives the polynomial negative.
        let ng = drag_coefficient(0.1, 353.15, 200.0, DragTemperatureUnit::Celsius);
        assert!(ng < 0.0);
        let f = electroosmotic_drag(0.1, 353.15, 200.0, &one_cell(), DragTemperatureUnit::Celsius);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn antoine_boiling_point() {
        let a = Antoine::default();
        assert!((a.saturation_pressure(373.15_f64) - 1.013).abs() < 0.02);
        assert!((a.saturation_pressure(353.15_f64) - 0.474).abs() < 0.005);
    }

    #[test]
    fn steady_flows_close_both_balances() {
        let p = BalanceParams::default();
        let g = StackGeometry::scaled(1000.0, 450.0, &p.thermal);
        let f = FlowState::steady(1.0, 343.15, 1e-3, 0.2, &g, &p);
        let r = faradaic_rates(1.0, &g);
        let x = h2_crossover(1.0, 30.0, 1.0, &g, p.crossover_coefficient, p.recombination).unwrap();
        let a = anode_balance(&f, &r, &x, 343.15, &p);
        let c = cathode_balance(&f, &r, &x, f.drag, 343.15, &p);
        for v in [a.water, a.o2, a.h2, a.vapor, c.water, c.h2, c.vapor] {
            assert!(v.abs() < 1e-10, "{v}");
        }
        assert!((c.h2 - 0.0).abs() < 1e-12);
        assert!((f.h2_net() - (r.h2_gen - x.gross)).abs() < 1e-12);
    }

    #[test]
    fn zero_state_has_zero_residuals() {
        let p = BalanceParams::default();
        let g = one_cell();
        let f = FlowState::default();
        let r = faradaic_rates(0.0, &g);
        let x = h2_crossover(0.0, 30.0, 1.0, &g, p.crossover_coefficient, p.recombination).unwrap();
        let a = anode_balance(&f, &r, &x, 340.0, &p);
        let c = cathode_balance(&f, &r, &x, 0.0, 340.0, &p);
        for v in [a.water, a.o2, a.h2, a.vapor, c.water, c.h2, c.vapor] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn anode_h2_fraction_rises_when_gas_falls() {
        let p = BalanceParams::default();
        let g = StackGeometry::scaled(100.0, 450.0, &p.thermal);
        let mut f = FlowState::steady(1.0, 343.15, 0.0, 0.1, &g, &p);
        let before = f.y_h2_anode();
        f.anode_out_o2 *= 0.5;
        assert!(f.y_h2_anode() > before);
    }

    #[test]
    fn thermoneutral_equilibrium_gives_zero_rate() {
        let p = BalanceParams::default();
        let g = StackGeometry::scaled(100.0, 450.0, &p.thermal);
        let f = FlowState::default();
        assert_eq!(energy_balance_rhs(p.t_ambient, &f, 1.48, 1.0, &g, &p), 0.0);
    }

    #[test]
    fn heat_generation_is_linear_in_overvoltage() {
        let p = BalanceParams::default();
        let g = StackGeometry::scaled(100.0, 450.0, &p.thermal);
        let f = FlowState::default();
        let a = heat_terms(340.0, &f, 1.58, 1.0, &g, &p).generation;
        let b = heat_terms(340.0, &f, 1.68, 1.0, &g, &p).generation;
        assert!((b - 2.0 * a).abs() < 1e-9 * b);
    }

    #[test]
    fn large_water_feed_cools_an_idling_stack() {
        let p = BalanceParams::default();
        let g = StackGeometry::scaled(1000.0, 450.0, &p.thermal);
        let f = FlowState::steady(0.1, 353.0, 0.0, 50.0, &g, &p);
        assert!(energy_balance_rhs(353.0, &f, 1.5, 0.1, &g, &p) < 0.0);
    }
}
