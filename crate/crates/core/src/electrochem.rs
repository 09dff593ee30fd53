//! Cell voltage: open-circuit, activation, ohmic and degradation terms.

use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::thermo::{species, Species};

pub const FARADAY: f64 = 96_485.0;
pub const GAS_CONSTANT: f64 = 8.314;
/// Validity range of the enthalpy/entropy correlations used for V_oc (K).
pub const VOC_RANGE_K: (f64, f64) = (273.0, 373.0);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ElectrochemError {
    #[error("temperature {0} K is outside the correlation range 273-373 K")]
    TemperatureOutOfRange(f64),
    #[error("current density must be non-negative, got {0}")]
    NegativeCurrent(f64),
    #[error("cumulative degradation must be non-negative, got {0}")]
    NegativeDegradation(f64),
    #[error("invalid electrochemical parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ElectrochemParams {
    pub alpha_an: f64,
    pub alpha_cat: f64,
    /// A/cm².
    pub i0_an_ref: f64,
    pub i0_cat_ref: f64,
    pub gamma_an: f64,
    pub gamma_cat: f64,
    /// J/mol.
    pub activation_energy: f64,
    /// Electrons per reaction in the Tafel slope RT/(α n F).
    pub activation_electrons: f64,
    /// cm.
    pub membrane_thickness: f64,
    /// mol H₂O per mol SO₃.
    pub hydration_factor: f64,
    /// bar, hydrogen side.
    pub p_cathode: f64,
    /// bar, oxygen side.
    pub p_anode: f64,
    pub t_ref: f64,
    pub faraday: f64,
    pub gas_constant: f64,
}

impl Default for ElectrochemParams {
    fn default() -> Self {
        Self {
            alpha_an: 0.58,
            alpha_cat: 1.28,
            i0_an_ref: 5e-12,
            i0_cat_ref: 1e-3,
            gamma_an: 1198.0,
            gamma_cat: 286.0,
            activation_energy: 66_000.0,
            activation_electrons: 2.0,
            membrane_thickness: 1.75e-2,
            hydration_factor: 21.0,
            p_cathode: 30.0,
            p_anode: 1.0,
            t_ref: 298.15,
            faraday: FARADAY,
            gas_constant: GAS_CONSTANT,
        }
    }
}

impl ElectrochemParams {
    pub fn validate(&self) -> Result<(), ElectrochemError> {
        let bad = |m: &str| Err(ElectrochemError::InvalidParams(m.to_string()));
        if self.alpha_an <= 0.0 || self.alpha_cat <= 0.0 {
            return bad("charge-transfer coefficients must be positive");
        }
        if self.alpha_an + self.alpha_cat > 2.0 + 1e-12 {
            return bad("alpha_an + alpha_cat must not exceed 2");
        }
        let positive = [
            self.i0_an_ref,
            self.i0_cat_ref,
            self.gamma_an,
            self.gamma_cat,
            self.membrane_thickness,
            self.p_cathode,
            self.p_anode,
            self.t_ref,
            self.faraday,
            self.gas_constant,
            self.activation_electrons,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("pressures, thicknesses and reference currents must be positive");
        }
        if self.activation_energy < 0.0 {
            return bad("activation energy must be non-negative");
        }
        if 0.00514 * self.hydration_factor - 0.00326 <= 0.0 {
            return bad("hydration factor gives non-positive conductivity");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCondition {
    /// A/cm².
    pub current_density: f64,
    /// K.
    pub temperature: f64,
}

impl CellCondition {
    pub fn new(current_density: f64, temperature: f64) -> Self {
        Self {
            current_density,
            temperature,
        }
    }
}

fn check_temperature(t: f64) -> Result<(), ElectrochemError> {
    if !(VOC_RANGE_K.0..=VOC_RANGE_K.1).contains(&t) {
        return Err(ElectrochemError::TemperatureOutOfRange(t));
    }
    Ok(())
}

fn check_current(i: f64) -> Result<(), ElectrochemError> {
    if !(i >= 0.0) {
        return Err(ElectrochemError::NegativeCurrent(i));
    }
    Ok(())
}

/// Reversible potential at unit activities, ΔG(T)/2F.
pub fn standard_reversible_potential<D: DualNum<Primitive = f64> + Copy>(
    temp: D,
    p: &ElectrochemParams,
) -> D {
    let (l, h2, o2) = (
        species(Species::WaterLiquid),
        species(Species::Hydrogen),
        species(Species::Oxygen),
    );
    let dh = h2.enthalpy(temp) + o2.enthalpy(temp) * 0.5 - l.enthalpy(temp);
    let ds = h2.entropy(temp) + o2.entropy(temp) * 0.5 - l.entropy(temp);
    (dh - temp * ds) / (2.0 * p.faraday)
}

pub fn open_circuit_voltage_raw<D: DualNum<Primitive = f64> + Copy>(
    temp: D,
    p: &ElectrochemParams,
) -> D {
    let nernst = (p.p_cathode * p.p_anode.sqrt()).ln();
    standard_reversible_potential(temp, p) + temp * (p.gas_constant / (2.0 * p.faraday) * nernst)
}

pub fn activation_overpotential_raw<D: DualNum<Primitive = f64> + Copy>(
    i: D,
    temp: D,
    p: &ElectrochemParams,
) -> D {
    let arr = ((temp.recip() - 1.0 / p.t_ref) * (-p.activation_energy / p.gas_constant)).exp();
    let i0_an = arr * (p.gamma_an * p.i0_an_ref);
    let i0_cat = arr * (p.gamma_cat * p.i0_cat_ref);
    let rtf = temp * (p.gas_constant / (p.activation_electrons * p.faraday));
    rtf / p.alpha_an * (i / (i0_an * 2.0)).asinh() + rtf / p.alpha_cat * (i / (i0_cat * 2.0)).asinh()
}

/// Membrane conductivity in S/cm.
pub fn membrane_conductivity<D: DualNum<Primitive = f64> + Copy>(
    temp: D,
    p: &ElectrochemParams,
) -> D {
    ((temp.recip() * -1.0 + 1.0 / 303.0) * 1268.0).exp() * (0.00514 * p.hydration_factor - 0.00326)
}

pub fn ohmic_overpotential_raw<D: DualNum<Primitive = f64> + Copy>(
    i: D,
    temp: D,
    p: &ElectrochemParams,
) -> D {
    i * p.membrane_thickness / membrane_conductivity(temp, p)
}

/// V_oc + V_act + V_ohm without range checks; used inside the optimizer.
pub fn undegraded_voltage<D: DualNum<Primitive = f64> + Copy>(
    i: D,
    temp: D,
    p: &ElectrochemParams,
) -> D {
    open_circuit_voltage_raw(temp, p)
        + activation_overpotential_raw(i, temp, p)
        + ohmic_overpotential_raw(i, temp, p)
}

pub fn open_circuit_voltage(
    cond: CellCondition,
    params: &ElectrochemParams,
) -> Result<f64, ElectrochemError> {
    check_temperature(cond.temperature)?;
    Ok(open_circuit_voltage_raw(cond.temperature, params))
}

pub fn activation_overpotential(
    cond: CellCondition,
    params: &ElectrochemParams,
) -> Result<f64, ElectrochemError> {
    check_current(cond.current_density)?;
    if !(cond.temperature > 0.0) {
        return Err(ElectrochemError::TemperatureOutOfRange(cond.temperature));
    }
    Ok(activation_overpotential_raw(
        cond.current_density,
        cond.temperature,
        params,
    ))
}

pub fn ohmic_overpotential(
    cond: CellCondition,
    params: &ElectrochemParams,
) -> Result<f64, ElectrochemError> {
    check_current(cond.current_density)?;
    if !(cond.temperature > 0.0) {
        return Err(ElectrochemError::TemperatureOutOfRange(cond.temperature));
    }
    Ok(ohmic_overpotential_raw(
        cond.current_density,
        cond.temperature,
        params,
    ))
}

pub fn total_voltage(
    cond: CellCondition,
    cumulative_degradation: f64,
    params: &ElectrochemParams,
) -> Result<f64, ElectrochemError> {
    if !(cumulative_degradation >= 0.0) {
        return Err(ElectrochemError::NegativeDegradation(cumulative_degradation));
    }
    Ok(open_circuit_voltage(cond, params)?
        + activation_overpotential(cond, params)?
        + ohmic_overpotential(cond, params)?
        + cumulative_degradation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ElectrochemParams {
        ElectrochemParams::default()
    }

    #[test]
    fn open_circuit_at_standard_state() {
        let mut q = p();
        q.p_cathode = 1.0;
        q.p_anode = 1.0;
        let v = open_circuit_voltage(CellCondition::new(0.0, 298.15), &q).unwrap();
        assert!((v - 1.229).abs() < 0.005, "{v}");
    }

    #[test]
    fn nernst_shift_at_thirty_bar() {
        let mut q = p();
        q.p_cathode = 1.0;
        let v1 = open_circuit_voltage(CellCondition::new(0.0, 298.15), &q).unwrap();
        let v30 = open_circuit_voltage(CellCondition::new(0.0, 298.15), &p()).unwrap();
        let shift = 8.314 * 298.15 / (2.0 * 96_485.0) * 30.0_f64.ln();
        assert!((v30 - v1 - shift).abs() < 1e-12);
        assert!((v30 - 1.2727).abs() < 0.005, "{v30}");
    }

    #[test]
    fn open_circuit_decreases_with_temperature() {
        let q = p();
        let mut t = 333.0;
        while t < 353.0 {
            let a = open_circuit_voltage(CellCondition::new(0.0, t), &q).unwrap();
            let b = open_circuit_voltage(CellCondition::new(0.0, t + 0.5), &q).unwrap();
            assert!(b < a);
            t += 1.0;
        }
    }

    #[test]
    fn temperature_outside_correlation_is_rejected() {
        let e = open_circuit_voltage(CellCondition::new(1.0, 400.0), &p()).unwrap_err();
        assert_eq!(e, ElectrochemError::TemperatureOutOfRange(400.0));
        assert!(open_circuit_voltage(CellCondition::new(1.0, 250.0), &p()).is_err());
    }

    #[test]
    fn activation_vanishes_at_zero_current_and_grows() {
        let q = p();
        assert_eq!(activation_overpotential(CellCondition::new(0.0, 340.0), &q).unwrap(), 0.0);
        let a = activation_overpotential(CellCondition::new(0.5, 340.0), &q).unwrap();
        let b = activation_overpotential(CellCondition::new(0.6, 340.0), &q).unwrap();
        assert!(b > a && a > 0.0);
        assert!(activation_overpotential(CellCondition::new(-1.0, 340.0), &q).is_err());
    }

    #[test]
    fn ohmic_plug_in_at_303_kelvin() {
        let v = ohmic_overpotential(CellCondition::new(1.0, 303.0), &p()).unwrap();
        let sigma = 0.00514_f64 * 21.0 - 0.00326;
        assert!((sigma - 0.10468).abs() < 1e-12);
        assert!((v - 0.0175 / sigma).abs() < 1e-12);
        assert!((v - 0.1672).abs() < 1e-4);
        let hot = ohmic_overpotential(CellCondition::new(1.0, 340.0), &p()).unwrap();
        assert!(hot < v);
        assert_eq!(ohmic_overpotential(CellCondition::new(0.0, 340.0), &p()).unwrap(), 0.0);
    }

    #[test]
    fn polarization_anchors() {
        let v60 = total_voltage(CellCondition::new(1.0, 333.15), 0.0, &p()).unwrap();
        let v80 = total_voltage(CellCondition::new(1.0, 353.15), 0.0, &p()).unwrap();
        assert!((v60 - 1.78).abs() <= 0.02, "{v60}");
        assert!((v80 - 1.70).abs() <= 0.02, "{v80}");
    }

    #[test]
    fn degradation_is_additive() {
        let c = CellCondition::new(1.3, 345.0);
        let a = total_voltage(c, 0.0, &p()).unwrap();
        let b = total_voltage(c, 0.3, &p()).unwrap();
        assert!((b - a - 0.3).abs() < 1e-12);
        assert!(total_voltage(c, -0.1, &p()).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(p().validate().is_ok());
        let mut q = p();
        q.alpha_an = 1.5;
        assert!(q.validate().is_err());
        let mut q = p();
        q.p_anode = 0.0;
        assert!(q.validate().is_err());
    }
}
