//! Shomate enthalpy and entropy correlations.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_dual::DualNum;
use serde::Deserialize;

/// Reference temperature of the correlations (K).
pub const T_STD: f64 = 298.15;

const ASSET: &str = include_str!("../data/shomate.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct Shomate {
    pub range_k: [f64; 2],
    pub coefficients: [f64; 8],
    /// kJ/mol at 298.15 K.
    pub formation_enthalpy: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ShomateTable {
    pub schema_version: u32,
    pub species: BTreeMap<String, Shomate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    WaterLiquid,
    WaterVapor,
    Hydrogen,
    Oxygen,
    Nitrogen,
}

impl Species {
    fn key(self) -> &'static str {
        match self {
            Species::WaterLiquid => "H2O_l",
            Species::WaterVapor => "H2O_g",
            Species::Hydrogen => "H2",
            Species::Oxygen => "O2",
            Species::Nitrogen => "N2",
        }
    }
}

/// The shipped coefficient table.
pub fn table() -> &'static ShomateTable {
    static TABLE: OnceLock<ShomateTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let t: ShomateTable = toml::from_str(ASSET).expect("bundled Shomate table parses");
        assert_eq!(t.schema_version, 1, "unsupported Shomate table schema");
        t
    })
}

pub fn species(s: Species) -> &'static Shomate {
    table()
        .species
        .get(s.key())
        .unwrap_or_else(|| panic!("species {} missing from Shomate table", s.key()))
}

impl Shomate {
    /// Sensible enthalpy H(T) - H(298.15) in J/mol.
    pub fn sensible_enthalpy<D: DualNum<Primitive = f64> + Copy>(&self, temp: D) -> D {
        let [a, b, c, d, e, f, _, h] = self.coefficients;
        let t = temp / 1000.0;
        let t2 = t * t;
        (t * a + t2 * (b / 2.0) + t2 * t * (c / 3.0) + t2 * t2 * (d / 4.0) - t.recip() * e
            + (f - h))
            * 1000.0
    }

    /// Absolute enthalpy including formation, J/mol.
    pub fn enthalpy<D: DualNum<Primitive = f64> + Copy>(&self, temp: D) -> D {
        self.sensible_enthalpy(temp) + self.formation_enthalpy * 1000.0
    }

    /// Absolute entropy, J/(mol K).
    pub fn entropy<D: DualNum<Primitive = f64> + Copy>(&self, temp: D) -> D {
        let [a, b, c, d, e, _, g, _] = self.coefficients;
        let t = temp / 1000.0;
        let t2 = t * t;
        t.ln() * a + t * b + t2 * (c / 2.0) + t2 * t * (d / 3.0) - t2.recip() * (e / 2.0) + g
    }

    pub fn heat_capacity(&self, temp: f64) -> f64 {
        let [a, b, c, d, e, ..] = self.coefficients;
        let t = temp / 1000.0;
        a + b * t + c * t * t + d * t * t * t + e / (t * t)
    }
}

/// Enthalpy of a vapor stream at `temp` relative to liquid water at 298.15 K.
pub fn vapor_enthalpy_from_liquid<D: DualNum<Primitive = f64> + Copy>(temp: D) -> D {
    let g = species(Species::WaterVapor);
    let l = species(Species::WaterLiquid);
    g.sensible_enthalpy(temp) + (g.formation_enthalpy - l.formation_enthalpy) * 1000.0
}
