//! Capital and operating cost accounting, present value and LCOH.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::electrochem::{undegraded_voltage, ElectrochemParams};

pub const CELL_AREA_CM2: f64 = 450.0;
pub const H2_MOLAR_MASS: f64 = 2.016e-3;
pub const N2_MOLAR_MASS: f64 = 28.014e-3;
pub const WATER_MOLAR_MASS: f64 = 18.015e-3;
pub const LITERS_PER_GALLON: f64 = 3.785_411_784;

/// Design point used to split the aggregate BoP CAPEX into mechanical and
/// electrical parts.
pub const REFERENCE_N_CELLS: f64 = 116_200.0;
pub const REFERENCE_DAILY_KG: f64 = 50_000.0;

#[derive(Debug, Error)]
pub enum EconomicsError {
    #[error("annual hydrogen production must be positive, got {0} kg")]
    ZeroProduction(f64),
    #[error("replacement interval must be at least one year")]
    Interval,
    #[error("invalid cost parameter: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CostSet {
    #[default]
    #[serde(rename = "2022")]
    Y2022,
    #[serde(rename = "2030-mid")]
    Mid2030,
    #[serde(rename = "2030-low")]
    Low2030,
    #[serde(rename = "2030-high")]
    High2030,
    #[serde(rename = "custom")]
    Custom,
}

impl std::str::FromStr for CostSet {
    type Err = EconomicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2022" => Ok(Self::Y2022),
            "2030-mid" => Ok(Self::Mid2030),
            "2030-low" => Ok(Self::Low2030),
            "2030-high" => Ok(Self::High2030),
            "custom" => Ok(Self::Custom),
            other => Err(EconomicsError::Invalid(format!("unknown cost set '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// $/cm².
    pub stack_capex: f64,
    /// Aggregate BoP CAPEX, $/kWe.
    pub bop_capex: f64,
    /// $/kg H₂.
    pub storage_capex: f64,
    /// Share of `bop_capex` attributed to mechanical BoP.
    pub mbop_share: f64,
    /// $ per kg/day; calibrated from `bop_capex` when absent.
    pub alpha_mbop: Option<f64>,
    /// $/kWe; calibrated from `bop_capex` when absent.
    pub alpha_ebop: Option<f64>,
    pub site_prep: f64,
    pub engineering: f64,
    pub contingency: f64,
    pub permitting: f64,
    pub planned_replacement: f64,
    pub unplanned_replacement: f64,
    /// Fraction of labor.
    pub overhead: f64,
    /// Fraction of total CAPEX.
    pub tax_insurance: f64,
    /// $/yr.
    pub material: f64,
    /// kWh/kg H₂.
    pub bop_electricity: f64,
    /// $/h per worker.
    pub labor_rate: f64,
    pub workers: f64,
    pub operating_days: f64,
    /// Staffed hours per operating day.
    pub shift_hours: f64,
    pub plant_life: u32,
    pub discount_rate: f64,
    /// $ per 1000 gal.
    pub water_price: f64,
    /// $/kg.
    pub n2_price: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            stack_capex: 2.37,
            bop_capex: 289.0,
            storage_capex: 500.0,
            mbop_share: 0.5,
            alpha_mbop: None,
            alpha_ebop: None,
            site_prep: 0.02,
            engineering: 0.10,
            contingency: 0.15,
            permitting: 0.15,
            planned_replacement: 0.15,
            unplanned_replacement: 0.005,
            overhead: 0.20,
            tax_insurance: 0.02,
            material: 0.0,
            bop_electricity: 5.1,
            labor_rate: 70.0,
            workers: 10.0,
            operating_days: 350.0,
            shift_hours: 24.0,
            plant_life: 40,
            discount_rate: 0.08,
            water_price: 2.78,
            n2_price: 0.20,
        }
    }
}

/// Stack nameplate power (kW) of the reference design at 4 A/cm² and 80 °C.
pub fn reference_nameplate_kw() -> f64 {
    let v = undegraded_voltage(4.0, 353.15, &ElectrochemParams::default());
    REFERENCE_N_CELLS * CELL_AREA_CM2 * 4.0 * v / 1000.0
}

impl CostParams {
    pub fn for_set(set: CostSet) -> Self {
        let base = Self::default();
        match set {
            CostSet::Y2022 | CostSet::Custom => base,
            CostSet::Mid2030 => Self {
                stack_capex: 0.79,
                bop_capex: 103.0,
                storage_capex: 300.0,
                ..base
            },
            CostSet::Low2030 => Self {
                stack_capex: 0.39,
                bop_capex: 103.0,
                storage_capex: 300.0,
                ..base
            },
            CostSet::High2030 => Self {
                stack_capex: 1.00,
                bop_capex: 103.0,
                storage_capex: 300.0,
                ..base
            },
        }
    }

    pub fn alpha_ebop(&self) -> f64 {
        self.alpha_ebop
            .unwrap_or((1.0 - self.mbop_share) * self.bop_capex)
    }

    pub fn alpha_mbop(&self) -> f64 {
        self.alpha_mbop.unwrap_or_else(|| {
            self.mbop_share * self.bop_capex * reference_nameplate_kw() / REFERENCE_DAILY_KG
        })
    }

    pub fn indirect_fraction(&self) -> f64 {
        self.site_prep + self.engineering + self.contingency + self.permitting
    }

    /// Deionized water price in $/mol.
    pub fn water_price_per_mol(&self) -> f64 {
        let mol_per_gallon = LITERS_PER_GALLON / WATER_MOLAR_MASS;
        self.water_price / 1000.0 / mol_per_gallon
    }

    pub fn n2_price_per_mol(&self) -> f64 {
        self.n2_price * N2_MOLAR_MASS
    }

    pub fn labor(&self) -> f64 {
        self.labor_rate * self.workers * self.shift_hours * self.operating_days
    }

    pub fn validate(&self) -> Result<(), EconomicsError> {
        let fractions = [
            ("mbop_share", self.mbop_share),
            ("site_prep", self.site_prep),
            ("engineering", self.engineering),
            ("contingency", self.contingency),
            ("permitting", self.permitting),
            ("planned_replacement", self.planned_replacement),
            ("unplanned_replacement", self.unplanned_replacement),
            ("overhead", self.overhead),
            ("tax_insurance", self.tax_insurance),
            ("discount_rate", self.discount_rate),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(EconomicsError::Invalid(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let prices = [
            ("stack_capex", self.stack_capex),
            ("bop_capex", self.bop_capex),
            ("storage_capex", self.storage_capex),
            ("material", self.material),
            ("bop_electricity", self.bop_electricity),
            ("labor_rate", self.labor_rate),
            ("workers", self.workers),
            ("operating_days", self.operating_days),
            ("shift_hours", self.shift_hours),
            ("water_price", self.water_price),
            ("n2_price", self.n2_price),
            ("alpha_mbop", self.alpha_mbop.unwrap_or(0.0)),
            ("alpha_ebop", self.alpha_ebop.unwrap_or(0.0)),
        ];
        for (name, v) in prices {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(EconomicsError::Invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if self.plant_life == 0 {
            return Err(EconomicsError::Invalid("plant_life must be at least one year".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
pub struct CapexBreakdown {
    pub c_stack_bare: f64,
    pub c_mbop: f64,
    pub c_ebop: f64,
    /// Stack including BoP; this is the direct capital.
    pub c_stack: f64,
    pub c_storage: f64,
    pub direct: f64,
    pub indirect: f64,
    pub total: f64,
}

pub fn capex(
    n_cells: f64,
    storage_days: f64,
    peak_power_kwe: f64,
    daily_h2_kg: f64,
    p: &CostParams,
) -> CapexBreakdown {
    if n_cells <= 0.0 {
        log::warn!("capex evaluated with {n_cells} cells");
    }
    let c_stack_bare = n_cells * CELL_AREA_CM2 * p.stack_capex;
    let c_mbop = p.alpha_mbop() * daily_h2_kg;
    let c_ebop = p.alpha_ebop() * peak_power_kwe;
    let c_stack = c_stack_bare + c_mbop + c_ebop;
    let c_storage = storage_days * daily_h2_kg * p.storage_capex;
    let direct = c_stack;
    let indirect = p.indirect_fraction() * direct;
    CapexBreakdown {
        c_stack_bare,
        c_mbop,
        c_ebop,
        c_stack,
        c_storage,
        direct,
        indirect,
        total: direct + indirect + c_storage,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
pub struct FopexBreakdown {
    pub labor: f64,
    pub overhead: f64,
    pub tax_insurance: f64,
    pub material: f64,
    pub total: f64,
}

pub fn annual_fopex(p: &CostParams, total_capex: f64) -> FopexBreakdown {
    let labor = p.labor();
    let overhead = p.overhead * labor;
    let tax_insurance = p.tax_insurance * total_capex;
    FopexBreakdown {
        labor,
        overhead,
        tax_insurance,
        material: p.material,
        total: labor + overhead + tax_insurance + p.material,
    }
}

/// Yearly quantities from one solved operating year.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
pub struct AnnualStreams {
    /// Year-one vOPEX of a fresh stack ($/yr).
    pub vopex: f64,
    /// Extra electricity cost per volt of carried-over degradation ($/V/yr).
    pub elec_cost_per_volt: f64,
    /// Δ¹ (V).
    pub degradation_per_year: f64,
    pub annual_h2_kg: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
pub struct LcohBreakdown {
    pub capex: f64,
    pub planned_replacement: f64,
    pub unplanned_replacement: f64,
    pub fopex: f64,
    pub vopex: f64,
}

impl LcohBreakdown {
    pub fn total(&self) -> f64 {
        self.capex + self.planned_replacement + self.unplanned_replacement + self.fopex + self.vopex
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct CostReport {
    pub capex: CapexBreakdown,
    pub fopex_annual: FopexBreakdown,
    pub capex_total: f64,
    pub planned_replacement_pv: f64,
    pub unplanned_replacement_pv: f64,
    pub fopex_pv: f64,
    pub vopex_pv: f64,
    pub pv_total: f64,
    pub pv_h2: f64,
    pub lcoh: f64,
    pub lcoh_breakdown: LcohBreakdown,
    pub replacement_interval: u32,
    pub replacement_ratio: f64,
    pub replacement_years: Vec<u32>,
    pub degradation_per_year: f64,
    pub utilization: f64,
    pub days_storage: f64,
    pub n_cells: f64,
    pub annual_h2_kg: f64,
    pub vopex_annual: f64,
}

pub fn discount_factor(year: u32, rate: f64) -> f64 {
    (1.0 + rate).powi(-(year as i32))
}

/// Discounted H₂ production over the plant life (kg).
pub fn pv_h2(annual_h2_kg: f64, p: &CostParams) -> f64 {
    (1..=p.plant_life)
        .map(|y| annual_h2_kg * discount_factor(y, p.discount_rate))
        .sum()
}

pub fn lcoh(pv_total: f64, annual_h2_kg: f64, p: &CostParams) -> Result<f64, EconomicsError> {
    if !(annual_h2_kg > 0.0) {
        return Err(EconomicsError::ZeroProduction(annual_h2_kg));
    }
    Ok(pv_total / pv_h2(annual_h2_kg, p))
}

/// Discounts CAPEX and all yearly streams over the plant life.
///
/// Planned replacement is charged in every year divisible by `interval`;
/// degradation carried into year `j` after a replacement adds
/// `(j − 1)·Δ¹·elec_cost_per_volt` to that year's vOPEX.
pub fn present_value(
    capex: &CapexBreakdown,
    interval: u32,
    streams: &AnnualStreams,
    p: &CostParams,
) -> Result<CostReport, EconomicsError> {
    if interval == 0 {
        return Err(EconomicsError::Interval);
    }
    let fopex = annual_fopex(p, capex.total);
    let mut report = CostReport {
        capex: *capex,
        fopex_annual: fopex,
        capex_total: capex.total,
        replacement_interval: interval,
        degradation_per_year: streams.degradation_per_year,
        annual_h2_kg: streams.annual_h2_kg,
        vopex_annual: streams.vopex,
        ..Default::default()
    };
    for y in 1..=p.plant_life {
        let df = discount_factor(y, p.discount_rate);
        if y % interval == 0 {
            report.planned_replacement_pv += p.planned_replacement * capex.direct * df;
            report.replacement_years.push(y);
        }
        report.unplanned_replacement_pv += p.unplanned_replacement * capex.direct * df;
        report.fopex_pv += fopex.total * df;
        let j = (y - 1) % interval;
        let escalation = j as f64 * streams.degradation_per_year * streams.elec_cost_per_volt;
        report.vopex_pv += (streams.vopex + escalation) * df;
    }
    report.pv_total = capex.total
        + report.planned_replacement_pv
        + report.unplanned_replacement_pv
        + report.fopex_pv
        + report.vopex_pv;
    report.pv_h2 = pv_h2(streams.annual_h2_kg, p);
    report.lcoh = lcoh(report.pv_total, streams.annual_h2_kg, p)?;
    let h = report.pv_h2;
    report.lcoh_breakdown = LcohBreakdown {
        capex: capex.total / h,
        planned_replacement: report.planned_replacement_pv / h,
        unplanned_replacement: report.unplanned_replacement_pv / h,
        fopex: report.fopex_pv / h,
        vopex: report.vopex_pv / h,
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn streams(vopex: f64, dv: f64) -> AnnualStreams {
        AnnualStreams {
            vopex,
            elec_cost_per_volt: 2.0e7,
            degradation_per_year: dv,
            annual_h2_kg: 50_000.0 * 365.0,
        }
    }

    #[test]
    fn bare_stack_cost_2022() {
        let c = capex(116_200.0, 0.5, 0.0, 0.0, &CostParams::default());
        let expected = 116_200.0 * 450.0 * 2.37;
        assert!((c.c_stack_bare - expected).abs() < 1e-6);
        assert!((c.c_stack_bare - 123.9e6).abs() < 0.1e6);
    }

    #[test]
    fn zero_cells_costs_nothing() {
        let c = capex(0.0, 0.0, 0.0, 0.0, &CostParams::default());
        assert_eq!(c.c_stack_bare, 0.0);
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn doubling_stack_price_doubles_bare_stack_only() {
        let p = CostParams::default();
        let q = CostParams {
            stack_capex: 2.0 * p.stack_capex,
            ..p.clone()
        };
        let a = capex(1e5, 1.0, 2e5, 5e4, &p);
        let b = capex(1e5, 1.0, 2e5, 5e4, &q);
        assert!((b.c_stack_bare - 2.0 * a.c_stack_bare).abs() < 1e-6);
        assert_eq!(a.c_mbop, b.c_mbop);
        assert_eq!(a.c_ebop, b.c_ebop);
        assert_eq!(a.c_storage, b.c_storage);
    }

    #[test]
    fn bop_split_matches_aggregate_at_reference() {
        let p = CostParams::default();
        let pk = reference_nameplate_kw();
        let total = p.alpha_mbop() * REFERENCE_DAILY_KG + p.alpha_ebop() * pk;
        assert!((total / pk - 289.0).abs() < 1e-9);
    }

    #[test]
    fn labor_convention() {
        let f = annual_fopex(&CostParams::default(), 0.0);
        assert!((f.labor - 5.88e6).abs() < 1e-6);
        assert_eq!(f.tax_insurance, 0.0);
        assert!((f.overhead - 0.2 * f.labor).abs() < 1e-9);
    }

    #[test]
    fn water_price_per_mol() {
        let w = CostParams::default().water_price_per_mol();
        assert!((w - 1.323e-5).abs() < 2e-8, "{w}");
    }

    #[test]
    fn single_year_discounting() {
        let p = CostParams {
            plant_life: 1,
            ..Default::default()
        };
        assert!((pv_h2(1.0, &p) - 1.0 / 1.08).abs() < 1e-15);
        let l = lcoh(100.0, 10.0, &p).unwrap();
        assert!((l - 100.0 * 1.08 / 10.0).abs() < 1e-12);
        assert_eq!(lcoh(0.0, 10.0, &p).unwrap(), 0.0);
        assert!(lcoh(1.0, 0.0, &p).is_err());
    }

    #[test]
    fn undiscounted_sum() {
        let p = CostParams {
            discount_rate: 0.0,
            ..Default::default()
        };
        let c = capex(1e5, 1.0, 1e5, 5e4, &p);
        let r = present_value(&c, 7, &streams(1e6, 0.0), &p).unwrap();
        assert!((r.vopex_pv - 40.0e6).abs() < 1e-3);
    }

    #[test]
    fn seven_year_replacements() {
        let p = CostParams::default();
        let c = capex(1e5, 1.0, 1e5, 5e4, &p);
        let r = present_value(&c, 7, &streams(1e6, 0.0), &p).unwrap();
        assert_eq!(r.replacement_years, vec![7, 14, 21, 28, 35]);
    }

    #[test]
    fn escalation_resets_after_replacement() {
        let p = CostParams {
            discount_rate: 0.0,
            plant_life: 4,
            ..Default::default()
        };
        let c = capex(1e5, 1.0, 1e5, 5e4, &p);
        let r = present_value(&c, 2, &streams(0.0, 0.5), &p).unwrap();
        // Years 2 and 4 each carry one year of degradation.
        assert!((r.vopex_pv - 2.0 * 0.5 * 2.0e7).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn bars_sum_to_lcoh(n in 4e4f64..3e5, days in 0.1f64..14.0, dv in 0.0f64..2.0, vop in 1e6f64..1e8) {
            let p = CostParams::default();
            let c = capex(n, days, n * 1.5, 5e4, &p);
            let r = present_value(&c, 3, &streams(vop, dv), &p).unwrap();
            prop_assert!((r.lcoh_breakdown.total() - r.lcoh).abs() <= 1e-9 * r.lcoh);
            let identity = r.capex_total + r.planned_replacement_pv + r.unplanned_replacement_pv + r.fopex_pv + r.vopex_pv;
            prop_assert!((identity - r.pv_total).abs() <= 1e-9 * r.pv_total);
        }

        #[test]
        fn lcoh_decreases_with_interval(vop in 1e6f64..1e8, n in 1u32..7) {
            let p = CostParams::default();
            let c = capex(1e5, 1.0, 1.5e5, 5e4, &p);
            let a = present_value(&c, n, &streams(vop, 0.0), &p).unwrap().lcoh;
            let b = present_value(&c, n + 1, &streams(vop, 0.0), &p).unwrap().lcoh;
            prop_assert!(b < a);
        }

        #[test]
        fn lcoh_is_homogeneous(scale in 0.1f64..10.0) {
            let p = CostParams::default();
            let mut q = p.clone();
            q.stack_capex *= scale;
            q.alpha_mbop = Some(p.alpha_mbop() * scale);
            q.alpha_ebop = Some(p.alpha_ebop() * scale);
            q.storage_capex *= scale;
            q.labor_rate *= scale;
            q.material = p.material * scale;
            let s = streams(3e7, 0.3);
            let mut s2 = s;
            s2.vopex *= scale;
            s2.elec_cost_per_volt *= scale;
            let a = present_value(&capex(1e5, 1.0, 1.5e5, 5e4, &p), 3, &s, &p).unwrap();
            let b = present_value(&capex(1e5, 1.0, 1.5e5, 5e4, &q), 3, &s2, &q).unwrap();
            prop_assert!((b.lcoh - scale * a.lcoh).abs() <= 1e-9 * b.lcoh);
            prop_assert!((b.pv_h2 - a.pv_h2).abs() <= 1e-9 * a.pv_h2);
        }
    }
}
