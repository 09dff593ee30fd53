//! Forward check of a supplied schedule: integrates the energy balance,
//! degradation and storage step by step and reports bound violations.

use num_dual::{first_derivative, Dual64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degradation::degradation_rate;
use crate::design::Design;
use crate::economics::H2_MOLAR_MASS;
use crate::prices::HOURS_PER_DAY;
use crate::schedule::{ScheduleCsvRow, SystemParams, SECONDS_PER_HOUR};

/// Lower flammability limit of H₂ in O₂.
pub const LFL: f64 = 0.04;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("schedule is empty")]
    Empty,
    #[error("schedule has {found} steps, expected {expected}")]
    StepCount { found: usize, expected: usize },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("energy balance did not converge at step {0}")]
    Temperature(usize),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// K.
    pub temperature: f64,
    pub fraction: f64,
    /// Relative to storage capacity.
    pub storage: f64,
    /// Relative to demand.
    pub demand: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            temperature: 1e-3,
            fraction: 1e-6,
            storage: 1e-6,
            demand: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TemperatureLow,
    TemperatureHigh,
    Safety,
    Lfl,
    StorageSwing,
    Demand,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub kind: ViolationKind,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimStep {
    pub step: usize,
    pub i: f64,
    pub temperature: f64,
    pub temperature_given: f64,
    pub y_h2_anode: f64,
    pub v_deg_cuml: f64,
    pub soc: f64,
    pub delivered: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ViolationCounts {
    pub temperature: usize,
    pub safety: usize,
    pub lfl: usize,
    pub storage: usize,
    pub demand: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimulationReport {
    pub design: Design,
    pub steps: Vec<SimStep>,
    pub violations: Vec<Violation>,
    pub counts: ViolationCounts,
    /// Share of steps above the LFL.
    pub lfl_fraction: f64,
    pub max_temperature_deviation: f64,
    pub max_soc_deviation: f64,
    pub degradation_day: f64,
    /// Electricity, BoP, water and N₂ for one day ($).
    pub realized_cost: f64,
    pub delivered_kg: f64,
}

impl SimulationReport {
    pub fn total_violations(&self) -> usize {
        self.violations.len()
    }
}

fn solve_temperature(params: &SystemParams, args: (f64, f64, f64, f64, f64, f64), guess: f64) -> Option<f64> {
    let (i, temp_prev, v_deg, liquid, n2, dt_s) = args;
    let cell = &params.cell;
    let mut t = guess;
    for _ in 0..100 {
        let (r, dr) = first_derivative(
            |x: Dual64| {
                cell.heat_residual(
                    Dual64::from(i),
                    x,
                    Dual64::from(temp_prev),
                    Dual64::from(v_deg),
                    Dual64::from(liquid),
                    Dual64::from(n2),
                    dt_s,
                )
            },
            t,
        );
        if !(dr.is_finite() && dr != 0.0) {
            return None;
        }
        let step = r / dr;
        t -= step.clamp(-20.0, 20.0);
        if step.abs() < 1e-10 {
            return Some(t);
        }
    }
    None
}

/// Simulates one representative day of a schedule for `design`.
pub fn simulate(rows: &[ScheduleCsvRow], design: Design, params: &SystemParams, tol: &Tolerances) -> Result<SimulationReport, SimulateError> {
    if rows.is_empty() {
        return Err(SimulateError::Empty);
    }
    let o = &params.operation;
    let expected = o.steps_per_day().map_err(|e| SimulateError::Row {
        row: 0,
        message: e.to_string(),
    })?;
    if rows.len() != expected {
        return Err(SimulateError::StepCount {
            found: rows.len(),
            expected,
        });
    }
    for (n, r) in rows.iter().enumerate() {
        if r.step != n {
            return Err(SimulateError::Row {
                row: n + 2,
                message: format!("step {} out of order", r.step),
            });
        }
        let vals = [r.i, r.temperature, r.purge, r.storage_charge, r.storage_discharge, r.anode_liquid, r.price];
        if vals.iter().any(|v| !v.is_finite()) || r.i < 0.0 || r.purge < 0.0 {
            return Err(SimulateError::Row {
                row: n + 2,
                message: "non-finite or negative value".into(),
            });
        }
    }
    let cell = &params.cell;
    let area = design.n_cells * o.cell_area;
    let dt = o.dt_hours;
    let dt_s = dt * SECONDS_PER_HOUR;
    let demand = o.demand_mol_per_s();
    let capacity = design.storage_days * o.demand_kg_per_day / H2_MOLAR_MASS;

    let mut steps = Vec::with_capacity(rows.len());
    let mut violations = Vec::new();
    let mut v_deg = 0.0;
    let mut soc = 0.0;
    let mut temp_prev = rows[rows.len() - 1].temperature;
    let mut cost = 0.0;
    let mut delivered_mol = 0.0;
    let mut max_dt: f64 = 0.0;
    let mut max_dsoc: f64 = 0.0;
    let (mut soc_min, mut soc_max) = (0.0_f64, 0.0_f64);
    for (t, r) in rows.iter().enumerate() {
        let i = r.i;
        v_deg += dt * degradation_rate(i, &cell.degradation);
        let liquid = r.anode_liquid / area;
        let n2 = r.purge / area;
        let temp = solve_temperature(params, (i, temp_prev, v_deg, liquid, n2, dt_s), r.temperature)
            .ok_or(SimulateError::Temperature(t))?;
        temp_prev = temp;
        max_dt = max_dt.max((temp - r.temperature).abs());
        if temp < o.t_min - tol.temperature {
            violations.push(Violation {
                step: t,
                kind: ViolationKind::TemperatureLow,
                value: temp,
                limit: o.t_min,
            });
        }
        if temp > o.t_max + tol.temperature {
            violations.push(Violation {
                step: t,
                kind: ViolationKind::TemperatureHigh,
                value: temp,
                limit: o.t_max,
            });
        }
        let f = cell.flows(i, temp, n2, liquid);
        let gas = f.anode_dry() + f.vapor_anode;
        let y = if gas > 0.0 { f.h2_anode / gas } else { 0.0 };
        if y > o.y_h2_max + tol.fraction {
            violations.push(Violation {
                step: t,
                kind: ViolationKind::Safety,
                value: y,
                limit: o.y_h2_max,
            });
        }
        if y > LFL + tol.fraction {
            violations.push(Violation {
                step: t,
                kind: ViolationKind::Lfl,
                value: y,
                limit: LFL,
            });
        }
        soc += (r.storage_charge - r.storage_discharge) * dt_s;
        soc_min = soc_min.min(soc);
        soc_max = soc_max.max(soc);
        max_dsoc = max_dsoc.max((soc - r.soc).abs());
        let prod = f.h2_product * area;
        let delivered = prod - r.storage_charge + r.storage_discharge;
        if delivered < demand * (1.0 - tol.demand) {
            violations.push(Violation {
                step: t,
                kind: ViolationKind::Demand,
                value: delivered,
                limit: demand,
            });
        }
        delivered_mol += delivered * dt_s;
        let v = cell.voltage(i, temp) + v_deg;
        let stack_kw = area * i * v / 1000.0;
        let bop_kw = params.costs.bop_electricity * prod * H2_MOLAR_MASS * SECONDS_PER_HOUR + o.compressor.power(r.storage_charge);
        let water = (f.consumed + f.vapor_anode + f.vapor_cathode) * area;
        let c = dt * r.price * 1e-3 * (stack_kw + bop_kw)
            + dt_s * water * params.costs.water_price_per_mol()
            + dt_s * r.purge * params.costs.n2_price_per_mol();
        cost += c;
        steps.push(SimStep {
            step: t,
            i,
            temperature: temp,
            temperature_given: r.temperature,
            y_h2_anode: y,
            v_deg_cuml: v_deg,
            soc,
            delivered,
            cost: c,
        });
    }
    if soc_max - soc_min > capacity * (1.0 + tol.storage) {
        violations.push(Violation {
            step: rows.len() - 1,
            kind: ViolationKind::StorageSwing,
            value: soc_max - soc_min,
            limit: capacity,
        });
    }
    let mut counts = ViolationCounts::default();
    for v in &violations {
        match v.kind {
            ViolationKind::TemperatureLow | ViolationKind::TemperatureHigh => counts.temperature += 1,
            ViolationKind::Safety => counts.safety += 1,
            ViolationKind::Lfl => counts.lfl += 1,
            ViolationKind::StorageSwing => counts.storage += 1,
            ViolationKind::Demand => counts.demand += 1,
        }
    }
    debug_assert_eq!(rows.len() as f64 * dt, HOURS_PER_DAY as f64);
    Ok(SimulationReport {
        design,
        lfl_fraction: counts.lfl as f64 / rows.len() as f64,
        steps,
        violations,
        counts,
        max_temperature_deviation: max_dt,
        max_soc_deviation: max_dsoc,
        degradation_day: v_deg,
        realized_cost: cost,
        delivered_kg: delivered_mol * H2_MOLAR_MASS,
    })
}
