//! Inner problem: cost-minimizing operation of a fixed design over the
//! representative days.

pub mod cell;
mod elements;
mod export;

use std::sync::Arc;
use std::time::Duration;

use log::{debug, info, warn};
use pem_nlp::{solve as nlp_solve, CompiledModel, Model, SolveResult, SolverOptions, Status};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::CellModel;
pub use elements::ScheduleElement;
pub use export::{read_schedule_csv, write_schedule, ScheduleCsvRow};

use crate::degradation::{degradation_rate, smooth_degradation_rate, DegradationLedger};
use crate::design::Design;
use crate::economics::{CostParams, H2_MOLAR_MASS};
use crate::electrochem::FARADAY;
use crate::prices::{RepDaySet, HOURS_PER_DAY};
use crate::storage::StorageLink;
use cell::{tau_of, temperature, LIQUID_UNIT, N2_UNIT};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid schedule problem: {0}")]
    Build(String),
    #[error(
        "design is infeasible: {n_cells:.0} cells deliver at most {max_kg_per_day:.1} kg/day at the current-density limit, demand is {demand_kg_per_day:.1} kg/day"
    )]
    Infeasible {
        n_cells: f64,
        max_kg_per_day: f64,
        demand_kg_per_day: f64,
    },
    #[error("inner solver failed ({status}): {message}")]
    Solver { status: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CompressorParams {
    pub gamma: f64,
    pub efficiency: f64,
    /// bar.
    pub p_in: f64,
    /// bar.
    pub p_out: f64,
    /// K.
    pub temperature: f64,
}

impl Default for CompressorParams {
    fn default() -> Self {
        Self {
            gamma: 1.41,
            efficiency: 0.7,
            p_in: 30.0,
            p_out: 200.0,
            temperature: 298.15,
        }
    }
}

impl CompressorParams {
    /// kW for `flow` mol/s.
    pub fn power(&self, flow: f64) -> f64 {
        isentropic_power(flow, self.p_in, self.p_out, self.temperature, self.gamma, self.efficiency)
    }
}

fn isentropic_power(flow: f64, p_in: f64, p_out: f64, temp: f64, gamma: f64, efficiency: f64) -> f64 {
    let e = (gamma - 1.0) / gamma;
    flow * gamma / (gamma - 1.0) * crate::electrochem::GAS_CONSTANT * temp * ((p_out / p_in).powf(e) - 1.0)
        / efficiency
        / 1000.0
}

/// Single-stage H₂ compressor power (kW), γ = 1.41 and 70 % isentropic
/// efficiency.
pub fn compressor_work(flow: f64, p_in: f64, p_out: f64, temp: f64) -> f64 {
    let c = CompressorParams::default();
    isentropic_power(flow, p_in, p_out, temp, c.gamma, c.efficiency)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingParams {
    pub demand_kg_per_day: f64,
    pub dt_hours: f64,
    pub i_min: f64,
    pub i_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub y_h2_max: f64,
    pub safety_constraint: bool,
    /// cm².
    pub cell_area: f64,
    pub compressor: CompressorParams,
}

impl Default for OperatingParams {
    fn default() -> Self {
        Self {
            demand_kg_per_day: 50_000.0,
            dt_hours: 0.25,
            i_min: 0.1,
            i_max: 4.0,
            t_min: 333.15,
            t_max: 353.15,
            y_h2_max: 0.02,
            safety_constraint: true,
            cell_area: 450.0,
            compressor: CompressorParams::default(),
        }
    }
}

impl OperatingParams {
    pub fn demand_mol_per_s(&self) -> f64 {
        self.demand_kg_per_day / H2_MOLAR_MASS / 86_400.0
    }

    /// Steps per day; the step must divide the hour or be a whole number of
    /// hours dividing the day.
    pub fn steps_per_day(&self) -> Result<usize, ScheduleError> {
        let dt = self.dt_hours;
        let steps = (HOURS_PER_DAY as f64 / dt).round();
        let per_hour = 1.0 / dt;
        let ok = dt > 0.0
            && (steps * dt - HOURS_PER_DAY as f64).abs() < 1e-9
            && ((per_hour - per_hour.round()).abs() < 1e-9 || (dt - dt.round()).abs() < 1e-9);
        if !ok {
            return Err(ScheduleError::Build(format!(
                "dt = {dt} h must divide one hour or be a whole number of hours dividing 24"
            )));
        }
        if steps < 2.0 {
            return Err(ScheduleError::Build("at least two steps per day are required".into()));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub constr_viol_tol: f64,
    pub max_iter: usize,
    pub time_limit_seconds: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            constr_viol_tol: 1e-8,
            max_iter: 3000,
            time_limit_seconds: None,
        }
    }
}

impl SolverSettings {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            constr_viol_tol: self.constr_viol_tol,
            max_iter: self.max_iter,
            time_limit: self.time_limit_seconds.map(Duration::from_secs_f64),
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub cell: CellModel,
    pub operation: OperatingParams,
    pub costs: CostParams,
    pub solver: SolverSettings,
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let o = &self.operation;
        let bad = |m: &str| Err(ScheduleError::Build(m.to_string()));
        if !(o.i_min < o.i_max) || o.i_min < 0.0 {
            return bad("current-density bounds must satisfy 0 <= i_min < i_max");
        }
        if !(o.t_min < o.t_max) {
            return bad("temperature bounds must satisfy t_min < t_max");
        }
        if !(o.y_h2_max > 0.0 && o.y_h2_max <= 1.0) {
            return bad("y_h2_max must lie in (0, 1]");
        }
        if !(o.demand_kg_per_day >= 0.0) {
            return bad("demand must be non-negative");
        }
        if !(o.cell_area > 0.0) {
            return bad("cell_area must be positive");
        }
        self.cell
            .electrochem
            .validate()
            .map_err(|e| ScheduleError::Build(e.to_string()))?;
        self.cell
            .balances
            .validate()
            .map_err(|e| ScheduleError::Build(e.to_string()))?;
        if self.cell.degradation.enabled {
            self.cell.degradation.validate().map_err(ScheduleError::Build)?;
        }
        self.costs
            .validate()
            .map_err(|e| ScheduleError::Build(e.to_string()))?;
        o.steps_per_day()?;
        Ok(())
    }

    /// Largest deliverable H₂ (kg/day) for `n_cells` running flat out.
    pub fn max_throughput_kg_per_day(&self, n_cells: f64) -> f64 {
        let o = &self.operation;
        n_cells * o.cell_area * o.i_max / (2.0 * FARADAY) * self.cell.product_fraction() * H2_MOLAR_MASS * 86_400.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleProblem {
    pub design: Design,
    pub rep_days: RepDaySet,
    pub params: SystemParams,
}

/// Index arithmetic for the transcribed NLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub k: usize,
    pub steps: usize,
    pub days: usize,
}

impl Layout {
    pub const NF: usize = 8;
    pub const I: usize = 0;
    pub const TAU: usize = 1;
    pub const LIQ: usize = 2;
    pub const N2: usize = 3;
    pub const CHG: usize = 4;
    pub const DIS: usize = 5;
    pub const DV: usize = 6;
    pub const SOC: usize = 7;

    pub fn var(&self, r: usize, t: usize, field: usize) -> usize {
        (r * self.steps + t) * Self::NF + field
    }
    pub fn g(&self, r: usize) -> usize {
        self.k * self.steps * Self::NF + r
    }
    pub fn hi(&self, r: usize) -> usize {
        self.g(self.k) + r
    }
    pub fn lo(&self, r: usize) -> usize {
        self.g(2 * self.k) + r
    }
    pub fn s(&self, d: usize) -> usize {
        self.g(3 * self.k) + d
    }
    pub fn num_vars(&self) -> usize {
        self.s(self.days)
    }
    pub fn num_cons(&self, safety: bool) -> usize {
        let per_step = if safety { 8 } else { 7 };
        self.k * self.steps * per_step + self.k + 3 * self.days
    }
}

/// Prices on the step grid: hourly values held within the hour, or averaged
/// over multi-hour steps.
pub fn step_prices(hourly: &[f64], steps: usize) -> Vec<f64> {
    let dt = HOURS_PER_DAY as f64 / steps as f64;
    (0..steps)
        .map(|t| {
            if dt <= 1.0 {
                hourly[((t as f64 * dt) + 1e-9).floor() as usize]
            } else {
                let h0 = (t as f64 * dt).round() as usize;
                let h1 = ((t + 1) as f64 * dt).round() as usize;
                hourly[h0..h1].iter().sum::<f64>() / (h1 - h0) as f64
            }
        })
        .collect()
}

/// M[r][r'] = Σ_{d: f(d)=r} #{d' < d : f(d') = r'}.
pub fn carryover_counts(mapping: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut seen = vec![0.0; k];
    let mut m = vec![vec![0.0; k]; k];
    for &r in mapping {
        for (rp, &c) in seen.iter().enumerate() {
            m[r][rp] += c;
        }
        seen[r] += 1.0;
    }
    m
}

/// Scale factors and constants shared by build, start points and reporting.
#[derive(Debug, Clone)]
struct Scales {
    steps: usize,
    dt: f64,
    area: f64,
    /// mol/s per unit of the storage-flow variables.
    q: f64,
    /// Delivery right-hand side in units of `q`.
    demand_units: f64,
    /// Net product (units of `q`) per A/cm².
    prod_per_i: f64,
    liq_per_cm2: f64,
    n2_per_cm2: f64,
    cap_days: f64,
}

impl Scales {
    fn new(problem: &ScheduleProblem) -> Result<Self, ScheduleError> {
        let p = &problem.params;
        let o = &p.operation;
        let steps = o.steps_per_day()?;
        let area = problem.design.n_cells * o.cell_area;
        let demand = o.demand_mol_per_s();
        let q = if demand > 0.0 {
            demand
        } else {
            area / (2.0 * FARADAY)
        };
        Ok(Self {
            steps,
            dt: o.dt_hours,
            area,
            q,
            demand_units: demand / q,
            prod_per_i: area / (2.0 * FARADAY) * p.cell.product_fraction() / q,
            liq_per_cm2: LIQUID_UNIT / o.cell_area,
            n2_per_cm2: N2_UNIT / o.cell_area,
            cap_days: problem.design.storage_days * if demand > 0.0 { 1.0 } else { 0.0 },
        })
    }

    /// Storage capacity in mol.
    fn capacity_mol(&self) -> f64 {
        self.cap_days * self.q * 86_400.0
    }
}

pub struct DiscretizedNlp {
    pub model: CompiledModel<ScheduleElement>,
    pub layout: Layout,
    pub problem: ScheduleProblem,
    prices: Vec<Vec<f64>>,
    scales: Scales,
    cell: Arc<CellModel>,
}

impl DiscretizedNlp {
    pub fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    pub fn num_cons(&self) -> usize {
        self.layout.num_cons(self.problem.params.operation.safety_constraint)
    }

    pub fn step_prices(&self) -> &[Vec<f64>] {
        &self.prices
    }
}

pub fn build(problem: &ScheduleProblem) -> Result<DiscretizedNlp, ScheduleError> {
    let p = &problem.params;
    p.validate()?;
    let rd = &problem.rep_days;
    if rd.k == 0 || rd.rep_days.len() != rd.k || rd.weights.len() != rd.k {
        return Err(ScheduleError::Build("representative-day set is inconsistent".into()));
    }
    if rd.mapping.is_empty() || rd.mapping.iter().any(|&r| r >= rd.k) {
        return Err(ScheduleError::Build("day mapping is empty or out of range".into()));
    }
    if !(problem.design.n_cells > 0.0) || !(problem.design.storage_days >= 0.0) {
        return Err(ScheduleError::Build("design needs positive cells and non-negative storage".into()));
    }
    let o = &p.operation;
    let sc = Scales::new(problem)?;
    let layout = Layout {
        k: rd.k,
        steps: sc.steps,
        days: rd.mapping.len(),
    };
    let cell = Arc::new(p.cell.clone());
    let prices: Vec<Vec<f64>> = rd.rep_days.iter().map(|d| step_prices(d, sc.steps)).collect();
    let costs = &p.costs;
    let comp_kw_per_mol = o.compressor.power(1.0);
    let dt_s = sc.dt * SECONDS_PER_HOUR;
    let cap = sc.cap_days;

    let mut m: Model<ScheduleElement> = Model::new();
    let (tau_lo, tau_hi) = (tau_of(o.t_min), tau_of(o.t_max));
    for r in 0..layout.k {
        for t in 0..layout.steps {
            let base = m.add_var(o.i_min, o.i_max, o.i_min);
            debug_assert_eq!(base, layout.var(r, t, 0));
            m.add_var(tau_lo, tau_hi, tau_hi);
            m.add_var(0.0, 100.0, 0.0);
            m.add_var(0.0, 100.0, 0.0);
            m.add_var(0.0, 20.0, 0.0);
            m.add_var(0.0, 20.0, 0.0);
            m.add_var(0.0, 1.0e4, 0.0);
            m.add_var(-cap, cap, 0.0);
        }
    }
    for _ in 0..layout.k {
        m.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    for _ in 0..layout.k {
        m.add_var(0.0, cap, 0.0);
    }
    for _ in 0..layout.k {
        m.add_var(-cap, 0.0, 0.0);
    }
    for _ in 0..layout.days {
        m.add_var(0.0, cap, cap / 2.0);
    }
    debug_assert_eq!(m.num_vars(), layout.num_vars());

    // Objective in $M/yr.
    let usd_m = 1e-6;
    let h2_kg_per_h_per_i = sc.prod_per_i * sc.q * H2_MOLAR_MASS * SECONDS_PER_HOUR;
    for r in 0..layout.k {
        let w = rd.weights[r] as f64;
        for t in 0..layout.steps {
            let v = |f| layout.var(r, t, f);
            let price = prices[r][t];
            let e_coef = w * sc.dt * price * 1e-6 * sc.area * usd_m;
            m.add_objective_element(ScheduleElement::Electricity {
                vars: [v(Layout::I), v(Layout::TAU), v(Layout::DV)],
                coef: e_coef,
                cell: cell.clone(),
            });
            let kwh_price = w * sc.dt * price * 1e-3 * usd_m;
            m.add_objective_linear(v(Layout::I), kwh_price * costs.bop_electricity * h2_kg_per_h_per_i);
            m.add_objective_linear(v(Layout::CHG), kwh_price * comp_kw_per_mol * sc.q);
            m.add_objective_element(ScheduleElement::Water {
                vars: [v(Layout::I), v(Layout::TAU), v(Layout::N2)],
                coef: w * dt_s * costs.water_price_per_mol() * sc.area * usd_m,
                n2_scale: sc.n2_per_cm2,
                cell: cell.clone(),
            });
            m.add_objective_linear(
                v(Layout::N2),
                w * dt_s * costs.n2_price_per_mol() * problem.design.n_cells * N2_UNIT * usd_m,
            );
        }
    }
    let carry = carryover_counts(&rd.mapping, layout.k);
    for (r, row) in carry.iter().enumerate() {
        for (rp, &count) in row.iter().enumerate() {
            if count > 0.0 {
                m.add_objective_element(ScheduleElement::Bilinear {
                    vars: [layout.g(r), layout.var(rp, layout.steps - 1, Layout::DV)],
                    coef: count * 1e-3,
                });
            }
        }
    }

    for r in 0..layout.k {
        for t in 0..layout.steps {
            let v = |f| layout.var(r, t, f);
            let prev = |f| layout.var(r, (t + layout.steps - 1) % layout.steps, f);
            m.add_constraint(
                vec![],
                vec![ScheduleElement::Heat {
                    vars: [
                        v(Layout::I),
                        v(Layout::TAU),
                        prev(Layout::TAU),
                        v(Layout::DV),
                        v(Layout::LIQ),
                        v(Layout::N2),
                    ],
                    liq_scale: sc.liq_per_cm2,
                    n2_scale: sc.n2_per_cm2,
                    dt_seconds: dt_s,
                    cell: cell.clone(),
                }],
                0.0,
                0.0,
            );
            let mut lin = vec![(v(Layout::DV), 1.0)];
            if t > 0 {
                lin.push((prev(Layout::DV), -1.0));
            }
            m.add_constraint(
                lin,
                vec![ScheduleElement::Rate {
                    vars: [v(Layout::I)],
                    coef: -sc.dt * 1e3,
                    cell: cell.clone(),
                }],
                0.0,
                0.0,
            );
            let mut lin = vec![
                (v(Layout::SOC), 1.0),
                (v(Layout::CHG), -sc.dt / 24.0),
                (v(Layout::DIS), sc.dt / 24.0),
            ];
            if t > 0 {
                lin.push((prev(Layout::SOC), -1.0));
            }
            m.add_constraint(lin, vec![], 0.0, 0.0);
            if o.safety_constraint {
                m.add_constraint(
                    vec![],
                    vec![ScheduleElement::Safety {
                        vars: [v(Layout::I), v(Layout::TAU), v(Layout::N2)],
                        n2_scale: sc.n2_per_cm2,
                        y_max: o.y_h2_max,
                        cell: cell.clone(),
                    }],
                    0.0,
                    f64::INFINITY,
                );
            }
            m.add_constraint(
                vec![
                    (v(Layout::I), sc.prod_per_i),
                    (v(Layout::CHG), -1.0),
                    (v(Layout::DIS), 1.0),
                ],
                vec![],
                sc.demand_units,
                f64::INFINITY,
            );
            m.add_constraint(
                vec![(v(Layout::I), sc.prod_per_i), (v(Layout::CHG), -1.0)],
                vec![],
                0.0,
                f64::INFINITY,
            );
            m.add_constraint(
                vec![(layout.hi(r), 1.0), (v(Layout::SOC), -1.0)],
                vec![],
                0.0,
                f64::INFINITY,
            );
            m.add_constraint(
                vec![(v(Layout::SOC), 1.0), (layout.lo(r), -1.0)],
                vec![],
                0.0,
                f64::INFINITY,
            );
        }
    }
    for r in 0..layout.k {
        let mut lin = vec![(layout.g(r), 1.0)];
        for t in 0..layout.steps {
            lin.push((layout.var(r, t, Layout::I), -sc.dt * prices[r][t] * 1e-6 * sc.area * usd_m));
        }
        m.add_constraint(lin, vec![], 0.0, 0.0);
    }
    let end = |r: usize| layout.var(r, layout.steps - 1, Layout::SOC);
    for d in 0..layout.days {
        let next = (d + 1) % layout.days;
        let r = rd.mapping[d];
        let mut lin = vec![(end(r), -1.0)];
        if next != d {
            lin.push((layout.s(next), 1.0));
            lin.push((layout.s(d), -1.0));
        }
        m.add_constraint(lin, vec![], 0.0, 0.0);
    }
    for d in 0..layout.days {
        let r = rd.mapping[d];
        m.add_constraint(
            vec![(layout.s(d), 1.0), (layout.hi(r), 1.0)],
            vec![],
            f64::NEG_INFINITY,
            cap,
        );
        m.add_constraint(
            vec![(layout.s(d), 1.0), (layout.lo(r), 1.0)],
            vec![],
            0.0,
            f64::INFINITY,
        );
    }
    debug_assert_eq!(m.num_cons(), layout.num_cons(o.safety_constraint));

    let mut nlp = DiscretizedNlp {
        model: m.compile(),
        layout,
        problem: problem.clone(),
        prices,
        scales: sc,
        cell,
    };
    let x0 = cold_start(&nlp);
    nlp.model.set_initial_point(&x0);
    Ok(nlp)
}

/// Per-step primary decisions from which a full start point is completed.
#[derive(Debug, Clone, Copy)]
struct Primary {
    i: f64,
    tau: f64,
    liq: f64,
    n2: f64,
    chg: f64,
    dis: f64,
}

fn cold_start(nlp: &DiscretizedNlp) -> Vec<f64> {
    let o = &nlp.problem.params.operation;
    let sc = &nlp.scales;
    let i = if sc.demand_units > 0.0 {
        (1.02 * sc.demand_units / sc.prod_per_i).clamp(o.i_min, o.i_max)
    } else {
        o.i_min
    };
    let temp = 343.15f64.clamp(o.t_min, o.t_max);
    let liq = (nlp.cell.steady_liquid(i, temp, 0.0) / sc.liq_per_cm2).clamp(0.0, 100.0);
    let prim = Primary {
        i,
        tau: tau_of(temp),
        liq,
        n2: 0.0,
        chg: 0.0,
        dis: 0.0,
    };
    let all = vec![vec![prim; nlp.layout.steps]; nlp.layout.k];
    complete_point(nlp, &all)
}

fn complete_point(nlp: &DiscretizedNlp, prim: &[Vec<Primary>]) -> Vec<f64> {
    let l = nlp.layout;
    let sc = &nlp.scales;
    let deg = &nlp.cell.degradation;
    let mut x = vec![0.0; l.num_vars()];
    let mut hi = vec![0.0; l.k];
    let mut lo = vec![0.0; l.k];
    let mut delta = vec![0.0; l.k];
    for r in 0..l.k {
        let (mut dv, mut soc, mut g) = (0.0, 0.0, 0.0);
        for t in 0..l.steps {
            let p = prim[r][t];
            dv += sc.dt * 1e3 * smooth_degradation_rate(p.i, deg);
            soc += (p.chg - p.dis) * sc.dt / 24.0;
            g += sc.dt * nlp.prices[r][t] * 1e-6 * sc.area * 1e-6 * p.i;
            let vals = [p.i, p.tau, p.liq, p.n2, p.chg, p.dis, dv, soc];
            for (f, v) in vals.into_iter().enumerate() {
                x[l.var(r, t, f)] = v;
            }
            hi[r] = f64::max(hi[r], soc);
            lo[r] = f64::min(lo[r], soc);
        }
        delta[r] = soc;
        x[l.g(r)] = g;
        x[l.hi(r)] = hi[r];
        x[l.lo(r)] = lo[r];
    }
    let mapping = &nlp.problem.rep_days.mapping;
    let mut offs = Vec::with_capacity(l.days);
    let mut c = 0.0;
    for &r in mapping {
        offs.push(c);
        c += delta[r];
    }
    let cap = sc.cap_days;
    let mut lower = 0.0f64;
    let mut upper = cap;
    for (d, &r) in mapping.iter().enumerate() {
        lower = lower.max(-offs[d] - lo[r]);
        upper = upper.min(cap - offs[d] - hi[r]);
    }
    let s1 = if lower <= upper { 0.5 * (lower + upper) } else { lower };
    for d in 0..l.days {
        x[l.s(d)] = s1 + offs[d];
    }
    x
}

fn warm_point(nlp: &DiscretizedNlp, warm: &Schedule) -> Option<Vec<f64>> {
    let l = nlp.layout;
    if warm.layout != l || warm.x.len() != l.num_vars() {
        return None;
    }
    let o = &nlp.problem.params.operation;
    let ratio = warm.design.n_cells / nlp.problem.design.n_cells;
    let storage_scale = if warm.design.storage_days > 0.0 {
        (nlp.problem.design.storage_days / warm.design.storage_days).min(1.0)
    } else {
        1.0
    };
    let prim: Vec<Vec<Primary>> = (0..l.k)
        .map(|r| {
            (0..l.steps)
                .map(|t| {
                    let g = |f| warm.x[l.var(r, t, f)];
                    Primary {
                        i: (g(Layout::I) * ratio).clamp(o.i_min, o.i_max),
                        tau: g(Layout::TAU).clamp(tau_of(o.t_min), tau_of(o.t_max)),
                        liq: g(Layout::LIQ),
                        n2: g(Layout::N2),
                        chg: g(Layout::CHG) * storage_scale,
                        dis: g(Layout::DIS) * storage_scale,
                    }
                })
                .collect()
        })
        .collect();
    Some(complete_point(nlp, &prim))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// $/MWh.
    pub price: f64,
    pub current_density: f64,
    pub temperature: f64,
    pub v_undeg: f64,
    /// Degradation accumulated since the start of the representative day (V).
    pub v_deg_intraday: f64,
    /// Degradation added during this step (V), piecewise rate.
    pub degradation_step: f64,
    /// Stack-level flows (mol/s).
    pub h2_gen: f64,
    pub h2_product: f64,
    pub water_in: f64,
    pub anode_liquid: f64,
    pub anode_o2: f64,
    pub anode_h2: f64,
    pub anode_vapor: f64,
    pub cathode_h2: f64,
    pub cathode_vapor: f64,
    pub cathode_liquid: f64,
    pub n2_purge: f64,
    pub y_h2_anode: f64,
    pub storage_charge: f64,
    pub storage_discharge: f64,
    pub direct_delivery: f64,
    pub delivered: f64,
    /// Storage level relative to the start of the day (mol).
    pub soc: f64,
    pub stack_kw: f64,
    pub bop_kw: f64,
    pub compressor_kw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RepDaySchedule {
    pub rep_day: usize,
    pub weight: u32,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
pub struct VopexBreakdown {
    pub total: f64,
    pub elec: f64,
    pub bop: f64,
    pub water: f64,
    pub n2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    pub design: Design,
    pub status: String,
    pub iterations: usize,
    /// NLP objective with the smooth degradation rate ($/yr).
    pub nlp_objective: f64,
    pub constraint_violation: f64,
    pub dt_hours: f64,
    pub days: Vec<RepDaySchedule>,
    pub vopex: VopexBreakdown,
    /// Annual electricity cost of one extra volt on every cell ($/V/yr).
    pub elec_cost_per_volt: f64,
    pub peak_power_kwe: f64,
    pub daily_h2_kg: f64,
    pub annual_h2_kg: f64,
    pub utilization: f64,
    pub ledger: DegradationLedger,
    pub storage: StorageLink,
    pub layout: Layout,
    #[serde(skip)]
    pub x: Vec<f64>,
}

impl Schedule {
    pub fn end_of_year_degradation(&self) -> f64 {
        self.ledger.end_of_year
    }
}

/// Assembles annual vOPEX from the trajectories: weighted representative-day
/// costs plus the electricity for degradation carried from earlier days.
pub fn annual_vopex(days: &[RepDaySchedule], rep_days: &RepDaySet, ledger: &DegradationLedger, dt_hours: f64, costs: &CostParams) -> VopexBreakdown {
    let mut v = VopexBreakdown::default();
    let mut g = vec![0.0; days.len()];
    for (r, day) in days.iter().enumerate() {
        let w = day.weight as f64;
        for s in &day.steps {
            let usd_per_kwh = s.price * 1e-3;
            let hours = dt_hours;
            v.elec += w * hours * usd_per_kwh * s.stack_kw;
            v.bop += w * hours * usd_per_kwh * (s.bop_kw + s.compressor_kw);
            let water = s.h2_gen + s.anode_vapor + s.cathode_vapor;
            v.water += w * hours * SECONDS_PER_HOUR * water * costs.water_price_per_mol();
            v.n2 += w * hours * SECONDS_PER_HOUR * s.n2_purge * costs.n2_price_per_mol();
            g[r] += hours * usd_per_kwh * s.stack_kw / (s.v_undeg + s.v_deg_intraday);
        }
    }
    for (d, &r) in rep_days.mapping.iter().enumerate() {
        v.elec += g[r] * ledger.start_of_day(d);
    }
    v.total = v.elec + v.bop + v.water + v.n2;
    v
}

fn status_name(s: Status) -> String {
    format!("{s:?}")
}

fn run(nlp: &DiscretizedNlp, x0: &[f64]) -> SolveResult {
    let mut model = nlp.model.clone();
    model.set_initial_point(x0);
    nlp_solve(&model, &nlp.problem.params.solver.options())
}

fn accept(res: &SolveResult) -> bool {
    res.status.is_success()
        || (matches!(res.status, Status::MaxIterations | Status::TimeLimit) && res.constraint_violation <= 1e-6)
}

/// Solves the transcribed problem, trying the warm start first and falling
/// back to one cold start.
pub fn solve(nlp: &DiscretizedNlp, warm: Option<&Schedule>) -> Result<Schedule, ScheduleError> {
    let p = &nlp.problem.params;
    let design = nlp.problem.design;
    let max_kg = p.max_throughput_kg_per_day(design.n_cells);
    if max_kg < p.operation.demand_kg_per_day * (1.0 - 1e-9) {
        return Err(ScheduleError::Infeasible {
            n_cells: design.n_cells,
            max_kg_per_day: max_kg,
            demand_kg_per_day: p.operation.demand_kg_per_day,
        });
    }
    let cold = nlp.model.model().initial_point().to_vec();
    let mut attempts: Vec<(&str, Vec<f64>)> = Vec::new();
    if let Some(x) = warm.and_then(|w| warm_point(nlp, w)) {
        attempts.push(("warm", x));
    }
    attempts.push(("cold", cold));
    let mut last = None;
    for (label, x0) in attempts {
        let res = run(nlp, &x0);
        debug!(
            "{label} start for {:.0} cells / {:.3} days: {:?} after {} iterations",
            design.n_cells, design.storage_days, res.status, res.iterations
        );
        if accept(&res) {
            if !res.status.is_success() {
                warn!("accepting feasible point after {:?}", res.status);
            }
            return Ok(assemble(nlp, &res));
        }
        info!("{label} start failed: {:?} ({})", res.status, res.message);
        last = Some(res);
    }
    let res = last.expect("at least one attempt");
    Err(ScheduleError::Solver {
        status: status_name(res.status),
        message: res.message,
    })
}

/// Builds and solves in one call.
pub fn optimize_schedule(problem: &ScheduleProblem, warm: Option<&Schedule>) -> Result<Schedule, ScheduleError> {
    let nlp = build(problem)?;
    solve(&nlp, warm)
}

fn assemble(nlp: &DiscretizedNlp, res: &SolveResult) -> Schedule {
    let l = nlp.layout;
    let sc = &nlp.scales;
    let p = &nlp.problem.params;
    let o = &p.operation;
    let cell = &nlp.cell;
    let rd = &nlp.problem.rep_days;
    let x = &res.x;
    let area = sc.area;
    let mol_per_day_unit = sc.q * 86_400.0;
    let mut deltas = Vec::with_capacity(l.k);
    let mut raw: Vec<Vec<StepRecord>> = Vec::with_capacity(l.k);
    for r in 0..l.k {
        let mut dv = 0.0;
        let mut steps = Vec::with_capacity(l.steps);
        for t in 0..l.steps {
            let g = |f| x[l.var(r, t, f)];
            let i = g(Layout::I);
            let temp = temperature(g(Layout::TAU));
            let liq = g(Layout::LIQ) * sc.liq_per_cm2;
            let n2 = g(Layout::N2) * sc.n2_per_cm2;
            let f = cell.flows(i, temp, n2, liq);
            let step_deg = sc.dt * degradation_rate(i, &cell.degradation);
            dv += step_deg;
            let v_undeg = cell.voltage(i, temp);
            let chg = g(Layout::CHG) * sc.q;
            let dis = g(Layout::DIS) * sc.q;
            let prod = f.h2_product * area;
            let dry = f.anode_dry() * area;
            let gas = dry + f.vapor_anode * area;
            steps.push(StepRecord {
                step: t,
                price: nlp.prices[r][t],
                current_density: i,
                temperature: temp,
                v_undeg,
                v_deg_intraday: dv,
                degradation_step: step_deg,
                h2_gen: f.h2_gen * area,
                h2_product: prod,
                water_in: f.water_in * area,
                anode_liquid: f.liquid_anode * area,
                anode_o2: f.o2_anode * area,
                anode_h2: f.h2_anode * area,
                anode_vapor: f.vapor_anode * area,
                cathode_h2: prod,
                cathode_vapor: f.vapor_cathode * area,
                cathode_liquid: f.liquid_cathode * area,
                n2_purge: n2 * area,
                y_h2_anode: if gas > 0.0 { f.h2_anode * area / gas } else { 0.0 },
                storage_charge: chg,
                storage_discharge: dis,
                direct_delivery: prod - chg,
                delivered: prod - chg + dis,
                soc: g(Layout::SOC) * mol_per_day_unit,
                stack_kw: area * i * (v_undeg + dv) / 1000.0,
                bop_kw: p.costs.bop_electricity * prod * H2_MOLAR_MASS * SECONDS_PER_HOUR,
                compressor_kw: o.compressor.power(chg),
            });
        }
        deltas.push(dv);
        raw.push(steps);
    }
    let ledger = DegradationLedger::build(deltas, &rd.mapping);
    let days: Vec<RepDaySchedule> = raw
        .into_iter()
        .enumerate()
        .map(|(r, steps)| RepDaySchedule {
            rep_day: rd.medoid_indices.get(r).copied().unwrap_or(r),
            weight: rd.weights[r],
            steps,
        })
        .collect();
    let vopex = annual_vopex(&days, rd, &ledger, sc.dt, &p.costs);

    let mut last_start = vec![0.0; l.k];
    for (d, &r) in rd.mapping.iter().enumerate() {
        last_start[r] = ledger.start_of_day(d);
    }
    let mut peak: f64 = 0.0;
    let mut elec_per_volt = 0.0;
    let mut energy = 0.0;
    let mut delivered_mol = 0.0;
    for (r, day) in days.iter().enumerate() {
        let w = day.weight as f64;
        for s in &day.steps {
            let stack = area * s.current_density * (s.v_undeg + s.v_deg_intraday + last_start[r]) / 1000.0;
            peak = peak.max(stack + s.bop_kw + s.compressor_kw);
            elec_per_volt += w * sc.dt * s.price * 1e-3 * area * s.current_density / 1000.0;
            energy += w * sc.dt * s.stack_kw;
            delivered_mol += w * sc.dt * SECONDS_PER_HOUR * s.delivered;
        }
    }
    let n_days = rd.mapping.len() as f64;
    let annual_h2_kg = delivered_mol * H2_MOLAR_MASS;
    let nameplate_kw = area * o.i_max * cell.voltage(o.i_max, o.t_max) / 1000.0;
    let soc_rep: Vec<Vec<f64>> = (0..l.k)
        .map(|r| {
            std::iter::once(0.0)
                .chain((0..l.steps).map(|t| x[l.var(r, t, Layout::SOC)] * mol_per_day_unit))
                .collect()
        })
        .collect();
    let storage = StorageLink {
        delta_r: (0..l.k)
            .map(|r| x[l.var(r, l.steps - 1, Layout::SOC)] * mol_per_day_unit)
            .collect(),
        soc_rep,
        soc_real_start: (0..l.days).map(|d| x[l.s(d)] * mol_per_day_unit).collect(),
        capacity: sc.capacity_mol(),
    };
    Schedule {
        design: nlp.problem.design,
        status: status_name(res.status),
        iterations: res.iterations,
        nlp_objective: res.objective * 1e6,
        constraint_violation: res.constraint_violation,
        dt_hours: sc.dt,
        days,
        vopex,
        elec_cost_per_volt: elec_per_volt,
        peak_power_kwe: peak,
        daily_h2_kg: annual_h2_kg / n_days,
        annual_h2_kg,
        utilization: energy / (n_days * HOURS_PER_DAY as f64 * nameplate_kw),
        ledger,
        storage,
        layout: l,
        x: res.x.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compressor_reference_value() {
        let g: f64 = 1.41;
        let expected = g / (g - 1.0) * 8.314 * 298.0 * ((200.0f64 / 30.0).powf((g - 1.0) / g) - 1.0) / 0.7 / 1000.0;
        let w = compressor_work(1.0, 30.0, 200.0, 298.0);
        assert!((w - expected).abs() < 1e-12);
        assert!((w - 8.96).abs() < 0.01, "{w}");
        assert_eq!(compressor_work(1.0, 30.0, 30.0, 298.0), 0.0);
        assert!(compressor_work(1.0, 30.0, 250.0, 298.0) > w);
    }

    #[test]
    fn carryover_counts_small() {
        let m = carryover_counts(&[0, 1, 0, 0], 2);
        assert_eq!(m, vec![vec![0.0 + 1.0 + 2.0, 1.0 + 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn step_prices_hold_and_average() {
        let hourly: Vec<f64> = (0..24).map(|h| h as f64).collect();
        let q = step_prices(&hourly, 96);
        assert_eq!(q[0], 0.0);
        assert_eq!(q[3], 0.0);
        assert_eq!(q[4], 1.0);
        let b = step_prices(&hourly, 8);
        assert_eq!(b[0], 1.0);
        assert_eq!(b[7], 22.0);
    }
}
