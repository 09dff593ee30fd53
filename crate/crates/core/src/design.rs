//! Outer problem: golden-section quadrant elimination over cell count and
//! storage days.

use std::collections::HashMap;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degradation::replacement_interval;
use crate::economics::{capex, present_value, AnnualStreams, CostReport};
use crate::prices::RepDaySet;
use crate::schedule::{optimize_schedule, Schedule, ScheduleError, ScheduleProblem, SystemParams};

/// (√5 − 1)/2.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub n_cells: f64,
    pub storage_days: f64,
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid search box: {0}")]
    InvalidBox(String),
    #[error("all trial designs are infeasible in box {0:?}")]
    AllInfeasible(SearchBox),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBox {
    pub n_cells: [f64; 2],
    pub storage_days: [f64; 2],
    /// Final width of each axis relative to its initial width.
    pub tolerance: f64,
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            n_cells: [40_000.0, 300_000.0],
            storage_days: [0.1, 14.0],
            tolerance: 0.001,
        }
    }
}

impl SearchBox {
    pub fn validate(&self) -> Result<(), DesignError> {
        if !(self.n_cells[0] < self.n_cells[1]) || !(self.storage_days[0] < self.storage_days[1]) {
            return Err(DesignError::InvalidBox("lower bounds must be below upper bounds".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(DesignError::InvalidBox("tolerance must be positive".into()));
        }
        if self.n_cells[0] <= 0.0 || self.storage_days[0] < 0.0 {
            return Err(DesignError::InvalidBox("cell count must be positive and storage non-negative".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> Design {
        Design {
            n_cells: 0.5 * (self.n_cells[0] + self.n_cells[1]),
            storage_days: 0.5 * (self.storage_days[0] + self.storage_days[1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Axis {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64) -> Self {
        let w = hi - lo;
        Self {
            lo,
            hi,
            a: hi - GOLDEN * w,
            b: lo + GOLDEN * w,
        }
    }

    fn keep_low(&mut self) {
        self.hi = self.b;
        self.b = self.a;
        self.a = self.hi - GOLDEN * (self.hi - self.lo);
    }

    fn keep_high(&mut self) {
        self.lo = self.a;
        self.a = self.b;
        self.b = self.lo + GOLDEN * (self.hi - self.lo);
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Search state: current box plus interior trial coordinates on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GssState {
    x: Axis,
    y: Axis,
    width0: [f64; 2],
    tolerance: f64,
}

impl GssState {
    pub fn new(b: &SearchBox) -> Result<Self, DesignError> {
        b.validate()?;
        Ok(Self {
            x: Axis::new(b.n_cells[0], b.n_cells[1]),
            y: Axis::new(b.storage_days[0], b.storage_days[1]),
            width0: [b.n_cells[1] - b.n_cells[0], b.storage_days[1] - b.storage_days[0]],
            tolerance: b.tolerance,
        })
    }

    pub fn current_box(&self) -> SearchBox {
        SearchBox {
            n_cells: [self.x.lo, self.x.hi],
            storage_days: [self.y.lo, self.y.hi],
            tolerance: self.tolerance,
        }
    }

    pub fn converged(&self) -> bool {
        self.x.width() <= self.tolerance * self.width0[0] && self.y.width() <= self.tolerance * self.width0[1]
    }

    /// Trial points A(x₁,y₁), B(x₂,y₁), C(x₁,y₂), D(x₂,y₂).
    pub fn trials(&self) -> [Design; 4] {
        let d = |n, s| Design {
            n_cells: n,
            storage_days: s,
        };
        [
            d(self.x.a, self.y.a),
            d(self.x.b, self.y.a),
            d(self.x.a, self.y.b),
            d(self.x.b, self.y.b),
        ]
    }

    /// Discards the quadrant that cannot hold the minimum given the winning
    /// trial index.
    pub fn shrink(&mut self, winner: usize) {
        if winner % 2 == 0 {
            self.x.keep_low();
        } else {
            self.x.keep_high();
        }
        if winner < 2 {
            self.y.keep_low();
        } else {
            self.y.keep_high();
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GssIteration {
    pub iteration: usize,
    pub box_before: SearchBox,
    pub trials: [Design; 4],
    pub pv: [f64; 4],
    pub winner: usize,
    pub box_after: SearchBox,
    pub incumbent: Design,
    pub incumbent_pv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GssOutcome {
    pub best: Design,
    pub best_pv: f64,
    pub converged: bool,
    pub trace: Vec<GssIteration>,
}

fn argmin(pv: &[f64; 4]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in pv.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |b| v < pv[b]) {
            best = Some(k);
        }
    }
    best
}

/// One quadrant-elimination step. `eval` receives the four trials and
/// returns their present values, `+∞` marking infeasible designs.
pub fn gss_step<F>(state: &mut GssState, iteration: usize, incumbent: Option<(Design, f64)>, eval: &mut F) -> Result<GssIteration, DesignError>
where
    F: FnMut(&[Design; 4]) -> [f64; 4],
{
    let box_before = state.current_box();
    let trials = state.trials();
    let pv = eval(&trials);
    let winner = argmin(&pv).ok_or(DesignError::AllInfeasible(box_before))?;
    state.shrink(winner);
    let (incumbent, incumbent_pv) = match incumbent {
        Some((d, v)) if v <= pv[winner] => (d, v),
        _ => (trials[winner], pv[winner]),
    };
    Ok(GssIteration {
        iteration,
        box_before,
        trials,
        pv,
        winner,
        box_after: state.current_box(),
        incumbent,
        incumbent_pv,
    })
}

/// Runs quadrant elimination until both axes meet the tolerance.
pub fn run_gss<F>(b: &SearchBox, max_iter: usize, mut eval: F) -> Result<GssOutcome, DesignError>
where
    F: FnMut(&[Design; 4]) -> [f64; 4],
{
    let mut state = GssState::new(b)?;
    let mut trace = Vec::new();
    let mut incumbent: Option<(Design, f64)> = None;
    if state.converged() {
        let c = b.center();
        let pv = eval(&[c; 4])[0];
        return Ok(GssOutcome {
            best: c,
            best_pv: pv,
            converged: true,
            trace,
        });
    }
    while !state.converged() && trace.len() < max_iter {
        let it = gss_step(&mut state, trace.len() + 1, incumbent, &mut eval)?;
        incumbent = Some((it.incumbent, it.incumbent_pv));
        trace.push(it);
    }
    let (best, best_pv) = incumbent.expect("at least one iteration");
    Ok(GssOutcome {
        best,
        best_pv,
        converged: state.converged(),
        trace,
    })
}

/// One inner solve plus its cost accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub design: Design,
    /// $, `+∞` when infeasible or failed.
    pub pv: f64,
    pub lcoh: f64,
    pub status: String,
    pub iterations: usize,
    pub error: Option<String>,
    pub infeasible: bool,
    #[serde(skip)]
    pub schedule: Option<Schedule>,
    #[serde(skip)]
    pub report: Option<CostReport>,
}

/// Everything the outer loop needs to score a design.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub rep_days: RepDaySet,
    pub params: SystemParams,
}

/// Economics of a solved schedule.
pub fn cost_report(schedule: &Schedule, params: &SystemParams) -> Result<CostReport, crate::economics::EconomicsError> {
    let costs = &params.costs;
    let d = schedule.design;
    let cap = capex(d.n_cells, d.storage_days, schedule.peak_power_kwe, schedule.daily_h2_kg, costs);
    let dv = schedule.ledger.end_of_year;
    let interval = replacement_interval(dv, &params.cell.degradation);
    let streams = AnnualStreams {
        vopex: schedule.vopex.total,
        elec_cost_per_volt: schedule.elec_cost_per_volt,
        degradation_per_year: dv,
        annual_h2_kg: schedule.annual_h2_kg,
    };
    let mut r = present_value(&cap, interval.years, &streams, costs)?;
    r.replacement_ratio = interval.ratio;
    r.utilization = schedule.utilization;
    r.days_storage = d.storage_days;
    r.n_cells = d.n_cells;
    Ok(r)
}

pub fn evaluate_design(problem: &DesignProblem, design: Design, warm: Option<&Schedule>) -> Evaluation {
    let sp = ScheduleProblem {
        design,
        rep_days: problem.rep_days.clone(),
        params: problem.params.clone(),
    };
    let failed = |status: &str, msg: String, infeasible: bool| Evaluation {
        design,
        pv: f64::INFINITY,
        lcoh: f64::INFINITY,
        status: status.to_string(),
        iterations: 0,
        error: Some(msg),
        infeasible,
        schedule: None,
        report: None,
    };
    match optimize_schedule(&sp, warm) {
        Ok(s) => match cost_report(&s, &problem.params) {
            Ok(r) => Evaluation {
                design,
                pv: r.pv_total,
                lcoh: r.lcoh,
                status: s.status.clone(),
                iterations: s.iterations,
                error: None,
                infeasible: false,
                schedule: Some(s),
                report: Some(r),
            },
            Err(e) => failed("economics", e.to_string(), false),
        },
        Err(e @ ScheduleError::Infeasible { .. }) => failed("infeasible", e.to_string(), true),
        Err(e @ ScheduleError::Build(_)) => failed("build", e.to_string(), false),
        Err(e) => failed("solver", e.to_string(), false),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub jobs: usize,
    pub max_iter: usize,
    pub grid_audit: bool,
    /// Points per axis of the audit grid.
    pub grid_points: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            max_iter: 60,
            grid_audit: false,
            grid_points: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridAudit {
    pub points: Vec<Evaluation>,
    /// Strict local minima among the grid points (4-neighbourhood).
    pub local_minima: usize,
    pub unimodal: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub gss: GssOutcome,
    /// Cold re-solve of the winning design, as fixed-design evaluation would
    /// produce it.
    pub best: Evaluation,
    pub evaluations: Vec<Evaluation>,
    pub grid: Option<GridAudit>,
}

fn key(d: &Design) -> (i64, i64) {
    ((d.n_cells * 1e3).round() as i64, (d.storage_days * 1e9).round() as i64)
}

fn nearest<'a>(done: &'a [Evaluation], d: &Design, b: &SearchBox) -> Option<&'a Schedule> {
    let lx = (b.n_cells[1] / b.n_cells[0]).ln().max(1e-12);
    let ly = (b.storage_days[1] - b.storage_days[0]).max(1e-12);
    let mut best: Option<(f64, f64, &Schedule)> = None;
    for e in done {
        let Some(s) = e.schedule.as_ref() else { continue };
        let dx = (e.design.n_cells / d.n_cells).ln() / lx;
        let dy = (e.design.storage_days - d.storage_days) / ly;
        let dist = dx * dx + dy * dy;
        let better = match best {
            None => true,
            Some((bd, bn, _)) => dist < bd || (dist == bd && e.design.n_cells < bn),
        };
        if better {
            best = Some((dist, e.design.n_cells, s));
        }
    }
    best.map(|(_, _, s)| s)
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
}

/// Full bilevel optimization over the search box.
pub fn optimize(problem: &DesignProblem, b: &SearchBox, opts: &OptimizeOptions) -> Result<OptimizeResult, DesignError> {
    b.validate()?;
    let pool = pool(opts.jobs);
    let mut done: Vec<Evaluation> = Vec::new();
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let gss = run_gss(b, opts.max_iter, |trials| {
        let mut todo: Vec<Design> = Vec::new();
        for t in trials {
            if !index.contains_key(&key(t)) && !todo.iter().any(|d| key(d) == key(t)) {
                todo.push(*t);
            }
        }
        let warm: Vec<Option<Schedule>> = todo.iter().map(|d| nearest(&done, d, b).cloned()).collect();
        let fresh: Vec<Evaluation> = pool.install(|| {
            todo.par_iter()
                .zip(warm.par_iter())
                .map(|(d, w)| evaluate_design(problem, *d, w.as_ref()))
                .collect()
        });
        for e in fresh {
            info!(
                "trial {:.0} cells, {:.4} days: PV {:.6e} ({}, {} iterations)",
                e.design.n_cells, e.design.storage_days, e.pv, e.status, e.iterations
            );
            if let Some(msg) = &e.error {
                warn!("trial failed: {msg}");
            }
            index.insert(key(&e.design), done.len());
            done.push(e);
        }
        let mut pv = [f64::INFINITY; 4];
        for (k, t) in trials.iter().enumerate() {
            pv[k] = done[index[&key(t)]].pv;
        }
        pv
    })?;
    let best = evaluate_design(problem, gss.best, None);
    let grid = if opts.grid_audit {
        Some(grid_audit(problem, b, opts.grid_points, &pool))
    } else {
        None
    };
    Ok(OptimizeResult {
        gss,
        best,
        evaluations: done,
        grid,
    })
}

/// Evaluates a coarse grid and counts strict local minima.
pub fn grid_audit(problem: &DesignProblem, b: &SearchBox, n: usize, pool: &rayon::ThreadPool) -> GridAudit {
    let n = n.max(2);
    let mut designs = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let fx = i as f64 / (n - 1) as f64;
            let fy = j as f64 / (n - 1) as f64;
            designs.push(Design {
                n_cells: b.n_cells[0] + fx * (b.n_cells[1] - b.n_cells[0]),
                storage_days: b.storage_days[0] + fy * (b.storage_days[1] - b.storage_days[0]),
            });
        }
    }
    let points: Vec<Evaluation> = pool.install(|| designs.par_iter().map(|d| evaluate_design(problem, *d, None)).collect());
    let pv: Vec<f64> = points.iter().map(|e| e.pv).collect();
    let local_minima = count_local_minima(&pv, n);
    GridAudit {
        points,
        local_minima,
        unimodal: local_minima <= 1,
    }
}

/// Strict local minima of a row-major `n × n` grid of finite values.
pub fn count_local_minima(values: &[f64], n: usize) -> usize {
    let mut count = 0;
    for j in 0..n {
        for i in 0..n {
            let v = values[j * n + i];
            if !v.is_finite() {
                continue;
            }
            let mut neighbours = Vec::new();
            if i > 0 {
                neighbours.push(values[j * n + i - 1]);
            }
            if i + 1 < n {
                neighbours.push(values[j * n + i + 1]);
            }
            if j > 0 {
                neighbours.push(values[(j - 1) * n + i]);
            }
            if j + 1 < n {
                neighbours.push(values[(j + 1) * n + i]);
            }
            if neighbours.iter().all(|&u| v < u) {
                count += 1;
            }
        }
    }
    count
}
