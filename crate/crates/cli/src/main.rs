//! `pemids`: design and operation optimization of a PEM electrolysis plant.

mod artifacts;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use serde::{Deserialize, Serialize};

use pem_core::design::{evaluate_design, optimize, Design, DesignError, DesignProblem, Evaluation, OptimizeResult};
use pem_core::economics::CostReport;
use pem_core::prices::synthetic::{generate, PricePattern, PriceSpec};
use pem_core::prices::{load_prices, write_prices, PriceFormat, PriceSeries, RepDaySet};
use pem_core::scenario::Scenario;
use pem_core::schedule::{read_schedule_csv, write_schedule, Schedule};
use pem_core::simulate::{simulate, Tolerances};

use artifacts::{sha256_hex, unix_now, Artifacts, Manifest};

#[derive(Parser, Debug)]
#[command(name = "pemids", version, about = "PEM electrolyzer design and scheduling optimizer")]
struct Cli {
    /// Scenario TOML file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trial evaluations.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also evaluate a coarse grid over the search box.
    #[arg(long, global = true)]
    grid_audit: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct DesignArgs {
    #[arg(long)]
    n_cells: Option<f64>,
    #[arg(long)]
    storage_days: Option<f64>,
    /// JSON file holding a design (`design.json` or `cost_report.json`).
    #[arg(long)]
    design: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bilevel optimization of cell count, storage and operation.
    Optimize,
    /// Inner problem and economics for one fixed design.
    Evaluate {
        #[command(flatten)]
        design: DesignArgs,
    },
    /// Forward check of a schedule CSV.
    Simulate {
        #[arg(long)]
        schedule: PathBuf,
        #[command(flatten)]
        design: DesignArgs,
    },
    /// Price utilities.
    Prices {
        #[command(subcommand)]
        command: PricesCommand,
    },
}

#[derive(Subcommand, Debug)]
enum PricesCommand {
    /// Writes a synthetic 8760-hour price CSV.
    Gen {
        #[arg(long)]
        pattern: String,
        #[arg(long, default_value_t = 50.0)]
        mean: f64,
        /// Peak/off-peak gap (diurnal) or standard deviation.
        #[arg(long, default_value_t = 20.0)]
        spread: f64,
    },
    /// Clusters a price year into representative days.
    Cluster {
        /// Price CSV; defaults to the scenario's price source.
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Infeasible(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Solver(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Infeasible(m) | Failure::Solver(m) => m,
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Config(format!("cannot write output: {e}"))
}

type Result<T> = std::result::Result<T, Failure>;

struct Loaded {
    scenario: Scenario,
    path: PathBuf,
    sha256: String,
}

fn load_scenario(cli: &Cli) -> Result<Loaded> {
    let path = cli
        .scenario
        .clone()
        .ok_or_else(|| Failure::Config("--scenario is required".into()))?;
    let bytes = std::fs::read(&path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut scenario = Scenario::load(&path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    Ok(Loaded {
        scenario,
        path,
        sha256: sha256_hex(&bytes),
    })
}

fn out_dir(cli: &Cli, scenario: Option<&Scenario>) -> Result<PathBuf> {
    cli.out
        .clone()
        .or_else(|| scenario.and_then(|s| s.output_dir.clone()))
        .ok_or_else(|| Failure::Config("--out is required".into()))
}

fn prices_and_rep_days(s: &Scenario) -> Result<(PriceSeries, RepDaySet)> {
    let prices = s.load_prices().map_err(|e| Failure::Config(e.to_string()))?;
    let rd = s.rep_day_set(&prices).map_err(|e| Failure::Config(e.to_string()))?;
    Ok((prices, rd))
}

#[derive(Deserialize)]
struct DesignFile {
    design: Design,
}

fn resolve_design(args: &DesignArgs, scenario: &Scenario) -> Result<Design> {
    if let Some(p) = &args.design {
        let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
        if let Ok(d) = serde_json::from_str::<Design>(&text) {
            return Ok(d);
        }
        return serde_json::from_str::<DesignFile>(&text)
            .map(|f| f.design)
            .map_err(|e| Failure::Config(format!("{}: no design found ({e})", p.display())));
    }
    match (args.n_cells, args.storage_days, scenario.design) {
        (Some(n), Some(s), _) => Ok(Design {
            n_cells: n,
            storage_days: s,
        }),
        (None, None, Some(d)) => Ok(d),
        (Some(n), None, Some(d)) => Ok(Design { n_cells: n, ..d }),
        (None, Some(s), Some(d)) => Ok(Design { storage_days: s, ..d }),
        _ => Err(Failure::Config(
            "a design is required: --design, --n-cells with --storage-days, or [design] in the scenario".into(),
        )),
    }
}

#[derive(Serialize)]
struct CostOutput<'a> {
    scenario: &'a str,
    mode: &'a str,
    design: Design,
    n_cells_rounded: u64,
    pv: f64,
    lcoh: f64,
    schedule_status: &'a str,
    solver_iterations: usize,
    report: &'a CostReport,
}

#[derive(Serialize)]
struct LcohRow<'a> {
    scenario: &'a str,
    capex: f64,
    planned_replacement: f64,
    unplanned_replacement: f64,
    fopex: f64,
    vopex: f64,
    total: f64,
}

#[derive(Serialize)]
struct TrialRow {
    n_cells: f64,
    storage_days: f64,
    pv: f64,
    lcoh: f64,
    status: String,
    solver_iterations: usize,
    infeasible: bool,
    vopex: f64,
    peak_power_kwe: f64,
    utilization: f64,
    degradation_per_year: f64,
}

impl From<&Evaluation> for TrialRow {
    fn from(e: &Evaluation) -> Self {
        let s = e.schedule.as_ref();
        Self {
            n_cells: e.design.n_cells,
            storage_days: e.design.storage_days,
            pv: e.pv,
            lcoh: e.lcoh,
            status: e.status.clone(),
            solver_iterations: e.iterations,
            infeasible: e.infeasible,
            vopex: s.map_or(f64::NAN, |s| s.vopex.total),
            peak_power_kwe: s.map_or(f64::NAN, |s| s.peak_power_kwe),
            utilization: s.map_or(f64::NAN, |s| s.utilization),
            degradation_per_year: s.map_or(f64::NAN, |s| s.ledger.end_of_year),
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    n_cells_lo: f64,
    n_cells_hi: f64,
    storage_lo: f64,
    storage_hi: f64,
    a_n_cells: f64,
    a_storage: f64,
    a_pv: f64,
    b_n_cells: f64,
    b_storage: f64,
    b_pv: f64,
    c_n_cells: f64,
    c_storage: f64,
    c_pv: f64,
    d_n_cells: f64,
    d_storage: f64,
    d_pv: f64,
    winner: char,
    incumbent_n_cells: f64,
    incumbent_storage: f64,
    incumbent_pv: f64,
}

#[derive(Serialize)]
struct HistogramRow {
    i_lo: f64,
    i_hi: f64,
    hours: f64,
}

#[derive(Serialize)]
struct DurationRow {
    rank: usize,
    price: f64,
}

fn histogram(s: &Schedule) -> Vec<HistogramRow> {
    let width = 0.1;
    let bins = 40;
    let mut hours = vec![0.0; bins];
    for day in &s.days {
        for st in &day.steps {
            let b = ((st.current_density / width) as usize).min(bins - 1);
            hours[b] += day.weight as f64 * s.dt_hours;
        }
    }
    hours
        .into_iter()
        .enumerate()
        .map(|(b, h)| HistogramRow {
            i_lo: b as f64 * width,
            i_hi: (b + 1) as f64 * width,
            hours: h,
        })
        .collect()
}

fn write_rep_days(a: &mut Artifacts, rd: &RepDaySet) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rep_day".to_string(), "weight".into(), "medoid_day".into()];
    header.extend((0..24).map(|h| format!("h{h:02}")));
    let csv_err = |e: csv::Error| Failure::Config(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in 0..rd.k {
        let mut row = vec![
            (r + 1).to_string(),
            rd.weights[r].to_string(),
            rd.medoid_indices.get(r).map_or(String::new(), |d| (d + 1).to_string()),
        ];
        row.extend(rd.rep_days[r].iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Config(e.to_string()))?;
    a.write_bytes("rep_days.csv", &bytes).map_err(io)?;
    let mut m = csv::Writer::from_writer(Vec::new());
    m.write_record(["day", "rep_day"]).map_err(csv_err)?;
    for (d, r) in rd.mapping.iter().enumerate() {
        m.write_record([(d + 1).to_string(), (r + 1).to_string()]).map_err(csv_err)?;
    }
    let bytes = m.into_inner().map_err(|e| Failure::Config(e.to_string()))?;
    a.write_bytes("day_mapping.csv", &bytes).map_err(io)?;
    Ok(())
}

fn write_evaluation(a: &mut Artifacts, name: &str, mode: &str, e: &Evaluation) -> Result<()> {
    let (Some(s), Some(r)) = (&e.schedule, &e.report) else {
        return Err(Failure::Solver("no schedule to report".into()));
    };
    a.write_json(
        "cost_report.json",
        &CostOutput {
            scenario: name,
            mode,
            design: e.design,
            n_cells_rounded: e.design.n_cells.round() as u64,
            pv: e.pv,
            lcoh: e.lcoh,
            schedule_status: &e.status,
            solver_iterations: e.iterations,
            report: r,
        },
    )
    .map_err(io)?;
    a.write_json("design.json", &e.design).map_err(io)?;
    let b = &r.lcoh_breakdown;
    a.write_csv(
        "lcoh_breakdown.csv",
        &[LcohRow {
            scenario: name,
            capex: b.capex,
            planned_replacement: b.planned_replacement,
            unplanned_replacement: b.unplanned_replacement,
            fopex: b.fopex,
            vopex: b.vopex,
            total: r.lcoh,
        }],
    )
    .map_err(io)?;
    let written = write_schedule(a.root(), s).map_err(io)?;
    a.adopt(&written).map_err(io)?;
    a.write_csv("current_histogram.csv", &histogram(s)).map_err(io)?;
    Ok(())
}

fn write_duration(a: &mut Artifacts, prices: &PriceSeries) -> Result<()> {
    let rows: Vec<DurationRow> = prices
        .duration_curve()
        .into_iter()
        .enumerate()
        .map(|(rank, price)| DurationRow { rank: rank + 1, price })
        .collect();
    a.write_csv("price_duration.csv", &rows).map_err(io)?;
    Ok(())
}

fn finish<S: Serialize>(mut a: Artifacts, command: &str, loaded: Option<&Loaded>, started: u64, status: &str, details: S) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        scenario: loaded.map_or(String::new(), |l| l.path.display().to_string()),
        scenario_sha256: loaded.map_or(String::new(), |l| l.sha256.clone()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        status: status.to_string(),
        details,
        files: a.files(),
    };
    a.write_json("manifest.json", &manifest).map_err(io)?;
    info!("wrote {}", a.root().display());
    Ok(())
}

#[derive(Serialize)]
struct OptimizeDetails {
    converged: bool,
    gss_iterations: usize,
    trial_evaluations: usize,
    best_trial_pv: f64,
    final_pv: f64,
    grid_local_minima: Option<usize>,
    trials: Vec<TrialStats>,
}

#[derive(Serialize)]
struct TrialStats {
    n_cells: f64,
    storage_days: f64,
    status: String,
    solver_iterations: usize,
}

fn trace_rows(r: &OptimizeResult) -> Vec<TraceRow> {
    r.gss
        .trace
        .iter()
        .map(|it| {
            let t = &it.trials;
            TraceRow {
                iteration: it.iteration,
                n_cells_lo: it.box_before.n_cells[0],
                n_cells_hi: it.box_before.n_cells[1],
                storage_lo: it.box_before.storage_days[0],
                storage_hi: it.box_before.storage_days[1],
                a_n_cells: t[0].n_cells,
                a_storage: t[0].storage_days,
                a_pv: it.pv[0],
                b_n_cells: t[1].n_cells,
                b_storage: t[1].storage_days,
                b_pv: it.pv[1],
                c_n_cells: t[2].n_cells,
                c_storage: t[2].storage_days,
                c_pv: it.pv[2],
                d_n_cells: t[3].n_cells,
                d_storage: t[3].storage_days,
                d_pv: it.pv[3],
                winner: ['A', 'B', 'C', 'D'][it.winner],
                incumbent_n_cells: it.incumbent.n_cells,
                incumbent_storage: it.incumbent.storage_days,
                incumbent_pv: it.incumbent_pv,
            }
        })
        .collect()
}

fn run_optimize(cli: &Cli) -> Result<()> {
    let started = unix_now();
    let loaded = load_scenario(cli)?;
    let s = &loaded.scenario;
    let out = out_dir(cli, Some(s))?;
    let (prices, rd) = prices_and_rep_days(s)?;
    let max_kg = s.params.max_throughput_kg_per_day(s.search.n_cells[1]);
    if max_kg < s.params.operation.demand_kg_per_day {
        return Err(Failure::Infeasible(format!(
            "search box is infeasible: {:.0} cells deliver at most {max_kg:.1} kg/day against a demand of {:.1} kg/day",
            s.search.n_cells[1], s.params.operation.demand_kg_per_day
        )));
    }
    let mut opts = s.optimize;
    if let Some(j) = cli.jobs {
        opts.jobs = j;
    }
    opts.grid_audit |= cli.grid_audit;
    let problem = DesignProblem {
        rep_days: rd.clone(),
        params: s.params.clone(),
    };
    info!("optimizing '{}' with {} representative days", s.name, rd.k);
    let result = optimize(&problem, &s.search, &opts).map_err(|e| match e {
        DesignError::AllInfeasible(b) => Failure::Infeasible(format!(
            "all trial designs infeasible in box {b:?}; {:.0} cells deliver at most {max_kg:.1} kg/day",
            b.n_cells[1]
        )),
        DesignError::InvalidBox(m) => Failure::Config(m),
    })?;
    let best = &result.best;
    if best.schedule.is_none() {
        let msg = format!("final design failed: {}", best.error.clone().unwrap_or_default());
        return Err(if best.infeasible { Failure::Infeasible(msg) } else { Failure::Solver(msg) });
    }
    let mut a = Artifacts::new(&out).map_err(io)?;
    write_evaluation(&mut a, &s.name, "optimize", best)?;
    a.write_csv("gss_trace.csv", &trace_rows(&result)).map_err(io)?;
    let trials: Vec<TrialRow> = result.evaluations.iter().map(TrialRow::from).collect();
    a.write_csv("trials.csv", &trials).map_err(io)?;
    if let Some(g) = &result.grid {
        let rows: Vec<TrialRow> = g.points.iter().map(TrialRow::from).collect();
        a.write_csv("grid_audit.csv", &rows).map_err(io)?;
        if !g.unimodal {
            log::warn!("grid audit found {} local minima; the landscape may not be unimodal", g.local_minima);
        }
    }
    write_rep_days(&mut a, &rd)?;
    write_duration(&mut a, &prices)?;
    let details = OptimizeDetails {
        converged: result.gss.converged,
        gss_iterations: result.gss.trace.len(),
        trial_evaluations: result.evaluations.len(),
        best_trial_pv: result.gss.best_pv,
        final_pv: best.pv,
        grid_local_minima: result.grid.as_ref().map(|g| g.local_minima),
        trials: result
            .evaluations
            .iter()
            .map(|e| TrialStats {
                n_cells: e.design.n_cells,
                storage_days: e.design.storage_days,
                status: e.status.clone(),
                solver_iterations: e.iterations,
            })
            .collect(),
    };
    let status = if result.gss.converged { "converged" } else { "max_iterations" };
    finish(a, "optimize", Some(&loaded), started, status, details)
}

#[derive(Serialize)]
struct EvaluateDetails {
    design: Design,
    status: String,
    solver_iterations: usize,
    constraint_violation: f64,
}

fn run_evaluate(cli: &Cli, args: &DesignArgs) -> Result<()> {
    let started = unix_now();
    let loaded = load_scenario(cli)?;
    let s = &loaded.scenario;
    let design = resolve_design(args, s)?;
    let out = out_dir(cli, Some(s))?;
    let (prices, rd) = prices_and_rep_days(s)?;
    let problem = DesignProblem {
        rep_days: rd.clone(),
        params: s.params.clone(),
    };
    let e = evaluate_design(&problem, design, None);
    if e.schedule.is_none() {
        let msg = e.error.clone().unwrap_or_default();
        return Err(if e.infeasible { Failure::Infeasible(msg) } else { Failure::Solver(msg) });
    }
    let mut a = Artifacts::new(&out).map_err(io)?;
    write_evaluation(&mut a, &s.name, "evaluate", &e)?;
    write_rep_days(&mut a, &rd)?;
    write_duration(&mut a, &prices)?;
    let sched = e.schedule.as_ref().expect("checked");
    let details = EvaluateDetails {
        design,
        status: e.status.clone(),
        solver_iterations: e.iterations,
        constraint_violation: sched.constraint_violation,
    };
    finish(a, "evaluate", Some(&loaded), started, "solved", details)
}

#[derive(Serialize)]
struct SimulateDetails {
    schedule: String,
    violations: usize,
}

fn run_simulate(cli: &Cli, schedule: &Path, args: &DesignArgs) -> Result<()> {
    let started = unix_now();
    let loaded = load_scenario(cli)?;
    let s = &loaded.scenario;
    let design = resolve_design(args, s)?;
    let out = out_dir(cli, Some(s))?;
    let rows = read_schedule_csv(schedule).map_err(Failure::Config)?;
    let report = simulate(&rows, design, &s.params, &Tolerances::default()).map_err(|e| Failure::Config(format!("{}: {e}", schedule.display())))?;
    let mut a = Artifacts::new(&out).map_err(io)?;
    a.write_json("simulation.json", &report).map_err(io)?;
    a.write_csv("simulation_steps.csv", &report.steps).map_err(io)?;
    info!(
        "{} violations ({} safety, {} above LFL, {} temperature, {} storage, {} demand)",
        report.total_violations(),
        report.counts.safety,
        report.counts.lfl,
        report.counts.temperature,
        report.counts.storage,
        report.counts.demand
    );
    let details = SimulateDetails {
        schedule: schedule.display().to_string(),
        violations: report.total_violations(),
    };
    finish(a, "simulate", Some(&loaded), started, "simulated", details)
}

#[derive(Serialize)]
struct PricesDetails {
    pattern: String,
    mean: f64,
    spread: f64,
    seed: u64,
}

fn run_prices_gen(cli: &Cli, pattern: &str, mean: f64, spread: f64) -> Result<()> {
    let started = unix_now();
    let p: PricePattern = pattern.parse().map_err(|e: pem_core::prices::PriceError| Failure::Config(e.to_string()))?;
    let out = out_dir(cli, None)?;
    let seed = cli.seed.unwrap_or(0);
    let series = generate(&PriceSpec {
        pattern: p,
        mean,
        spread,
        seed,
    });
    let mut a = Artifacts::new(&out).map_err(io)?;
    let path = a.root().join("prices.csv");
    write_prices(&path, &series).map_err(io)?;
    a.adopt(&[path]).map_err(io)?;
    write_duration(&mut a, &series)?;
    let details = PricesDetails {
        pattern: pattern.to_string(),
        mean,
        spread,
        seed,
    };
    finish(a, "prices gen", None, started, "generated", details)
}

#[derive(Serialize)]
struct ClusterDetails {
    k: usize,
    seed: u64,
    weighted_mean_price: f64,
    annual_mean_price: f64,
}

fn run_prices_cluster(cli: &Cli, prices: Option<&Path>, k: Option<usize>) -> Result<()> {
    let started = unix_now();
    let loaded = match (&cli.scenario, prices) {
        (Some(_), _) => Some(load_scenario(cli)?),
        (None, None) => return Err(Failure::Config("give --prices or --scenario".into())),
        _ => None,
    };
    let seed = cli.seed.or(loaded.as_ref().map(|l| l.scenario.seed)).unwrap_or(0);
    let series = match (prices, &loaded) {
        (Some(p), _) => load_prices(p, PriceFormat::Csv).map_err(|e| Failure::Config(e.to_string()))?,
        (None, Some(l)) => l.scenario.load_prices().map_err(|e| Failure::Config(e.to_string()))?,
        (None, None) => unreachable!(),
    };
    let k = k.or(loaded.as_ref().map(|l| l.scenario.rep_days)).unwrap_or(7);
    let rd = pem_core::prices::cluster(&series, k, seed).map_err(|e| Failure::Config(e.to_string()))?;
    let out = out_dir(cli, loaded.as_ref().map(|l| &l.scenario))?;
    let mut a = Artifacts::new(&out).map_err(io)?;
    write_rep_days(&mut a, &rd)?;
    let details = ClusterDetails {
        k,
        seed,
        weighted_mean_price: rd.weighted_mean_price(),
        annual_mean_price: series.mean(),
    };
    finish(a, "prices cluster", loaded.as_ref(), started, "clustered", details)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Optimize => run_optimize(cli),
        Command::Evaluate { design } => run_evaluate(cli, design),
        Command::Simulate { schedule, design } => run_simulate(cli, schedule, design),
        Command::Prices { command } => match command {
            PricesCommand::Gen { pattern, mean, spread } => run_prices_gen(cli, pattern, *mean, *spread),
            PricesCommand::Cluster { prices, k } => run_prices_cluster(cli, prices.as_deref(), *k),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.message());
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
