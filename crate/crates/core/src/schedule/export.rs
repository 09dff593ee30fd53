use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Schedule, VopexBreakdown};
use crate::design::Design;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScheduleCsvRow {
    pub step: usize,
    pub price: f64,
    pub i: f64,
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(rename = "V_undeg")]
    pub v_undeg: f64,
    #[serde(rename = "V_deg_cuml")]
    pub v_deg_cuml: f64,
    pub h2_gen: f64,
    pub y_h2_anode: f64,
    pub soc: f64,
    pub purge: f64,
    #[serde(default)]
    pub storage_charge: f64,
    #[serde(default)]
    pub storage_discharge: f64,
    #[serde(default)]
    pub anode_liquid: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Summary<'a> {
    design: Design,
    status: &'a str,
    iterations: usize,
    nlp_objective: f64,
    constraint_violation: f64,
    vopex: VopexBreakdown,
    elec_cost_per_volt: f64,
    peak_power_kwe: f64,
    daily_h2_kg: f64,
    annual_h2_kg: f64,
    utilization: f64,
    degradation_end_of_year: f64,
    degradation_per_rep_day: &'a [f64],
    storage_delta_mol: &'a [f64],
    storage_capacity_mol: f64,
}

/// Writes `schedule_r<k>.csv` per representative day and
/// `schedule_summary.json`; returns the written paths.
pub fn write_schedule(dir: &Path, s: &Schedule) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (r, day) in s.days.iter().enumerate() {
        let path = dir.join(format!("schedule_r{}.csv", r + 1));
        let mut w = csv::Writer::from_path(&path)?;
        for st in &day.steps {
            w.serialize(ScheduleCsvRow {
                step: st.step,
                price: st.price,
                i: st.current_density,
                temperature: st.temperature,
                v_undeg: st.v_undeg,
                v_deg_cuml: st.v_deg_intraday,
                h2_gen: st.h2_gen,
                y_h2_anode: st.y_h2_anode,
                soc: st.soc,
                purge: st.n2_purge,
                storage_charge: st.storage_charge,
                storage_discharge: st.storage_discharge,
                anode_liquid: st.anode_liquid,
            })
            .map_err(std::io::Error::other)?;
        }
        w.flush()?;
        out.push(path);
    }
    let summary = Summary {
        design: s.design,
        status: &s.status,
        iterations: s.iterations,
        nlp_objective: s.nlp_objective,
        constraint_violation: s.constraint_violation,
        vopex: s.vopex,
        elec_cost_per_volt: s.elec_cost_per_volt,
        peak_power_kwe: s.peak_power_kwe,
        daily_h2_kg: s.daily_h2_kg,
        annual_h2_kg: s.annual_h2_kg,
        utilization: s.utilization,
        degradation_end_of_year: s.ledger.end_of_year,
        degradation_per_rep_day: &s.ledger.per_rep_day_delta,
        storage_delta_mol: &s.storage.delta_r,
        storage_capacity_mol: s.storage.capacity,
    };
    let path = dir.join("schedule_summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)? + "\n")?;
    out.push(path);
    Ok(out)
}

pub fn read_schedule_csv(path: &Path) -> Result<Vec<ScheduleCsvRow>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for (n, rec) in rdr.deserialize().enumerate() {
        let row: ScheduleCsvRow = rec.map_err(|e| format!("{} row {}: {e}", path.display(), n + 2))?;
        rows.push(row);
    }
    Ok(rows)
}
