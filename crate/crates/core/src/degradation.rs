//! Use-dependent voltage degradation and stack replacement interval.

use num_dual::DualNum;
use serde::{Deserialize, Serialize};

/// Replacement interval used when the stack does not degrade, and the longest
/// interval the rule returns (years).
pub const NO_DEGRADATION_INTERVAL: u32 = 7;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationParams {
    pub enabled: bool,
    /// µV/h.
    pub coefficient_a: f64,
    /// A/cm².
    pub knee_current: f64,
    /// V.
    pub replacement_threshold: f64,
    /// Sharpness of the smooth rate used inside the optimizer.
    pub smoothing_beta: f64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            enabled: true,
            coefficient_a: 30.0,
            knee_current: 1.0,
            replacement_threshold: 1.0,
            smoothing_beta: 50.0,
        }
    }
}

impl DegradationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.coefficient_a > 0.0) {
            return Err("degradation coefficient_a must be positive".into());
        }
        if !(self.replacement_threshold > 0.0) {
            return Err("replacement_threshold must be positive".into());
        }
        if !(self.knee_current > 0.0) {
            return Err("knee_current must be positive".into());
        }
        Ok(())
    }

    fn a_volts_per_hour(&self) -> f64 {
        if self.enabled {
            self.coefficient_a * 1e-6
        } else {
            0.0
        }
    }
}

/// Degradation rate in V/h.
pub fn degradation_rate(i: f64, p: &DegradationParams) -> f64 {
    let a = p.a_volts_per_hour();
    let k = p.knee_current;
    if i <= k {
        a
    } else {
        a * (i / k).powi(2)
    }
}

/// C¹ approximation a·(1 + softplus_β((i/k)² − 1)) in V/h.
pub fn smooth_degradation_rate<D: DualNum<Primitive = f64> + Copy>(i: D, p: &DegradationParams) -> D {
    let a = p.a_volts_per_hour();
    let beta = p.smoothing_beta;
    let z = (i / p.knee_current).powi(2) - 1.0;
    let sp = if z.re() > 0.0 {
        z + ((z * -beta).exp() + 1.0).ln() / beta
    } else {
        ((z * beta).exp() + 1.0).ln() / beta
    };
    (sp + 1.0) * a
}

/// Degradation accumulated over a day with a constant-step schedule (V).
///
/// Uses the rectangle rule on each step, matching the implicit Euler scheme of
/// the scheduler.
pub fn accumulate(currents: &[f64], dt_hours: f64, p: &DegradationParams) -> f64 {
    currents.iter().map(|&i| degradation_rate(i, p) * dt_hours).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DegradationLedger {
    /// δV̄_r over each representative day (V).
    pub per_rep_day_delta: Vec<f64>,
    /// Degradation at the end of each real day (V).
    pub cumulative_by_day: Vec<f64>,
    /// Δ¹ after one year (V).
    pub end_of_year: f64,
}

impl DegradationLedger {
    pub fn build(per_rep_day_delta: Vec<f64>, mapping: &[usize]) -> Self {
        let mut cumulative_by_day = Vec::with_capacity(mapping.len());
        let mut acc = 0.0;
        for &r in mapping {
            acc += per_rep_day_delta[r];
            cumulative_by_day.push(acc);
        }
        Self {
            per_rep_day_delta,
            end_of_year: acc,
            cumulative_by_day,
        }
    }

    /// Degradation at the start of real day `d` (0-based).
    pub fn start_of_day(&self, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            self.cumulative_by_day[d - 1]
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ReplacementInterval {
    pub years: u32,
    /// threshold / Δ¹ before flooring; infinite without degradation.
    pub ratio: f64,
}

pub fn replacement_interval(end_of_year: f64, p: &DegradationParams) -> ReplacementInterval {
    if end_of_year <= 0.0 {
        return ReplacementInterval {
            years: NO_DEGRADATION_INTERVAL,
            ratio: f64::INFINITY,
        };
    }
    let ratio = p.replacement_threshold / end_of_year;
    let years = if end_of_year <= p.replacement_threshold {
        ratio.floor() as u32
    } else {
        1
    };
    ReplacementInterval {
        years: years.clamp(1, NO_DEGRADATION_INTERVAL),
        ratio,
    }
}
