//! Storage state of charge as intra-day profiles on representative days plus
//! inter-day carry-over on real days.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StorageLink {
    /// Net change over each representative day (mol).
    pub delta_r: Vec<f64>,
    /// Charge relative to the start of the day, one entry per step boundary
    /// starting with 0 (mol).
    pub soc_rep: Vec<Vec<f64>>,
    /// Charge at the start of each real day (mol).
    pub soc_real_start: Vec<f64>,
    /// mol.
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct StorageCheck {
    pub min: f64,
    pub max: f64,
    /// |S₁ − (S_N + δ_f(N))| divided by max(capacity, 1).
    pub wrap_residual: f64,
}

impl StorageLink {
    /// Chains real-day start levels from `first_start` through the mapping.
    pub fn from_profiles(soc_rep: Vec<Vec<f64>>, first_start: f64, mapping: &[usize], capacity: f64) -> Self {
        let delta_r: Vec<f64> = soc_rep
            .iter()
            .map(|p| p.last().copied().unwrap_or(0.0) - p.first().copied().unwrap_or(0.0))
            .collect();
        let mut soc_real_start = Vec::with_capacity(mapping.len());
        let mut s = first_start;
        for &r in mapping {
            soc_real_start.push(s);
            s += delta_r[r];
        }
        Self {
            delta_r,
            soc_rep,
            soc_real_start,
            capacity,
        }
    }

    /// Chronological state of charge at every step boundary of the year,
    /// ending with the level after the last real day.
    pub fn expand(&self, mapping: &[usize]) -> Vec<f64> {
        let mut out = Vec::new();
        for (d, &r) in mapping.iter().enumerate() {
            let s0 = self.soc_real_start[d];
            let prof = &self.soc_rep[r];
            out.extend(prof[..prof.len() - 1].iter().map(|v| s0 + v));
        }
        if let (Some(&last), Some(&r)) = (self.soc_real_start.last(), mapping.last()) {
            out.push(last + self.delta_r[r]);
        }
        out
    }

    pub fn check(&self, mapping: &[usize]) -> StorageCheck {
        let series = self.expand(mapping);
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let end = series.last().copied().unwrap_or(0.0);
        let start = self.soc_real_start.first().copied().unwrap_or(0.0);
        StorageCheck {
            min,
            max,
            wrap_residual: (start - end).abs() / self.capacity.max(1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_day_chain() {
        let prof = vec![vec![0.0, 2.0, 1.0], vec![0.0, -1.0, -1.0]];
        let link = StorageLink::from_profiles(prof, 5.0, &[0, 1, 1, 0], 10.0);
        assert_eq!(link.delta_r, vec![1.0, -1.0]);
        assert_eq!(link.soc_real_start, vec![5.0, 6.0, 5.0, 4.0]);
        assert_eq!(
            link.expand(&[0, 1, 1, 0]),
            vec![5.0, 7.0, 6.0, 5.0, 5.0, 4.0, 4.0, 6.0, 5.0]
        );
        let c = link.check(&[0, 1, 1, 0]);
        assert_eq!(c.min, 4.0);
        assert_eq!(c.max, 7.0);
        assert_eq!(c.wrap_residual, 0.0);
    }
}
