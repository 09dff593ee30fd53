use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PriceError, PriceSeries, HOURS_PER_DAY};

const MAX_ITER: usize = 500;

/// Representative days chosen by k-means with medoid selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepDaySet {
    pub k: usize,
    /// k × 24 hourly prices.
    pub rep_days: Vec<Vec<f64>>,
    /// Number of real days per representative day.
    pub weights: Vec<u32>,
    /// Representative day of every real day.
    pub mapping: Vec<usize>,
    /// Real day (0-based) used as each representative day.
    pub medoid_indices: Vec<usize>,
}

impl RepDaySet {
    pub fn num_days(&self) -> usize {
        self.mapping.len()
    }

    /// Builds a set directly from rep-day prices and a mapping.
    pub fn from_mapping(
        rep_days: Vec<Vec<f64>>,
        mapping: Vec<usize>,
        medoid_indices: Vec<usize>,
    ) -> Result<Self, PriceError> {
        let k = rep_days.len();
        if k == 0 || mapping.iter().any(|&r| r >= k) {
            return Err(PriceError::Cluster("mapping refers to a missing representative day".into()));
        }
        let mut weights = vec![0u32; k];
        for &r in &mapping {
            weights[r] += 1;
        }
        Ok(Self {
            k,
            rep_days,
            weights,
            mapping,
            medoid_indices,
        })
    }

    pub fn weighted_mean_price(&self) -> f64 {
        let total: f64 = self
            .rep_days
            .iter()
            .zip(&self.weights)
            .map(|(d, &w)| w as f64 * d.iter().sum::<f64>())
            .sum();
        total / (self.num_days() * HOURS_PER_DAY) as f64
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist2(x, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> KMeansResult {
    assert!(k >= 1 && k <= data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let mut centroids = vec![data[rng.gen_range(0..n)].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = data.iter().map(|x| nearest(x, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (j, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = j;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(data[pick].clone());
    }

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        let mut changed = false;
        let mut wcss = 0.0;
        for (j, x) in data.iter().enumerate() {
            let (c, d) = nearest(x, &centroids);
            wcss += d;
            if labels[j] != c {
                labels[j] = c;
                changed = true;
            }
        }
        // Re-seed empty clusters from the point farthest from its centroid.
        loop {
            let mut counts = vec![0usize; k];
            for &l in &labels {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let (far, far_d) = data
                .iter()
                .enumerate()
                .filter(|(j, _)| counts[labels[*j]] > 1)
                .map(|(j, x)| (j, dist2(x, &centroids[labels[j]])))
                .fold((usize::MAX, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            if far == usize::MAX {
                break;
            }
            wcss -= far_d;
            labels[far] = empty;
            centroids[empty] = data[far].clone();
            changed = true;
        }
        history.push(wcss);
        if !changed {
            break;
        }
        let dim = data[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    KMeansResult {
        labels,
        centroids,
        wcss_history: history,
        iterations,
    }
}

/// Clusters the days of `series` into `k` representative days.
pub fn cluster(series: &PriceSeries, k: usize, seed: u64) -> Result<RepDaySet, PriceError> {
    let days = series.num_days();
    if k == 0 || k > days {
        return Err(PriceError::Cluster(format!("k = {k} must lie in 1..={days}")));
    }
    let data: Vec<Vec<f64>> = (0..days).map(|d| series.day(d).to_vec()).collect();
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for x in &data {
        if !distinct.iter().any(|y| *y == x) {
            distinct.push(x);
            if distinct.len() >= k {
                break;
            }
        }
    }
    let k_eff = k.min(distinct.len());
    if k_eff < k {
        warn!("only {k_eff} distinct day profiles; reducing k from {k}");
    }
    let km = kmeans(&data, k_eff, seed);

    // Medoid of each cluster, then order clusters by medoid day.
    let mut medoids: Vec<(usize, usize)> = (0..k_eff)
        .map(|c| {
            let best = (0..days)
                .filter(|&d| km.labels[d] == c)
                .map(|d| (d, dist2(&data[d], &km.centroids[c])))
                .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            (best.0, c)
        })
        .collect();
    medoids.sort_unstable();
    let mut relabel = vec![0usize; k_eff];
    for (new, &(_, old)) in medoids.iter().enumerate() {
        relabel[old] = new;
    }
    let mapping: Vec<usize> = km.labels.iter().map(|&l| relabel[l]).collect();
    let medoid_indices: Vec<usize> = medoids.iter().map(|&(d, _)| d).collect();
    let rep_days = medoid_indices.iter().map(|&d| data[d].clone()).collect();
    RepDaySet::from_mapping(rep_days, mapping, medoid_indices)
}

/// Expands per-representative-day values to every real day.
pub fn reconstruct_annual<T: Clone>(per_rep_day: &[T], mapping: &[usize]) -> Vec<T> {
    mapping.iter().map(|&r| per_rep_day[r].clone()).collect()
}
