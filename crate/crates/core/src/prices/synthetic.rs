//! Synthetic price years used when market data is unavailable.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PriceError, PriceSeries, DAYS_PER_YEAR, HOURS_PER_DAY, HOURS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricePattern {
    Flat,
    Diurnal,
    Spiky,
    DurationMatched,
}

impl FromStr for PricePattern {
    type Err = PriceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "flat" => Ok(Self::Flat),
            "diurnal" | "two_level_diurnal" => Ok(Self::Diurnal),
            "spiky" | "spiky_volatile" => Ok(Self::Spiky),
            "duration_matched" | "duration_curve_matched" => Ok(Self::DurationMatched),
            _ => Err(PriceError::UnknownPattern(s.to_string())),
        }
    }
}

/// Parameters shared by all generators. `spread` is the peak/off-peak gap for
/// the diurnal pattern and the target standard deviation otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSpec {
    pub pattern: PricePattern,
    pub mean: f64,
    pub spread: f64,
    pub seed: u64,
}

pub fn generate(spec: &PriceSpec) -> PriceSeries {
    match spec.pattern {
        PricePattern::Flat => flat(spec.mean),
        PricePattern::Diurnal => diurnal(spec.mean, spec.spread),
        PricePattern::Spiky => spiky(spec.mean, spec.spread, spec.seed),
        PricePattern::DurationMatched => duration_matched(spec.mean, spec.spread, spec.seed),
    }
}

pub fn flat(value: f64) -> PriceSeries {
    PriceSeries {
        values: vec![value; HOURS_PER_YEAR],
        label: format!("flat_{value}"),
    }
}

/// Two price levels per day, peak 08:00-20:00. The gap varies seasonally and
/// the annual mean is exact.
pub fn diurnal(mean: f64, spread: f64) -> PriceSeries {
    let mut values = Vec::with_capacity(HOURS_PER_YEAR);
    for d in 0..DAYS_PER_YEAR {
        let season = 1.0 + 0.5 * (2.0 * PI * d as f64 / DAYS_PER_YEAR as f64).sin();
        let half = 0.5 * spread * season;
        for h in 0..HOURS_PER_DAY {
            let peak = (8..20).contains(&h);
            values.push(if peak { mean + half } else { mean - half });
        }
    }
    PriceSeries {
        values,
        label: "diurnal".into(),
    }
}

fn rescale(mut values: Vec<f64>, mean: f64, std: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let s = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if s > 0.0 { std / s } else { 0.0 };
    for v in &mut values {
        *v = mean + (*v - m) * scale;
    }
    values
}

/// Diurnal base with heavy-tailed price spikes, rescaled to `mean` and `std`.
pub fn spiky(mean: f64, std: f64, seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(HOURS_PER_YEAR);
    for _d in 0..DAYS_PER_YEAR {
        for h in 0..HOURS_PER_DAY {
            let base = 1.0 + 0.4 * (2.0 * PI * (h as f64 - 15.0) / 24.0).cos();
            let mut v = base + 0.15 * noise.sample(&mut rng);
            if rng.gen::<f64>() < 0.02 {
                v += 3.0 + 10.0 * rng.gen::<f64>().powi(3);
            }
            values.push(v);
        }
    }
    PriceSeries {
        values: rescale(values, mean, std),
        label: "spiky".into(),
    }
}

/// Market-like year: solar dip, evening peak, seasonal swing, autocorrelated
/// noise, scarcity spikes and occasional negative hours. The result is
/// affinely rescaled to the requested mean and standard deviation.
pub fn duration_matched(mean: f64, std: f64, seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(HOURS_PER_YEAR);
    let mut ar = 0.0;
    let mut day_level = 0.0;
    for d in 0..DAYS_PER_YEAR {
        let season = 0.35 * (2.0 * PI * (d as f64 - 100.0) / DAYS_PER_YEAR as f64).sin();
        day_level = 0.7 * day_level + 0.25 * noise.sample(&mut rng);
        let windy = rng.gen::<f64>() < 0.08;
        let scarce = rng.gen::<f64>() < 0.05;
        for h in 0..HOURS_PER_DAY {
            let hf = h as f64;
            let evening = 0.55 * (-(hf - 19.0).powi(2) / 6.0).exp();
            let morning = 0.2 * (-(hf - 7.5).powi(2) / 3.0).exp();
            let solar = -0.35 * (-(hf - 13.0).powi(2) / 8.0).exp();
            ar = 0.8 * ar + 0.12 * noise.sample(&mut rng);
            let mut v = 1.0 + season + day_level + evening + morning + solar + ar;
            if windy && !(16..22).contains(&h) {
                v -= 1.2;
            }
            if scarce && (17..22).contains(&h) {
                v += 2.0 + 6.0 * rng.gen::<f64>().powi(2);
            }
            values.push(v);
        }
    }
    PriceSeries {
        values: rescale(values, mean, std),
        label: "duration_matched".into(),
    }
}
