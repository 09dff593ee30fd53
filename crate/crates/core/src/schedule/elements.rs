use std::sync::Arc;

use num_dual::DualNum;
use pem_nlp::Element;

use super::cell::{temperature, CellModel};
use crate::degradation::smooth_degradation_rate;

/// Nonlinear pieces of the scheduling NLP.
#[derive(Debug, Clone)]
pub enum ScheduleElement {
    /// coef·i·(V_undeg(i, T) + δV/1000), variables (i, τ, δV[mV]).
    Electricity {
        vars: [usize; 3],
        coef: f64,
        cell: Arc<CellModel>,
    },
    /// coef·(consumption + vapor losses), variables (i, τ, n̂₂).
    Water {
        vars: [usize; 3],
        coef: f64,
        n2_scale: f64,
        cell: Arc<CellModel>,
    },
    /// Implicit Euler heat balance, variables (i, τ, τ_prev, δV, L̂, n̂₂).
    Heat {
        vars: [usize; 6],
        liq_scale: f64,
        n2_scale: f64,
        dt_seconds: f64,
        cell: Arc<CellModel>,
    },
    /// coef·smooth degradation rate, variable (i).
    Rate {
        vars: [usize; 1],
        coef: f64,
        cell: Arc<CellModel>,
    },
    /// Anode H₂ fraction margin, variables (i, τ, n̂₂).
    Safety {
        vars: [usize; 3],
        n2_scale: f64,
        y_max: f64,
        cell: Arc<CellModel>,
    },
    /// coef·a·b.
    Bilinear { vars: [usize; 2], coef: f64 },
}

impl Element for ScheduleElement {
    fn vars(&self) -> &[usize] {
        match self {
            Self::Electricity { vars, .. } | Self::Water { vars, .. } | Self::Safety { vars, .. } => vars,
            Self::Heat { vars, .. } => vars,
            Self::Rate { vars, .. } => vars,
            Self::Bilinear { vars, .. } => vars,
        }
    }

    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: &[D]) -> D {
        match self {
            Self::Electricity { coef, cell, .. } => {
                let t = temperature(x[1]);
                x[0] * (cell.voltage(x[0], t) + x[2] * 1e-3) * *coef
            }
            Self::Water {
                coef, n2_scale, cell, ..
            } => cell.water_use(x[0], temperature(x[1]), x[2] * *n2_scale) * *coef,
            Self::Heat {
                liq_scale,
                n2_scale,
                dt_seconds,
                cell,
                ..
            } => cell.heat_residual(
                x[0],
                temperature(x[1]),
                temperature(x[2]),
                x[3] * 1e-3,
                x[4] * *liq_scale,
                x[5] * *n2_scale,
                *dt_seconds,
            ),
            Self::Rate { coef, cell, .. } => smooth_degradation_rate(x[0], &cell.degradation) * *coef,
            Self::Safety {
                n2_scale,
                y_max,
                cell,
                ..
            } => cell.safety_margin(x[0], temperature(x[1]), x[2] * *n2_scale, *y_max),
            Self::Bilinear { coef, .. } => x[0] * x[1] * *coef,
        }
    }
}
