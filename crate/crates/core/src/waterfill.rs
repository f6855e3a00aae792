//! Reverse water-filling of a distortion budget across variance components.
//!
//! Given component variances `lambda_i` and a total distortion `D`, the
//! water level `xi` solves `sum_i min(xi, lambda_i) = D`; component `i`
//! receives `delta_i = min(xi, lambda_i)` and the rate is
//! `(1/2) sum_i ln(lambda_i / delta_i)` nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BISECTION_ITERS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterfillAllocation {
    eigenvalues: Vec<f64>,
    water_level: f64,
    deltas: Vec<f64>,
    total_distortion: f64,
}

impl WaterfillAllocation {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn water_level(&self) -> f64 {
        self.water_level
    }
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }
    pub fn total_distortion(&self) -> f64 {
        self.total_distortion
    }

    /// Components that receive less distortion than their variance.
    pub fn is_active(&self, i: usize) -> bool {
        self.deltas[i] < self.eigenvalues[i]
    }

    pub fn rate(&self) -> f64 {
        rate_of(self)
    }

    /// Allocation that sends nothing: `delta = lambda`.
    pub(crate) fn saturated(eigenvalues: &[f64]) -> Self {
        WaterfillAllocation {
            eigenvalues: eigenvalues.to_vec(),
            water_level: eigenvalues.iter().copied().fold(0.0, f64::max),
            deltas: eigenvalues.to_vec(),
            total_distortion: eigenvalues.iter().sum(),
        }
    }
}

fn filled(eigenvalues: &[f64], level: f64) -> f64 {
    eigenvalues.iter().map(|&l| l.min(level)).sum()
}

/// Split `distortion` across components with variances `eigenvalues`.
pub fn allocate(eigenvalues: &[f64], distortion: f64) -> Result<WaterfillAllocation> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidArgument("no eigenvalues".into()));
    }
    for (index, &value) in eigenvalues.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidEigenvalue { index, value });
        }
    }
    let total: f64 = eigenvalues.iter().sum();
    if !(distortion > 0.0) || distortion > total * (1.0 + 1e-12) {
        return Err(Error::InfeasibleDistortion {
            distortion,
            max: total,
        });
    }
    if distortion >= total * (1.0 - 1e-12) {
        return Ok(WaterfillAllocation::saturated(eigenvalues));
    }

    let mut lo = 0.0;
    let mut hi = eigenvalues.iter().copied().fold(0.0, f64::max);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if filled(eigenvalues, mid) < distortion {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    // The bracket pins down which components saturate; solve for the level
    // on that set exactly so the deltas sum to the budget to rounding.
    let level = 0.5 * (lo + hi);
    let (saturated, active) = eigenvalues
        .iter()
        .fold((0.0, 0usize), |(sum, count), &l| {
            if l < level {
                (sum + l, count)
            } else {
                (sum, count + 1)
            }
        });
    let water_level = if active > 0 {
        ((distortion - saturated) / active as f64).min(hi)
    } else {
        level
    };
    let deltas = eigenvalues.iter().map(|&l| l.min(water_level)).collect();
    Ok(WaterfillAllocation {
        eigenvalues: eigenvalues.to_vec(),
        water_level,
        deltas,
        total_distortion: distortion,
    })
}

/// `(1/2) sum_i ln(lambda_i / delta_i)` in nats.
pub fn rate_of(alloc: &WaterfillAllocation) -> f64 {
    0.5 * alloc
        .eigenvalues
        .iter()
        .zip(&alloc.deltas)
        .map(|(l, d)| (l / d).ln())
        .sum::<f64>()
}
