use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::PROB_TOL;

/// Transition law `P(x_i | x_{i-1})` of a first-order Markov source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Transition {
    /// One row-stochastic table used at every step.
    Stationary(Vec<Vec<f64>>),
    /// One table per step `i = 1..=n` (entry `i - 1`).
    PerStep(Vec<Vec<Vec<f64>>>),
}

/// Finite-alphabet first-order Markov (or i.i.d.) source over steps `0..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSource", into = "RawSource")]
pub struct FiniteMarkovSource {
    alphabet_size: usize,
    horizon: usize,
    initial_pmf: Vec<f64>,
    transition: Transition,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    initial_pmf: Vec<f64>,
    transition: Transition,
    horizon: usize,
    // accepted so a single file can carry the source and its distortion
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distortion: Option<serde_json::Value>,
}

impl TryFrom<RawSource> for FiniteMarkovSource {
    type Error = Error;
    fn try_from(raw: RawSource) -> Result<Self> {
        Self::new(raw.initial_pmf, raw.transition, raw.horizon)
    }
}

impl From<FiniteMarkovSource> for RawSource {
    fn from(s: FiniteMarkovSource) -> Self {
        RawSource {
            initial_pmf: s.initial_pmf,
            transition: s.transition,
            horizon: s.horizon,
            distortion: None,
        }
    }
}

fn check_pmf(row: &[f64], what: impl Fn() -> String) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Probability {
            what: what(),
            detail: "entries must be finite and nonnegative".into(),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Probability {
            what: what(),
            detail: format!("sums to {sum}, expected 1"),
        });
    }
    Ok(())
}

fn check_table(table: &[Vec<f64>], k: usize, label: &str) -> Result<()> {
    if table.len() != k {
        return Err(Error::Probability {
            what: label.to_string(),
            detail: format!("expected {k} rows, got {}", table.len()),
        });
    }
    for (r, row) in table.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Probability {
                what: format!("{label} row {r}"),
                detail: format!("expected {k} entries, got {}", row.len()),
            });
        }
        check_pmf(row, || format!("{label} row {r}"))?;
    }
    Ok(())
}

impl FiniteMarkovSource {
    pub fn new(initial_pmf: Vec<f64>, transition: Transition, horizon: usize) -> Result<Self> {
        let k = initial_pmf.len();
        if k == 0 {
            return Err(Error::Probability {
                what: "initial_pmf".into(),
                detail: "alphabet must be nonempty".into(),
            });
        }
        check_pmf(&initial_pmf, || "initial_pmf".into())?;
        match &transition {
            Transition::Stationary(t) => check_table(t, k, "transition")?,
            Transition::PerStep(ts) => {
                if ts.len() != horizon {
                    return Err(Error::Probability {
                        what: "transition".into(),
                        detail: format!("expected {horizon} per-step tables, got {}", ts.len()),
                    });
                }
                for (i, t) in ts.iter().enumerate() {
                    check_table(t, k, &format!("transition step {}", i + 1))?;
                }
            }
        }
        Ok(Self {
            alphabet_size: k,
            horizon,
            initial_pmf,
            transition,
        })
    }

    /// i.i.d. source: every step draws from `pmf`.
    pub fn iid(pmf: Vec<f64>, horizon: usize) -> Result<Self> {
        let table = vec![pmf.clone(); pmf.len()];
        Self::new(pmf, Transition::Stationary(table), horizon)
    }

    /// Binary symmetric Markov chain with uniform start and flip probability `flip`.
    pub fn binary_symmetric(flip: f64, horizon: usize) -> Result<Self> {
        Self::new(
            vec![0.5, 0.5],
            Transition::Stationary(vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]]),
            horizon,
        )
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_pmf(&self) -> &[f64] {
        &self.initial_pmf
    }

    pub fn transition(&self) -> &Transition {
        &self.transition
    }

    /// Same source law truncated or extended to another horizon; per-step
    /// tables cannot be extended.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        let transition = match &self.transition {
            Transition::Stationary(t) => Transition::Stationary(t.clone()),
            Transition::PerStep(ts) if ts.len() >= horizon => {
                Transition::PerStep(ts[..horizon].to_vec())
            }
            Transition::PerStep(_) => {
                return Err(Error::InvalidArgument(
                    "cannot extend a per-step source beyond its horizon".into(),
                ))
            }
        };
        Self::new(self.initial_pmf.clone(), transition, horizon)
    }

    /// `P(X_i = cur | X_{i-1} = prev)` for `i >= 1`.
    pub fn transition_prob(&self, step: usize, prev: usize, cur: usize) -> f64 {
        debug_assert!(step >= 1 && step <= self.horizon);
        match &self.transition {
            Transition::Stationary(t) => t[prev][cur],
            Transition::PerStep(ts) => ts[step - 1][prev][cur],
        }
    }

    /// Probability of a source prefix `x^i` (any length up to `n + 1`).
    pub fn prefix_prob(&self, xs: &[usize]) -> f64 {
        let Some((&first, rest)) = xs.split_first() else {
            return 1.0;
        };
        let mut p = self.initial_pmf[first];
        let mut prev = first;
        for (j, &x) in rest.iter().enumerate() {
            p *= self.transition_prob(j + 1, prev, x);
            prev = x;
        }
        p
    }
}
