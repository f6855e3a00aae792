use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DistortionSpec, FiniteMarkovSource, HistoryIndexer, ReproductionPolicy};

/// Joint law of `(X^i, Y^i)` for every prefix length, built step by step as
/// `P(x_i | x_{i-1}) P(y_i | y^{i-1}, x^i)`.
///
/// Level `i` is indexed by `x^i * |Y|^(i+1) + y^i` (encoded histories).
#[derive(Clone, Debug)]
pub struct JointLaw {
    x_size: usize,
    y_size: usize,
    horizon: usize,
    levels: Vec<Vec<f64>>,
}

/// Per-step reproduction marginals `P(y_i | y^{i-1})`.
///
/// Step `i` holds `|Y|^i` rows of `|Y|` entries. Rows for reproduction
/// histories of probability zero are uniform; `history_mass` records
/// `P(y^{i-1})` so callers can tell them apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalReproduction {
    y_size: usize,
    horizon: usize,
    tables: Vec<Vec<f64>>,
    history_mass: Vec<Vec<f64>>,
}

impl MarginalReproduction {
    pub fn uniform(y_size: usize, horizon: usize) -> Self {
        let yi = HistoryIndexer { radix: y_size };
        let tables = (0..=horizon)
            .map(|i| vec![1.0 / y_size as f64; yi.count(i) * y_size])
            .collect();
        let history_mass = (0..=horizon)
            .map(|i| vec![1.0 / yi.count(i) as f64; yi.count(i)])
            .collect();
        Self {
            y_size,
            horizon,
            tables,
            history_mass,
        }
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P(. | y^{i-1})` for an encoded history.
    pub fn row(&self, step: usize, y_hist: usize) -> &[f64] {
        let o = y_hist * self.y_size;
        &self.tables[step][o..o + self.y_size]
    }

    pub fn history_mass(&self, step: usize, y_hist: usize) -> f64 {
        self.history_mass[step][y_hist]
    }

    pub fn table(&self, step: usize) -> &[f64] {
        &self.tables[step]
    }
}

impl JointLaw {
    pub fn new(source: &FiniteMarkovSource, policy: &ReproductionPolicy) -> Result<Self> {
        if source.alphabet_size() != policy.x_size() || source.horizon() != policy.horizon() {
            return Err(Error::InvalidArgument(format!(
                "source (|X| = {}, n = {}) and policy (|X| = {}, n = {}) disagree",
                source.alphabet_size(),
                source.horizon(),
                policy.x_size(),
                policy.horizon()
            )));
        }
        let (nx, ny, n) = (policy.x_size(), policy.y_size(), policy.horizon());
        let mut levels: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        for step in 0..=n {
            let x_prev = nx.pow(step as u32);
            let y_prev = ny.pow(step as u32);
            let y_cur = y_prev * ny;
            let mut level = vec![0.0; x_prev * nx * y_cur];
            for xp in 0..x_prev {
                for yp in 0..y_prev {
                    let p_prev = if step == 0 {
                        1.0
                    } else {
                        levels[step - 1][xp * y_prev + yp]
                    };
                    if p_prev == 0.0 {
                        continue;
                    }
                    for x in 0..nx {
                        let px = if step == 0 {
                            source.initial_pmf()[x]
                        } else {
                            p_prev * source.transition_prob(step, xp % nx, x)
                        };
                        let xh = xp * nx + x;
                        let row = policy.row(step, yp, xh);
                        for (y, q) in row.iter().enumerate() {
                            level[xh * y_cur + yp * ny + y] = px * q;
                        }
                    }
                }
            }
            levels.push(level);
        }
        Ok(Self {
            x_size: nx,
            y_size: ny,
            horizon: n,
            levels,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P(x^i, y^i)` table for prefix length `i + 1`.
    pub fn level(&self, step: usize) -> &[f64] {
        &self.levels[step]
    }

    /// `P(x^n, y^n)`.
    pub fn full(&self) -> &[f64] {
        &self.levels[self.horizon]
    }

    pub fn total_mass(&self) -> f64 {
        self.full().iter().sum()
    }

    fn y_count(&self, step: usize) -> usize {
        self.y_size.pow(step as u32 + 1)
    }

    /// `P(x^i)` obtained by summing out `y^i`.
    pub fn source_marginal(&self, step: usize) -> Vec<f64> {
        self.levels[step]
            .chunks(self.y_count(step))
            .map(|c| c.iter().sum())
            .collect()
    }

    /// `P(y^i)` obtained by summing out `x^i`.
    pub fn reproduction_marginal(&self, step: usize) -> Vec<f64> {
        let yc = self.y_count(step);
        let mut out = vec![0.0; yc];
        for chunk in self.levels[step].chunks(yc) {
            for (o, p) in out.iter_mut().zip(chunk) {
                *o += p;
            }
        }
        out
    }

    /// `P(x^i, y^{i-1})`, the probability of reaching a kernel row.
    #[inline]
    pub fn row_mass(&self, step: usize, y_hist: usize, x_hist: usize) -> f64 {
        let o = x_hist * self.y_count(step) + y_hist * self.y_size;
        self.levels[step][o..o + self.y_size].iter().sum()
    }

    pub fn marginals(&self) -> MarginalReproduction {
        let ny = self.y_size;
        let mut tables = Vec::with_capacity(self.horizon + 1);
        let mut history_mass = Vec::with_capacity(self.horizon + 1);
        for step in 0..=self.horizon {
            let joint_y = self.reproduction_marginal(step);
            let mut table = Vec::with_capacity(joint_y.len());
            let mut mass = Vec::with_capacity(joint_y.len() / ny);
            for row in joint_y.chunks(ny) {
                let total: f64 = row.iter().sum();
                mass.push(total);
                if total > 0.0 {
                    table.extend(row.iter().map(|p| p / total));
                } else {
                    table.extend(std::iter::repeat(1.0 / ny as f64).take(ny));
                }
            }
            tables.push(table);
            history_mass.push(mass);
        }
        MarginalReproduction {
            y_size: ny,
            horizon: self.horizon,
            tables,
            history_mass,
        }
    }

    /// `E sum_i rho(X_i, Y_i)` (not divided by `n + 1`).
    pub fn expected_distortion(&self, rho: &DistortionSpec) -> f64 {
        let mut total = 0.0;
        for step in 0..=self.horizon {
            let yc = self.y_count(step);
            for (xh, chunk) in self.levels[step].chunks(yc).enumerate() {
                let x = xh % self.x_size;
                for (yh, p) in chunk.iter().enumerate() {
                    if *p > 0.0 {
                        total += p * rho.rho(x, yh % self.y_size);
                    }
                }
            }
        }
        total
    }
}

/// Directed information computed two ways (nats, whole horizon).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectedInformation {
    /// `sum_i I(X^i; Y_i | Y^{i-1})`.
    pub conditional_sum: f64,
    /// `D(P_{X^n, Y^n} || P_{X^n} x P_{Y^n})`.
    pub kl_form: f64,
}

impl DirectedInformation {
    pub fn value(&self) -> f64 {
        self.conditional_sum
    }

    pub fn discrepancy(&self) -> f64 {
        (self.conditional_sum - self.kl_form).abs()
    }
}

impl JointLaw {
    /// `sum_i I(X^i; Y_i | Y^{i-1})` from the prefix tables.
    pub fn conditional_mutual_information_sum(&self) -> f64 {
        let ny = self.y_size;
        let mut total = 0.0;
        for step in 0..=self.horizon {
            let yc = self.y_count(step);
            let p_y = self.reproduction_marginal(step);
            let p_y_prev: Vec<f64> = p_y.chunks(ny).map(|c| c.iter().sum()).collect();
            for chunk in self.levels[step].chunks(yc) {
                for yp in 0..yc / ny {
                    let row = &chunk[yp * ny..(yp + 1) * ny];
                    let p_xy_prev: f64 = row.iter().sum();
                    if p_xy_prev == 0.0 {
                        continue;
                    }
                    for (y, &p) in row.iter().enumerate() {
                        if p > 0.0 {
                            let yh = yp * ny + y;
                            total += p * (p * p_y_prev[yp] / (p_xy_prev * p_y[yh])).ln();
                        }
                    }
                }
            }
        }
        total
    }

    /// Kullback-Leibler form on the full sequences.
    pub fn kl_directed_information(&self) -> f64 {
        let yc = self.y_count(self.horizon);
        let p_x = self.source_marginal(self.horizon);
        let p_y = self.reproduction_marginal(self.horizon);
        let mut total = 0.0;
        for (xh, chunk) in self.full().chunks(yc).enumerate() {
            for (yh, &p) in chunk.iter().enumerate() {
                if p > 0.0 {
                    total += p * (p / (p_x[xh] * p_y[yh])).ln();
                }
            }
        }
        total
    }
}

/// Directed information `I(X^n -> Y^n)` of a source and causal policy, by
/// exact enumeration of the joint law.
pub fn directed_information(
    source: &FiniteMarkovSource,
    policy: &ReproductionPolicy,
) -> Result<DirectedInformation> {
    let joint = JointLaw::new(source, policy)?;
    Ok(DirectedInformation {
        conditional_sum: joint.conditional_mutual_information_sum(),
        kl_form: joint.kl_directed_information(),
    })
}
