//! Direct convex minimization of `I(X^n -> Y^n) - s E d(X^n, Y^n)` over
//! causal kernels, for cross-checking the fixed-point solver.
//!
//! Works on the enumerated joint law of full sequences, so it is only meant
//! for small alphabets and horizons.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::solver::reproduction_size;
use crate::error::{Error, Result};
use crate::model::{
    DistortionSpec, FiniteMarkovSource, HistoryIndexer, RateDistortionPoint, ReproductionPolicy,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once a unit mirror step moves no kernel entry by more than this,
    /// or once unit steps stop lowering the objective beyond rounding.
    pub tol: f64,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            max_iter: 200_000,
            tol: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    /// Best restart.
    pub point: RateDistortionPoint,
    /// Per-symbol objective `R - s D` at the best restart.
    pub objective: f64,
    /// Largest minus smallest objective over restarts.
    pub spread: f64,
    pub policy: ReproductionPolicy,
    pub restart_objectives: Vec<f64>,
    /// Whether every restart met the stationarity tolerance.
    pub converged: bool,
}

/// Full-sequence joint law with the quantities needed by the mirror step.
struct Enumerated {
    nx: usize,
    ny: usize,
    n: usize,
    x_seqs: Vec<Vec<usize>>,
    y_seqs: Vec<Vec<usize>>,
    /// `d(x^n, y^n)` summed over time, indexed `[xi][yi]`.
    dist: Vec<Vec<f64>>,
    /// `P(x^n)`.
    px: Vec<f64>,
}

impl Enumerated {
    fn new(source: &FiniteMarkovSource, rho: &DistortionSpec, ny: usize) -> Self {
        let nx = source.alphabet_size();
        let n = source.horizon();
        let xi = HistoryIndexer { radix: nx };
        let yi = HistoryIndexer { radix: ny };
        let x_seqs: Vec<_> = (0..xi.count(n + 1)).map(|k| xi.decode(k, n + 1)).collect();
        let y_seqs: Vec<_> = (0..yi.count(n + 1)).map(|k| yi.decode(k, n + 1)).collect();
        let dist = x_seqs
            .iter()
            .map(|x| {
                y_seqs
                    .iter()
                    .map(|y| x.iter().zip(y).map(|(&a, &b)| rho.rho(a, b)).sum())
                    .collect()
            })
            .collect();
        let px = x_seqs.iter().map(|x| source.prefix_prob(x)).collect();
        Self {
            nx,
            ny,
            n,
            x_seqs,
            y_seqs,
            dist,
            px,
        }
    }

    fn joint(&self, policy: &ReproductionPolicy) -> Vec<Vec<f64>> {
        self.x_seqs
            .iter()
            .zip(&self.px)
            .map(|(x, &px)| {
                self.y_seqs
                    .iter()
                    .map(|y| if px > 0.0 { px * policy.sequence_prob(y, x) } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Returns `(directed information, expected distortion)` as totals.
    fn evaluate(&self, joint: &[Vec<f64>]) -> (f64, f64) {
        let py = self.y_marginal(joint);
        let mut info = 0.0;
        let mut dist = 0.0;
        for (xi, row) in joint.iter().enumerate() {
            for (yi, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    info += p * (p / (self.px[xi] * py[yi])).ln();
                    dist += p * self.dist[xi][yi];
                }
            }
        }
        (info, dist)
    }

    fn y_marginal(&self, joint: &[Vec<f64>]) -> Vec<f64> {
        let mut py = vec![0.0; self.y_seqs.len()];
        for row in joint {
            for (acc, p) in py.iter_mut().zip(row) {
                *acc += p;
            }
        }
        py
    }

    /// Conditional mean of `ln(P/(P_X P_Y)) - s d` given each kernel row and
    /// output symbol. Entries with no mass are `None`.
    fn row_scores(&self, joint: &[Vec<f64>], s: f64, policy: &ReproductionPolicy) -> Vec<Vec<Option<f64>>> {
        let py = self.y_marginal(joint);
        let xi = HistoryIndexer { radix: self.nx };
        let yi = HistoryIndexer { radix: self.ny };
        let mut weighted: Vec<Vec<f64>> = (0..=self.n).map(|i| vec![0.0; policy.kernel(i).len()]).collect();
        let mut mass = weighted.clone();
        for (a, row) in joint.iter().enumerate() {
            let x = &self.x_seqs[a];
            for (b, &p) in row.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let y = &self.y_seqs[b];
                let v = (p / (self.px[a] * py[b])).ln() - s * self.dist[a][b];
                for i in 0..=self.n {
                    let o = policy.row_offset(i, yi.index(&y[..i]), xi.index(&x[..=i])) + y[i];
                    weighted[i][o] += p * v;
                    mass[i][o] += p;
                }
            }
        }
        weighted
            .into_iter()
            .zip(mass)
            .map(|(w, m)| {
                w.into_iter()
                    .zip(m)
                    .map(|(w, m)| (m > 0.0).then(|| w / m))
                    .collect()
            })
            .collect()
    }
}

/// Exponentiated-gradient step on every row: `q <- q exp(-eta score)`,
/// renormalized. Rows with no mass keep their kernel.
fn mirror_step(policy: &ReproductionPolicy, scores: &[Vec<Option<f64>>], eta: f64) -> ReproductionPolicy {
    let mut next = policy.clone();
    let ny = policy.y_size();
    for (i, step_scores) in scores.iter().enumerate() {
        let kernel = next.kernel_mut(i);
        for (row, sc) in kernel.chunks_mut(ny).zip(step_scores.chunks(ny)) {
            let Some(base) = sc.iter().flatten().copied().reduce(f64::min) else {
                continue;
            };
            let mut z = 0.0;
            for (q, s) in row.iter_mut().zip(sc) {
                if let Some(s) = s {
                    *q *= (-eta * (s - base)).exp();
                }
                z += *q;
            }
            for q in row.iter_mut() {
                *q /= z;
            }
        }
    }
    next
}

/// Random interior starting kernel, rows drawn from a flat Dirichlet.
fn random_policy(nx: usize, ny: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<ReproductionPolicy> {
    ReproductionPolicy::from_fn(nx, ny, n, |_, _, _| {
        (0..ny).map(|_| Exp1.sample(rng)).map(|e: f64| e.max(1e-300)).collect()
    })
}

/// Consecutive full steps without progress that count as stationarity.
const STALL_STEPS: usize = 50;

struct Descent {
    policy: ReproductionPolicy,
    objective: f64,
    info: f64,
    dist: f64,
    converged: bool,
}

fn descend(
    e: &Enumerated,
    s: f64,
    mut policy: ReproductionPolicy,
    opts: &OracleOptions,
) -> Descent {
    let mut joint = e.joint(&policy);
    let (mut info, mut dist) = e.evaluate(&joint);
    let mut objective = info - s * dist;
    let mut eta: f64 = 1.0;
    let mut converged = false;
    let mut stalled = 0;
    for _ in 0..opts.max_iter {
        let scores = e.row_scores(&joint, s, &policy);
        let unit = mirror_step(&policy, &scores, 1.0);
        if unit.sup_distance(&policy) < opts.tol {
            converged = true;
            break;
        }
        let unit_joint = e.joint(&unit);
        let (ui, ud) = e.evaluate(&unit_joint);
        let unit_obj = ui - s * ud;
        // a full step that moves the objective by rounding only
        if (objective - unit_obj).abs() <= 4.0 * f64::EPSILON * objective.abs().max(1.0) {
            stalled += 1;
            if stalled >= STALL_STEPS {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
        let mut accepted = false;
        while eta > 1e-14 {
            let (cand, cand_joint, ci, cd) = if eta == 1.0 {
                (unit.clone(), unit_joint.clone(), ui, ud)
            } else {
                let c = mirror_step(&policy, &scores, eta);
                let j = e.joint(&c);
                let (ci, cd) = e.evaluate(&j);
                (c, j, ci, cd)
            };
            let cand_obj = ci - s * cd;
            if cand_obj <= objective {
                policy = cand;
                joint = cand_joint;
                info = ci;
                dist = cd;
                objective = cand_obj;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // no descent at machine precision: stationary up to rounding
            converged = true;
            break;
        }
        eta = (eta * 2.0).min(1.0);
    }
    Descent {
        policy,
        objective,
        info,
        dist,
        converged,
    }
}

/// Minimize the Lagrangian at multiplier `s` from several random starts.
pub fn oracle_minimize(
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s: f64,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    if !(s <= 0.0) || !s.is_finite() {
        return Err(Error::PositiveMultiplier(s));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("oracle needs at least one restart".into()));
    }
    let ny = reproduction_size(source, rho);
    rho.check_alphabets(source.alphabet_size(), ny)?;
    let n = source.horizon();
    // fails early on oversized instances
    ReproductionPolicy::uniform(source.alphabet_size(), ny, n)?;
    let e = Enumerated::new(source, rho, ny);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut runs = Vec::with_capacity(opts.restarts);
    for _ in 0..opts.restarts {
        let start = random_policy(e.nx, ny, n, &mut rng)?;
        runs.push(descend(&e, s, start, opts));
    }
    let steps = (n + 1) as f64;
    let restart_objectives: Vec<f64> = runs.iter().map(|r| r.objective / steps).collect();
    let lo = restart_objectives.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = restart_objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let converged = runs.iter().all(|r| r.converged);
    let best = runs
        .into_iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one restart");
    let point = RateDistortionPoint::new(s, best.info / steps, best.dist / steps, n)?;
    Ok(OracleResult {
        point,
        objective: best.objective / steps,
        spread: hi - lo,
        policy: best.policy,
        restart_objectives,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_entropy(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    #[test]
    fn uniform_bit_matches_closed_form() {
        let src = FiniteMarkovSource::iid(vec![0.5, 0.5], 0).unwrap();
        let s = -2.0;
        let r = oracle_minimize(&src, &DistortionSpec::hamming(2), s, &OracleOptions { restarts: 4, ..Default::default() }).unwrap();
        let d = 1.0 / (1.0 + (-s).exp());
        assert!((r.point.distortion - d).abs() < 1e-7);
        assert!((r.point.rate - (std::f64::consts::LN_2 - binary_entropy(d))).abs() < 1e-7);
        assert!(r.spread < 1e-9);
    }

    #[test]
    fn zero_multiplier_gives_zero_rate() {
        let src = FiniteMarkovSource::binary_symmetric(0.2, 1).unwrap();
        let r = oracle_minimize(&src, &DistortionSpec::hamming(2), 0.0, &OracleOptions { restarts: 3, ..Default::default() }).unwrap();
        assert!(r.point.rate < 1e-8);
    }

    #[test]
    fn same_seed_same_result() {
        let src = FiniteMarkovSource::binary_symmetric(0.3, 1).unwrap();
        let opts = OracleOptions { restarts: 2, seed: 9, ..Default::default() };
        let a = oracle_minimize(&src, &DistortionSpec::hamming(2), -1.0, &opts).unwrap();
        let b = oracle_minimize(&src, &DistortionSpec::hamming(2), -1.0, &opts).unwrap();
        assert_eq!(a.restart_objectives, b.restart_objectives);
    }
}
