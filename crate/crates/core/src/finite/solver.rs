use serde::{Deserialize, Serialize};

use super::joint::{JointLaw, MarginalReproduction};
use crate::error::{Error, Result};
use crate::model::{
    DistortionSpec, FiniteMarkovSource, HistoryIndexer, RateDistortionPoint, ReproductionPolicy,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the sup-norm kernel change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Step toward the re-tilted kernel, in `(0, 1]`.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            damping: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// Sup-norm distance between the returned policy and the tilt of its own
    /// marginals, over rows reached with positive probability.
    pub final_change: f64,
    /// Nats per symbol, from directed information.
    pub rate: f64,
    /// Per symbol.
    pub distortion: f64,
    pub s: f64,
    pub converged: bool,
    /// Nats per symbol from `s E d - sum_i E ln Z_i` (equals `rate` at a fixed point).
    pub parametric_rate: f64,
}

#[derive(Clone, Debug)]
pub struct FixedPointSolution {
    pub policy: ReproductionPolicy,
    /// Marginals induced by `policy`.
    pub marginals: MarginalReproduction,
    pub point: RateDistortionPoint,
    pub report: SolverReport,
}

/// Reproduction alphabet size for a source and distortion: the table width,
/// or `|X|` for squared error.
pub fn reproduction_size(source: &FiniteMarkovSource, rho: &DistortionSpec) -> usize {
    rho.reproduction_size().unwrap_or(source.alphabet_size())
}

pub(super) fn check_instance(source: &FiniteMarkovSource, rho: &DistortionSpec, s: f64) -> Result<usize> {
    if !(s <= 0.0) || !s.is_finite() {
        return Err(Error::PositiveMultiplier(s));
    }
    let ny = reproduction_size(source, rho);
    rho.check_alphabets(source.alphabet_size(), ny)?;
    crate::model::ReproductionPolicy::uniform(source.alphabet_size(), ny, source.horizon())
        .map(|_| ny)
}

/// Tilted weights `nu(y) exp(s rho(x, y))`, shifted by the smallest
/// distortion on the support for stability. Returns the normalized row and
/// `ln Z` with `Z = sum_y nu(y) exp(s rho(x, y))`.
fn tilt_row(nu: &[f64], rho: &DistortionSpec, x: usize, s: f64, out: &mut [f64]) -> Option<f64> {
    let shift = nu
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(y, _)| rho.rho(x, y))
        .fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return None;
    }
    let mut z = 0.0;
    for (y, (o, p)) in out.iter_mut().zip(nu).enumerate() {
        *o = if *p > 0.0 {
            p * (s * (rho.rho(x, y) - shift)).exp()
        } else {
            0.0
        };
        z += *o;
    }
    if !(z > 0.0) || !z.is_finite() {
        return None;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    Some(s * shift + z.ln())
}

/// Exponentially tilt the reproduction marginals:
/// `P(y_i | y^{i-1}, x^i) ∝ exp(s rho(x_i, y_i)) P(y_i | y^{i-1})`.
///
/// Rows depend on the source history only through its last symbol.
pub fn tilt_kernel(
    marginals: &MarginalReproduction,
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s: f64,
) -> Result<ReproductionPolicy> {
    let ny = check_instance(source, rho, s)?;
    if marginals.y_size() != ny || marginals.horizon() != source.horizon() {
        return Err(Error::InvalidArgument(format!(
            "marginals (|Y| = {}, n = {}) do not fit the instance (|Y| = {ny}, n = {})",
            marginals.y_size(),
            marginals.horizon(),
            source.horizon()
        )));
    }
    let nx = source.alphabet_size();
    let n = source.horizon();
    let mut policy = ReproductionPolicy::uniform(nx, ny, n)?;
    let mut row = vec![0.0; ny];
    for step in 0..=n {
        let n_yh = ny.pow(step as u32);
        let n_xh = nx.pow(step as u32 + 1);
        let kernel = policy.kernel_mut(step);
        for yh in 0..n_yh {
            let nu = marginals.row(step, yh);
            for x in 0..nx {
                if tilt_row(nu, rho, x, s, &mut row).is_none() {
                    return Err(Error::DegenerateSupport {
                        step,
                        history: HistoryIndexer { radix: ny }.decode(yh, step),
                    });
                }
                // every source history ending in x shares this row
                for xh in (x..n_xh).step_by(nx) {
                    let o = (yh * n_xh + xh) * ny;
                    kernel[o..o + ny].copy_from_slice(&row);
                }
            }
        }
    }
    Ok(policy)
}

/// Largest kernel difference over rows that are reached with positive
/// probability under `joint`.
pub(super) fn reached_sup_distance(a: &ReproductionPolicy, b: &ReproductionPolicy, joint: &JointLaw) -> f64 {
    let ny = a.y_size();
    let mut worst: f64 = 0.0;
    for step in 0..=a.horizon() {
        let n_yh = ny.pow(step as u32);
        let n_xh = a.x_size().pow(step as u32 + 1);
        for yh in 0..n_yh {
            for xh in 0..n_xh {
                if joint.row_mass(step, yh, xh) > 0.0 {
                    for (p, q) in a.row(step, yh, xh).iter().zip(b.row(step, yh, xh)) {
                        worst = worst.max((p - q).abs());
                    }
                }
            }
        }
    }
    worst
}

/// `sum_i E ln Z_i(X_i, Y^{i-1})` for the tilt of `marginals`, weighted by
/// the row probabilities of `joint`.
fn expected_log_normalizer(
    joint: &JointLaw,
    marginals: &MarginalReproduction,
    rho: &DistortionSpec,
    s: f64,
    nx: usize,
) -> f64 {
    let ny = marginals.y_size();
    let mut scratch = vec![0.0; ny];
    let mut total = 0.0;
    for step in 0..=joint.horizon() {
        let n_yh = ny.pow(step as u32);
        let n_xh = nx.pow(step as u32 + 1);
        for yh in 0..n_yh {
            for xh in 0..n_xh {
                let mass = joint.row_mass(step, yh, xh);
                if mass > 0.0 {
                    let log_z = tilt_row(marginals.row(step, yh), rho, xh % nx, s, &mut scratch)
                        .unwrap_or(f64::NEG_INFINITY);
                    total += mass * log_z;
                }
            }
        }
    }
    total
}

pub(super) fn blend(target: &mut ReproductionPolicy, toward: &ReproductionPolicy, theta: f64) {
    for step in 0..=target.horizon() {
        let src = toward.kernel(step);
        for (t, v) in target.kernel_mut(step).iter_mut().zip(src) {
            *t = theta * v + (1.0 - theta) * *t;
        }
    }
}

/// Solve the tilted-kernel fixed point at multiplier `s`, starting from
/// uniform marginals.
pub fn fixed_point_solve(
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s: f64,
    opts: &SolverOptions,
) -> Result<FixedPointSolution> {
    let ny = check_instance(source, rho, s)?;
    fixed_point_solve_from(
        source,
        rho,
        s,
        MarginalReproduction::uniform(ny, source.horizon()),
        opts,
    )
}

/// [`fixed_point_solve`] from given initial marginals (warm start).
pub fn fixed_point_solve_from(
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s: f64,
    initial: MarginalReproduction,
    opts: &SolverOptions,
) -> Result<FixedPointSolution> {
    check_instance(source, rho, s)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let mut policy = tilt_kernel(&initial, source, rho, s)?;
    let mut iterations = 0;
    let (joint, marginals, change, converged) = loop {
        iterations += 1;
        let joint = JointLaw::new(source, &policy)?;
        let marginals = joint.marginals();
        let next = tilt_kernel(&marginals, source, rho, s)?;
        let change = reached_sup_distance(&policy, &next, &joint);
        if change < opts.tol || iterations >= opts.max_iter {
            break (joint, marginals, change, change < opts.tol);
        }
        if opts.damping < 1.0 {
            blend(&mut policy, &next, opts.damping);
        } else {
            policy = next;
        }
    };

    let steps = (source.horizon() + 1) as f64;
    let di = joint.conditional_mutual_information_sum();
    let total_distortion = joint.expected_distortion(rho);
    let log_z = expected_log_normalizer(&joint, &marginals, rho, s, source.alphabet_size());
    let parametric = s * total_distortion - log_z;
    let point = RateDistortionPoint::new(s, di / steps, total_distortion / steps, source.horizon())?;
    let report = SolverReport {
        iterations,
        final_change: change,
        rate: point.rate,
        distortion: point.distortion,
        s,
        converged,
        parametric_rate: parametric / steps,
    };
    Ok(FixedPointSolution {
        policy,
        marginals,
        point,
        report,
    })
}

/// Sup-norm distance between `policy` and the tilt of its own marginals,
/// over rows reached with positive probability.
pub fn self_consistency_residual(
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s: f64,
    policy: &ReproductionPolicy,
) -> Result<f64> {
    let joint = JointLaw::new(source, policy)?;
    let retilted = tilt_kernel(&joint.marginals(), source, rho, s)?;
    Ok(reached_sup_distance(policy, &retilted, &joint))
}

/// Slack allowed when asserting curve monotonicity.
const MONOTONE_SLACK: f64 = 1e-9;

/// Which kernel update a solve alternates with the marginal update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// Plain exponential tilt of the marginals ([`tilt_kernel`]).
    #[default]
    Tilt,
    /// Tilt corrected by the cost still to come ([`super::causal_kernel`]).
    Causal,
}

/// Trace `R(D)` over a multiplier grid sorted descending (`0` toward `-inf`),
/// warm-starting each solve from the previous marginals.
pub fn rd_curve(
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s_grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FixedPointSolution>> {
    rd_curve_with(source, rho, s_grid, opts, KernelForm::Tilt)
}

/// [`rd_curve`] with a choice of kernel update.
pub fn rd_curve_with(
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s_grid: &[f64],
    opts: &SolverOptions,
    form: KernelForm,
) -> Result<Vec<FixedPointSolution>> {
    if s_grid.is_empty() || s_grid.windows(2).any(|w| !(w[1] <= w[0])) {
        return Err(Error::UnsortedGrid);
    }
    let ny = check_instance(source, rho, s_grid[0])?;
    let mut warm = MarginalReproduction::uniform(ny, source.horizon());
    let mut out: Vec<FixedPointSolution> = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let sol = match form {
            KernelForm::Tilt => fixed_point_solve_from(source, rho, s, warm, opts)?,
            KernelForm::Causal => super::causal_solve_from(source, rho, s, warm, opts)?,
        };
        if let Some(prev) = out.last() {
            let (a, b) = (&prev.point, &sol.point);
            if b.distortion > a.distortion + MONOTONE_SLACK {
                return Err(Error::NonMonotoneCurve {
                    s_prev: a.s,
                    s_next: b.s,
                    detail: format!("distortion rose from {} to {}", a.distortion, b.distortion),
                });
            }
            if b.rate < a.rate - MONOTONE_SLACK {
                return Err(Error::NonMonotoneCurve {
                    s_prev: a.s,
                    s_next: b.s,
                    detail: format!("rate fell from {} to {}", a.rate, b.rate),
                });
            }
        }
        warm = sol.marginals.clone();
        out.push(sol);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn uniform_binary(n: usize) -> FiniteMarkovSource {
        FiniteMarkovSource::iid(vec![0.5, 0.5], n).unwrap()
    }

    #[test]
    fn zero_multiplier_returns_marginals_unchanged() {
        let src = FiniteMarkovSource::binary_symmetric(0.3, 2).unwrap();
        let marg = MarginalReproduction::uniform(2, 2);
        let p = tilt_kernel(&marg, &src, &DistortionSpec::hamming(2), 0.0).unwrap();
        assert!(p.kernels().iter().flatten().all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn tilt_at_minus_one_by_hand() {
        let src = uniform_binary(0);
        let p = tilt_kernel(&MarginalReproduction::uniform(2, 0), &src, &DistortionSpec::hamming(2), -1.0).unwrap();
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((p.prob(0, &[], &[0], 0) - expect).abs() < 1e-15);
        assert!((p.prob(0, &[], &[1], 1) - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn steep_tilt_concentrates_on_matching_symbol() {
        let src = uniform_binary(1);
        let p = tilt_kernel(&MarginalReproduction::uniform(2, 1), &src, &DistortionSpec::hamming(2), -50.0).unwrap();
        assert!((p.prob(1, &[0], &[1, 0], 0) - 1.0).abs() < 1e-10);
        assert!((p.prob(0, &[], &[1], 1) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn extreme_tilt_does_not_underflow() {
        let src = uniform_binary(0);
        let p = tilt_kernel(&MarginalReproduction::uniform(2, 0), &src, &DistortionSpec::hamming(2), -1e4).unwrap();
        assert_eq!(p.prob(0, &[], &[1], 1), 1.0);
    }

    #[test]
    fn positive_multiplier_rejected() {
        let src = uniform_binary(0);
        let err = tilt_kernel(&MarginalReproduction::uniform(2, 0), &src, &DistortionSpec::hamming(2), 0.1);
        assert!(matches!(err, Err(Error::PositiveMultiplier(_))));
    }

    #[test]
    fn zero_multiplier_converges_immediately_with_zero_rate() {
        let src = FiniteMarkovSource::binary_symmetric(0.3, 2).unwrap();
        let sol = fixed_point_solve(&src, &DistortionSpec::hamming(2), 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.report.iterations, 1);
        assert!(sol.report.converged);
        assert!(sol.point.rate.abs() < 1e-15);
        assert!((sol.point.distortion - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parametric_rate_matches_directed_information() {
        let src = FiniteMarkovSource::binary_symmetric(0.2, 2).unwrap();
        let sol = fixed_point_solve(&src, &DistortionSpec::hamming(2), -1.5, &SolverOptions::default()).unwrap();
        assert!(sol.report.converged);
        assert!((sol.report.parametric_rate - sol.report.rate).abs() < 1e-9);
    }

    #[test]
    fn damping_reaches_the_same_fixed_point() {
        let src = FiniteMarkovSource::binary_symmetric(0.3, 1).unwrap();
        let rho = DistortionSpec::hamming(2);
        let plain = fixed_point_solve(&src, &rho, -2.0, &SolverOptions::default()).unwrap();
        let damped = fixed_point_solve(&src, &rho, -2.0, &SolverOptions { damping: 0.5, ..Default::default() }).unwrap();
        assert!(damped.report.converged);
        assert!((plain.point.rate - damped.point.rate).abs() < 1e-8);
        assert!(plain.policy.sup_distance(&damped.policy) < 1e-8);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let src = FiniteMarkovSource::binary_symmetric(0.3, 2).unwrap();
        let opts = SolverOptions { max_iter: 1, ..Default::default() };
        let sol = fixed_point_solve(&src, &DistortionSpec::hamming(2), -2.0, &opts).unwrap();
        assert!(!sol.report.converged);
        assert_eq!(sol.report.iterations, 1);
    }

    #[test]
    fn unsorted_grid_rejected() {
        let src = uniform_binary(0);
        let err = rd_curve(&src, &DistortionSpec::hamming(2), &[-1.0, 0.0], &SolverOptions::default());
        assert!(matches!(err, Err(Error::UnsortedGrid)));
        assert!(matches!(
            rd_curve(&src, &DistortionSpec::hamming(2), &[], &SolverOptions::default()),
            Err(Error::UnsortedGrid)
        ));
    }

    #[test]
    fn single_zero_point_curve() {
        let src = uniform_binary(0);
        let curve = rd_curve(&src, &DistortionSpec::hamming(2), &[0.0], &SolverOptions::default()).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].point.rate, 0.0);
        assert!((curve[0].point.distortion - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_source_symbols_do_not_block_convergence() {
        // symbol 2 never occurs
        let src = FiniteMarkovSource::iid(vec![0.6, 0.4, 0.0], 1).unwrap();
        let sol = fixed_point_solve(&src, &DistortionSpec::hamming(3), -3.0, &SolverOptions::default()).unwrap();
        assert!(sol.report.converged);
        assert!(sol.point.rate > 0.0 && sol.point.rate < LN_2);
    }
}
