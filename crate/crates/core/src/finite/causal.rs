//! Causal kernels by backward recursion.
//!
//! For a Markov source the Lagrangian `I(X^n -> Y^n) - s E d` over causal
//! kernels is a finite-horizon control problem: with the reproduction
//! marginals held fixed, the best kernel at step `i` is
//!
//! `P(y | y^{i-1}, x^i) ∝ nu_i(y | y^{i-1}) exp(s rho(x_i, y) - G_{i+1}(x_i, y^{i-1} y))`
//!
//! where `G_{i+1}(x, y^i) = -E[ln Z_{i+1}(X_{i+1}, y^i) | X_i = x]` is the
//! cost still to come. Alternating this with the marginal update minimizes
//! the Lagrangian. For i.i.d. sources `G` does not depend on `x`, so the
//! kernel reduces to the plain tilt of [`super::tilt_kernel`].

use super::joint::{JointLaw, MarginalReproduction};
use super::solver::{blend, check_instance, reached_sup_distance, FixedPointSolution, SolverOptions, SolverReport};
use crate::error::{Error, Result};
use crate::model::{DistortionSpec, FiniteMarkovSource, HistoryIndexer, RateDistortionPoint, ReproductionPolicy};

/// Best causal kernel against fixed marginals, and `ln Z_0(x)` for each
/// initial symbol.
pub fn causal_kernel(
    marginals: &MarginalReproduction,
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s: f64,
) -> Result<(ReproductionPolicy, Vec<f64>)> {
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
    // cost to come, indexed [y^i * nx + x_i] for the step after the current one
    let mut cost_next: Vec<f64> = vec![0.0; ny.pow(n as u32 + 1) * nx];
    let mut log_w = vec![0.0; ny];
    let mut row = vec![0.0; ny];
    let mut log_z0 = Vec::new();
    for step in (0..=n).rev() {
        let n_yh = ny.pow(step as u32);
        let n_xh = nx.pow(step as u32 + 1);
        // ln Z_step(x, y^{step-1})
        let mut log_z = vec![0.0; n_yh * nx];
        let kernel = policy.kernel_mut(step);
        for yh in 0..n_yh {
            let nu = marginals.row(step, yh);
            for x in 0..nx {
                let mut top = f64::NEG_INFINITY;
                for y in 0..ny {
                    log_w[y] = if nu[y] > 0.0 {
                        nu[y].ln() + s * rho.rho(x, y) - cost_next[(yh * ny + y) * nx + x]
                    } else {
                        f64::NEG_INFINITY
                    };
                    top = top.max(log_w[y]);
                }
                if !top.is_finite() {
                    return Err(Error::DegenerateSupport {
                        step,
                        history: HistoryIndexer { radix: ny }.decode(yh, step),
                    });
                }
                let mut z = 0.0;
                for (r, lw) in row.iter_mut().zip(&log_w) {
                    *r = (lw - top).exp();
                    z += *r;
                }
                for r in row.iter_mut() {
                    *r /= z;
                }
                log_z[yh * nx + x] = top + z.ln();
                for xh in (x..n_xh).step_by(nx) {
                    let o = (yh * n_xh + xh) * ny;
                    kernel[o..o + ny].copy_from_slice(&row);
                }
            }
        }
        if step == 0 {
            log_z0 = log_z;
            break;
        }
        // G_step(x_{step-1}, y^{step-1}) = -sum_x' P(x' | x_{step-1}) ln Z_step(x', y^{step-1})
        let mut cost = vec![0.0; n_yh * nx];
        for yh in 0..n_yh {
            for prev in 0..nx {
                cost[yh * nx + prev] =
                    -(0..nx).map(|x| source.transition_prob(step, prev, x) * log_z[yh * nx + x]).sum::<f64>();
            }
        }
        cost_next = cost;
    }
    Ok((policy, log_z0))
}

/// Minimize the Lagrangian over causal kernels at multiplier `s`, starting
/// from uniform marginals.
pub fn causal_solve(
    source: &FiniteMarkovSource,
    rho: &DistortionSpec,
    s: f64,
    opts: &SolverOptions,
) -> Result<FixedPointSolution> {
    let ny = check_instance(source, rho, s)?;
    causal_solve_from(source, rho, s, MarginalReproduction::uniform(ny, source.horizon()), opts)
}

/// [`causal_solve`] from given initial marginals.
///
/// The report's `parametric_rate` is `(s E d - E ln Z_0(X_0)) / (n + 1)`,
/// which equals the rate once the marginals are self-consistent.
pub fn causal_solve_from(
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
    let (mut policy, _) = causal_kernel(&initial, source, rho, s)?;
    let mut iterations = 0;
    let (joint, marginals, log_z0, change, converged) = loop {
        iterations += 1;
        let joint = JointLaw::new(source, &policy)?;
        let marginals = joint.marginals();
        let (next, log_z0) = causal_kernel(&marginals, source, rho, s)?;
        let change = reached_sup_distance(&policy, &next, &joint);
        if change < opts.tol || iterations >= opts.max_iter {
            break (joint, marginals, log_z0, change, change < opts.tol);
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
    let e_log_z0: f64 = source.initial_pmf().iter().zip(&log_z0).map(|(p, z)| p * z).sum();
    let point = RateDistortionPoint::new(s, di / steps, total_distortion / steps, source.horizon())?;
    let report = SolverReport {
        iterations,
        final_change: change,
        rate: point.rate,
        distortion: point.distortion,
        s,
        converged,
        parametric_rate: (s * total_distortion - e_log_z0) / steps,
    };
    Ok(FixedPointSolution {
        policy,
        marginals,
        point,
        report,
    })
}
