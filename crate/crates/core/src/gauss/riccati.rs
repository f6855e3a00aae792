use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::filter::{filter_gain, innovation_covariance, FilterGain};
use super::gains::{design_gains, DecoderGain, GainSet};
use crate::error::{Error, Result};
use crate::linalg::{max_abs_diff, min_symmetric_eigenvalue, sorted_symmetric_eigen};
use crate::model::{validate_model, Diagnostic, StateSpaceModel};
use crate::waterfill::{allocate, WaterfillAllocation};

/// Tolerance for the matching identity.
pub const MATCH_TOL: f64 = 1e-8;

/// Tolerance for `trace(T) = D` at every designed step.
pub const DISTORTION_IDENTITY_TOL: f64 = 1e-8;

/// One designed step of a finite-horizon realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    /// Prediction error covariance entering the step.
    pub sigma: DMatrix<f64>,
    pub gains: GainSet,
    pub filter: FilterGain,
}

impl ScheduleStep {
    pub fn distortion_identity(&self) -> f64 {
        self.gains.distortion_identity()
    }
}

fn eigenvalues_of(lambda: &DMatrix<f64>) -> Vec<f64> {
    sorted_symmetric_eigen(lambda).1.iter().copied().collect()
}

fn structural_checks(model: &StateSpaceModel, q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::ChannelNoise(q));
    }
    let blocking: Vec<Diagnostic> = validate_model(model)
        .into_iter()
        .filter(|d| matches!(d, Diagnostic::GSingular { .. } | Diagnostic::InitialCovarianceNotPsd { .. }))
        .collect();
    if blocking.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(blocking))
    }
}

/// Design gains for `horizon` steps starting from the model's initial law,
/// recomputing the allocation from `Σ_t` at every step.
///
/// Every step must be able to meet `distortion`, i.e. `D <= trace(Λ_t)`.
pub fn design_schedule(
    model: &StateSpaceModel,
    distortion: f64,
    q: f64,
    horizon: usize,
    decoder: DecoderGain,
) -> Result<Vec<ScheduleStep>> {
    structural_checks(model, q)?;
    let mut sigma = model.x0_cov().clone();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let lambda = innovation_covariance(model, &sigma);
        let alloc = allocate(&eigenvalues_of(&lambda), distortion)?;
        let gains = design_gains(&lambda, &alloc, q, decoder)?;
        let filter = filter_gain(model, &sigma, &gains)?;
        let next = filter.next_sigma.clone();
        steps.push(ScheduleStep { sigma, gains, filter });
        sigma = next;
    }
    Ok(steps)
}

/// Identity-gain schedule over a noiseless channel; the filter reduces to the
/// ordinary Kalman predictor driven by `Y`.
pub fn perfect_schedule(model: &StateSpaceModel, horizon: usize) -> Result<Vec<ScheduleStep>> {
    let mut sigma = model.x0_cov().clone();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let lambda = innovation_covariance(model, &sigma);
        let gains = GainSet::perfect(&lambda);
        let filter = filter_gain(model, &sigma, &gains)?;
        let next = filter.next_sigma.clone();
        steps.push(ScheduleStep { sigma, gains, filter });
        sigma = next;
    }
    Ok(steps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

/// Stationary realization at a fixed distortion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub sigma: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub alloc: WaterfillAllocation,
    pub gains: GainSet,
    pub filter: FilterGain,
    pub distortion: f64,
    pub q: f64,
    /// Total power `Q sum_i (λ_i/δ_i - 1)`.
    pub power: f64,
    /// `(1/2) sum_i ln(λ_i/δ_i)`, nats per step.
    pub rate: f64,
    pub iterations: usize,
    /// Sup-norm of `Σ - Riccati(Σ)` at the returned `Σ`.
    pub residual: f64,
}

impl SteadyState {
    pub fn eigenvalues(&self) -> &[f64] {
        self.alloc.eigenvalues()
    }
    pub fn deltas(&self) -> &[f64] {
        self.alloc.deltas()
    }
}

/// Allocation used while iterating: while the budget exceeds `trace(Λ)`
/// nothing is sent.
fn provisional_allocation(eigs: &[f64], distortion: f64) -> Result<WaterfillAllocation> {
    let total: f64 = eigs.iter().sum();
    if distortion >= total {
        allocate(eigs, total)
    } else {
        allocate(eigs, distortion)
    }
}

fn riccati_map(
    model: &StateSpaceModel,
    sigma: &DMatrix<f64>,
    distortion: f64,
    q: f64,
    decoder: DecoderGain,
    strict: bool,
) -> Result<(DMatrix<f64>, WaterfillAllocation, GainSet, FilterGain)> {
    let lambda = innovation_covariance(model, sigma);
    let eigs = eigenvalues_of(&lambda);
    let alloc = if strict {
        allocate(&eigs, distortion)?
    } else {
        provisional_allocation(&eigs, distortion)?
    };
    let gains = design_gains(&lambda, &alloc, q, decoder)?;
    let filter = filter_gain(model, sigma, &gains)?;
    Ok((lambda, alloc, gains, filter))
}

/// Iterate `Σ -> Λ -> allocation -> gains -> Σ'` to its fixed point.
///
/// The model must be detectable and stabilizable. Fails when the iteration
/// does not settle or when `D` exceeds `trace(Λ)` at the fixed point.
pub fn riccati_infinite(
    model: &StateSpaceModel,
    distortion: f64,
    q: f64,
    opts: &RiccatiOptions,
    decoder: DecoderGain,
) -> Result<SteadyState> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::ChannelNoise(q));
    }
    let diags = validate_model(model);
    if !diags.is_empty() {
        return Err(Error::InvalidModel(diags));
    }
    if !(distortion > 0.0) || !distortion.is_finite() {
        return Err(Error::InfeasibleDistortion {
            distortion,
            max: f64::NAN,
        });
    }
    let m = model.state_dim();
    let mut sigma = DMatrix::zeros(m, m);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (_, _, _, fg) = riccati_map(model, &sigma, distortion, q, decoder, false)?;
        change = max_abs_diff(&fg.next_sigma, &sigma);
        if !change.is_finite() {
            break;
        }
        sigma = fg.next_sigma;
        if change < opts.tol {
            break;
        }
    }
    if !(change < opts.tol) {
        return Err(Error::RiccatiNonConvergence { iterations, change });
    }
    let total = innovation_covariance(model, &sigma).trace();
    // Σ is only known to within the stopping tolerance, so a budget equal to
    // trace(Λ_∞) may land marginally above the iterate's trace
    let slack = 100.0 * opts.tol * total.max(1.0);
    if distortion > total + slack {
        return Err(Error::InfeasibleDistortion {
            distortion,
            max: total,
        });
    }
    let (lambda, alloc, gains, filter) =
        riccati_map(model, &sigma, distortion.min(total), q, decoder, true)?;
    let residual = max_abs_diff(&filter.next_sigma, &sigma);
    debug_assert!(min_symmetric_eigenvalue(&sigma) > -1e-10);
    Ok(SteadyState {
        power: gains.channel().power,
        rate: alloc.rate(),
        sigma,
        lambda,
        alloc,
        gains,
        filter,
        distortion,
        q,
        iterations,
        residual,
    })
}

/// Steady state whose channel power equals `power`: bisects on the
/// distortion, since power falls as the budget grows.
pub fn riccati_for_power(
    model: &StateSpaceModel,
    power: f64,
    q: f64,
    opts: &RiccatiOptions,
    decoder: DecoderGain,
) -> Result<SteadyState> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
    }
    // Some(state) when feasible; None when the budget is too large to meet
    let solve = |d: f64| match riccati_infinite(model, d, q, opts, decoder) {
        Ok(s) => Ok(Some(s)),
        Err(Error::InfeasibleDistortion { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let scale = model.observation_noise_cov().trace().max(f64::MIN_POSITIVE);
    let mut hi = scale;
    let mut grow = 0;
    while let Some(s) = solve(hi)? {
        if s.power <= power || grow > 200 {
            break;
        }
        hi *= 2.0;
        grow += 1;
    }
    let mut lo = hi;
    let mut best = loop {
        lo *= 0.5;
        if let Some(s) = solve(lo)? {
            if s.power >= power {
                break s;
            }
        }
        if lo < scale * 1e-300 {
            return Err(Error::InvalidArgument(format!("no distortion reaches power {power}")));
        }
    };
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        match solve(mid)? {
            Some(s) if s.power >= power => {
                lo = mid;
                best = s;
            }
            _ => hi = mid,
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(best)
}

/// Comparison of the stationary rate with the channel capacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    pub dim: usize,
    pub rate: f64,
    pub power: f64,
    pub q: f64,
    /// `(1/2) ln(1 + P/Q)`: capacity of one scalar channel with the total power.
    pub scalar_capacity: f64,
    /// `(1/2) ln(1 + α_i P / Q)` for each sub-channel.
    pub component_capacities: Vec<f64>,
    pub capacity_sum: f64,
    /// `|rate - scalar_capacity|` for one component, `|rate - capacity_sum|`
    /// otherwise.
    pub match_residual: f64,
    /// `scalar_capacity - rate`.
    pub scalar_gap: f64,
    pub matched: bool,
}

pub fn matching_check(state: &SteadyState) -> MatchingReport {
    let ch = state.gains.channel();
    let component_capacities = ch.component_capacities();
    let capacity_sum: f64 = component_capacities.iter().sum();
    let scalar_capacity = ch.scalar_capacity();
    let dim = state.gains.dim();
    let match_residual = if dim == 1 {
        (state.rate - scalar_capacity).abs()
    } else {
        (state.rate - capacity_sum).abs()
    };
    MatchingReport {
        dim,
        rate: state.rate,
        power: state.power,
        q: state.q,
        scalar_capacity,
        component_capacities,
        capacity_sum,
        match_residual,
        scalar_gap: scalar_capacity - state.rate,
        matched: match_residual <= MATCH_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn scalar() -> StateSpaceModel {
        StateSpaceModel::scalar(0.5, 1.0, 1.0, 1.0)
    }

    #[test]
    fn scalar_fixed_point_matches_capacity() {
        let s = riccati_infinite(&scalar(), 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        assert!(s.residual < 1e-9);
        let r = matching_check(&s);
        assert!(r.matched, "{r:?}");
        assert!((s.gains.distortion_identity() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn scalar_fixed_point_closed_form() {
        // With h = 1 - δ/λ the update is σ' = a^2 σ (1 - σ h / λ) + b^2. For
        // a = 1/2, b = c = g = 1, δ = 1/2 and σ = λ - 1 this reduces to
        // 4λ^3 - 9.5λ^2 + 2λ - 0.5 = 0 with the root in (2, 3).
        let f = |l: f64| ((4.0 * l - 9.5) * l + 2.0) * l - 0.5;
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = riccati_infinite(&scalar(), 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        assert!((s.lambda[(0, 0)] - lo).abs() < 1e-8);
        assert!((s.rate - 0.5 * (lo / 0.5).ln()).abs() < 1e-8);
        assert!((s.power - (lo / 0.5 - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn iid_observations_settle_in_one_step() {
        let m = StateSpaceModel::scalar(0.0, 1.0, 1.0, 1.0);
        let s = riccati_infinite(&m, 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        // A = 0: Σ_∞ = B B^T regardless of the gains, λ = 2
        assert!((s.sigma[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((s.lambda[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(s.residual < 1e-9);
    }

    #[test]
    fn full_budget_sends_nothing() {
        // open loop: σ = 0.25 σ + 1, λ = 4/3 + 1
        let d = 4.0 / 3.0 + 1.0;
        let s = riccati_infinite(&scalar(), d, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        assert_eq!(s.power, 0.0);
        assert_eq!(s.rate, 0.0);
        let r = matching_check(&s);
        assert_eq!(r.scalar_capacity, 0.0);
        assert!(r.matched);
    }

    #[test]
    fn oversized_budget_reports_range() {
        let err = riccati_infinite(&scalar(), 5.0, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap_err();
        match err {
            Error::InfeasibleDistortion { max, .. } => assert!((max - 7.0 / 3.0).abs() < 1e-8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undetectable_model_rejected() {
        let m = StateSpaceModel::scalar(2.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            riccati_infinite(&m, 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let opts = RiccatiOptions { tol: 1e-9, max_iter: 2 };
        assert!(matches!(
            riccati_infinite(&scalar(), 0.5, 1.0, &opts, DecoderGain::Mmse),
            Err(Error::RiccatiNonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn two_dimensional_parallel_channels() {
        let m = StateSpaceModel::from_system(
            DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.0, 0.4]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.5]),
        )
        .unwrap();
        let s = riccati_infinite(&m, 0.8, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        let r = matching_check(&s);
        assert!(r.matched, "{r:?}");
        assert_eq!(r.component_capacities.len(), 2);
        // one scalar channel with the same total power carries less than p channels
        assert!(r.scalar_gap < 0.0);
        assert!((s.gains.distortion_identity() - 0.8).abs() < 1e-8);
    }

    #[test]
    fn unstable_plant_converges() {
        let m = StateSpaceModel::scalar(1.5, 1.0, 1.0, 1.0);
        let s = riccati_infinite(&m, 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        assert!(s.residual < 1e-9);
        // rate must exceed ln|a| for the error to stay bounded
        assert!(s.rate > 1.5f64.ln());
    }

    #[test]
    fn power_constraint_inverts_distortion() {
        let target = riccati_infinite(&scalar(), 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        let s = riccati_for_power(&scalar(), target.power, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
        assert!((s.distortion - 0.5).abs() < 1e-7, "{}", s.distortion);
    }

    #[test]
    fn schedule_meets_distortion_every_step() {
        let m = scalar()
            .with_initial(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 2.0))
            .unwrap();
        let sched = design_schedule(&m, 0.7, 1.0, 30, DecoderGain::Mmse).unwrap();
        for st in &sched {
            assert!((st.distortion_identity() - 0.7).abs() < 1e-8);
        }
    }

    #[test]
    fn schedule_rejects_unreachable_budget() {
        // Σ0 = 0 gives Λ0 = 1 < D
        let err = design_schedule(&scalar(), 1.5, 1.0, 3, DecoderGain::Mmse).unwrap_err();
        assert!(matches!(err, Error::InfeasibleDistortion { .. }));
    }
}
