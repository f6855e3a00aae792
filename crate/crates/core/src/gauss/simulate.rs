use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gains::{decode_step, encode_step, DecoderGain, GainSet};
use super::riccati::{design_schedule, perfect_schedule, riccati_infinite, RiccatiOptions};
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::model::StateSpaceModel;

/// Random words reserved per step in a trial's stream.
const STEP_WORDS: u32 = 20;

/// Which gains drive the simulated cascade.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Gains frozen at the Riccati fixed point; `X_0` starts in the
    /// stationary error regime around `x0_mean`.
    #[default]
    SteadyState,
    /// Gains recomputed each step from the model's initial law.
    FiniteHorizon,
    /// Identity gains over a noiseless channel (`Ỹ = Y`).
    PerfectChannel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub design: Design,
    pub distortion: f64,
    pub q: f64,
    /// Steps per trial.
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; `1` runs on the calling thread.
    pub threads: usize,
    pub decoder: DecoderGain,
    /// Record every step of trial 0.
    pub record_trace: bool,
    pub riccati: RiccatiOptions,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            design: Design::SteadyState,
            distortion: 1.0,
            q: 1.0,
            horizon: 1000,
            trials: 1,
            seed: 0,
            threads: 1,
            decoder: DecoderGain::Mmse,
            record_trace: false,
            riccati: RiccatiOptions::default(),
        }
    }
}

/// Signals of one time step of the cascade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub k: Vec<f64>,
    pub gamma: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
    pub k_tilde: Vec<f64>,
    pub y_tilde: Vec<f64>,
    /// Mean of `|Y - Ỹ|^2` over steps `0..=t`.
    pub running_distortion: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RealizationTrace {
    pub steps: Vec<TraceStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    /// Mean of `|Y_t - Ỹ_t|^2` over the trial.
    pub distortion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub target_distortion: f64,
    pub trials: Vec<TrialSummary>,
    pub mean_distortion: f64,
    pub std_error: f64,
    pub symbols: usize,
    /// Lag-1 autocorrelation of each component of the decoded innovation
    /// `Γ̃`, pooled over trials. Near zero when the filter is consistent.
    pub decoded_lag1: Vec<f64>,
    /// Lag-1 autocorrelation of each component of the encoder innovation
    /// `Γ`. Not white in general: `Γ` is the innovation with respect to `Ỹ`,
    /// not to `Y`.
    pub encoder_lag1: Vec<f64>,
    /// `3 / sqrt(samples)` for the pooled autocorrelations.
    pub whiteness_bound: f64,
    pub trace: Option<RealizationTrace>,
}

/// Per-component sums for a pooled lag-1 autocorrelation.
#[derive(Clone, Debug, Default)]
struct Lag1 {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    cross: Vec<f64>,
    count: usize,
    pairs: usize,
}

impl Lag1 {
    fn new(p: usize) -> Self {
        Lag1 {
            sum: vec![0.0; p],
            sum_sq: vec![0.0; p],
            cross: vec![0.0; p],
            count: 0,
            pairs: 0,
        }
    }

    fn push(&mut self, v: &DVector<f64>, prev: Option<&DVector<f64>>) {
        for i in 0..v.len() {
            self.sum[i] += v[i];
            self.sum_sq[i] += v[i] * v[i];
            if let Some(p) = prev {
                self.cross[i] += v[i] * p[i];
            }
        }
        self.count += 1;
        if prev.is_some() {
            self.pairs += 1;
        }
    }

    fn merge(&mut self, other: &Lag1) {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
            self.cross[i] += other.cross[i];
        }
        self.count += other.count;
        self.pairs += other.pairs;
    }

    fn correlations(&self) -> Vec<f64> {
        let n = self.count as f64;
        (0..self.sum.len())
            .map(|i| {
                let mean = self.sum[i] / n;
                let var = self.sum_sq[i] / n - mean * mean;
                if var > 0.0 && self.pairs > 0 {
                    (self.cross[i] / self.pairs as f64 - mean * mean) / var
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Gains and filter for each step; steady-state designs repeat one entry.
struct Plan {
    gains: Vec<GainSet>,
    filter_gain: Vec<DMatrix<f64>>,
    initial_sigma: DMatrix<f64>,
}

impl Plan {
    fn at(&self, t: usize) -> (&GainSet, &DMatrix<f64>) {
        let i = t.min(self.gains.len() - 1);
        (&self.gains[i], &self.filter_gain[i])
    }
}

fn plan(model: &StateSpaceModel, opts: &SimulationOptions) -> Result<Plan> {
    let steps = match opts.design {
        Design::SteadyState => {
            let s = riccati_infinite(model, opts.distortion, opts.q, &opts.riccati, opts.decoder)?;
            return Ok(Plan {
                gains: vec![s.gains],
                filter_gain: vec![s.filter.gain],
                initial_sigma: s.sigma,
            });
        }
        Design::FiniteHorizon => design_schedule(model, opts.distortion, opts.q, opts.horizon, opts.decoder)?,
        Design::PerfectChannel => perfect_schedule(model, opts.horizon)?,
    };
    Ok(Plan {
        initial_sigma: model.x0_cov().clone(),
        gains: steps.iter().map(|s| s.gains.clone()).collect(),
        filter_gain: steps.into_iter().map(|s| s.filter.gain).collect(),
    })
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

struct TrialOutput {
    sum_err: f64,
    decoded: Lag1,
    encoder: Lag1,
    trace: Option<RealizationTrace>,
}

fn run_trial(
    model: &StateSpaceModel,
    plan: &Plan,
    opts: &SimulationOptions,
    init_root: &DMatrix<f64>,
    trial: usize,
) -> Result<TrialOutput> {
    let (a, b, c, g) = (model.a(), model.b(), model.c(), model.g());
    let (m, k_dim, p) = (model.state_dim(), model.noise_dim(), model.obs_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(trial as u64);

    let mut x_hat = model.x0_mean().clone();
    let mut x = &x_hat + init_root * normal_vec(&mut rng, m);
    let perfect = opts.design == Design::PerfectChannel;
    let q_sd = if perfect { 0.0 } else { opts.q.sqrt() };

    let mut decoded = Lag1::new(p);
    let mut encoder = Lag1::new(p);
    let mut prev_gamma: Option<DVector<f64>> = None;
    let mut prev_gamma_tilde: Option<DVector<f64>> = None;
    let mut trace = (opts.record_trace && trial == 0).then(RealizationTrace::default);
    let mut sum_err = 0.0;

    for t in 0..opts.horizon {
        // the initial-state draw lives in the stream prefix; step t owns the
        // window starting at (t + 1) << STEP_WORDS
        rng.set_word_pos(((t as u128) + 1) << STEP_WORDS);
        let (gains, gain) = plan.at(t);
        let y = c * &x + g * normal_vec(&mut rng, p);
        let predicted = c * &x_hat;
        let k = &y - &predicted;
        let (gamma, sent) = encode_step(gains, &k);
        let noise = normal_vec(&mut rng, p);
        let received = if q_sd > 0.0 { &sent + noise * q_sd } else { sent.clone() };
        let out = decode_step(gains, &received, &predicted)?;
        let err = (&y - &out.y_tilde).norm_squared();
        sum_err += err;

        encoder.push(&gamma, prev_gamma.as_ref());
        decoded.push(&out.gamma_tilde, prev_gamma_tilde.as_ref());

        if let Some(tr) = trace.as_mut() {
            tr.steps.push(TraceStep {
                t,
                x: x.iter().copied().collect(),
                y: y.iter().copied().collect(),
                k: k.iter().copied().collect(),
                gamma: gamma.iter().copied().collect(),
                a: sent.iter().copied().collect(),
                b: received.iter().copied().collect(),
                gamma_tilde: out.gamma_tilde.iter().copied().collect(),
                k_tilde: out.k_tilde.iter().copied().collect(),
                y_tilde: out.y_tilde.iter().copied().collect(),
                running_distortion: sum_err / (t + 1) as f64,
            });
        }

        x_hat = a * &x_hat + gain * &out.gamma_tilde;
        x = a * &x + b * normal_vec(&mut rng, k_dim);
        prev_gamma = Some(gamma);
        prev_gamma_tilde = Some(out.gamma_tilde);
    }
    Ok(TrialOutput {
        sum_err,
        decoded,
        encoder,
        trace,
    })
}

/// Run the full cascade (source, innovation, encoder, channel, decoder,
/// filter) for `trials` independent trials of `horizon` steps.
///
/// Results depend only on the options and the seed, not on `threads`.
pub fn simulate(model: &StateSpaceModel, opts: &SimulationOptions) -> Result<SimulationResult> {
    if opts.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if opts.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let plan = plan(model, opts)?;
    let init_root = psd_sqrt(&plan.initial_sigma);

    let run = |trial| run_trial(model, &plan, opts, &init_root, trial);
    let outputs: Vec<TrialOutput> = if opts.threads <= 1 {
        (0..opts.trials).map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| (0..opts.trials).into_par_iter().map(run).collect::<Result<_>>())?
    };

    let p = model.obs_dim();
    let steps = opts.horizon as f64;
    let mut decoded = Lag1::new(p);
    let mut encoder = Lag1::new(p);
    let mut trials = Vec::with_capacity(outputs.len());
    let mut trace = None;
    for (i, out) in outputs.into_iter().enumerate() {
        decoded.merge(&out.decoded);
        encoder.merge(&out.encoder);
        trials.push(TrialSummary {
            trial: i,
            distortion: out.sum_err / steps,
        });
        if out.trace.is_some() {
            trace = out.trace;
        }
    }
    let n = trials.len() as f64;
    let mean_distortion = trials.iter().map(|t| t.distortion).sum::<f64>() / n;
    let std_error = if trials.len() > 1 {
        let var = trials
            .iter()
            .map(|t| (t.distortion - mean_distortion).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::NAN
    };
    let samples = decoded.pairs.max(1) as f64;
    Ok(SimulationResult {
        target_distortion: if opts.design == Design::PerfectChannel { 0.0 } else { opts.distortion },
        trials,
        mean_distortion,
        std_error,
        symbols: opts.trials * opts.horizon,
        decoded_lag1: decoded.correlations(),
        encoder_lag1: encoder.correlations(),
        whiteness_bound: 3.0 / samples.sqrt(),
        trace,
    })
}
