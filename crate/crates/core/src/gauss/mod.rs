//! Causal realization of the Gaussian reproduction: innovations encoder,
//! parallel additive Gaussian noise channels, decoder and predictor.
//!
//! Per step: `K = Y - C X̂`, rotate `Γ = E K` so its covariance is diagonal,
//! send `A_i = encoder_i Γ_i`, receive `B_i = A_i + Z_i`, estimate
//! `Γ̃_i = decoder_i B_i`, reconstruct `Ỹ = E^T Γ̃ + C X̂`, and update `X̂`
//! from `Γ̃`.

mod filter;
mod gains;
mod riccati;
mod simulate;

pub use filter::{
    filter_gain, innovation_covariance, innovation_step, kalman_update, FilterGain, FilterState,
};
pub use gains::{
    channel_step, decode_step, design_gains, encode_step, ChannelSpec, DecoderGain, Decoded,
    GainSet,
};
pub use riccati::{
    design_schedule, matching_check, perfect_schedule, riccati_for_power, riccati_infinite,
    MatchingReport, RiccatiOptions, ScheduleStep, SteadyState, DISTORTION_IDENTITY_TOL, MATCH_TOL,
};
pub use simulate::{
    simulate, Design, RealizationTrace, SimulationOptions, SimulationResult, TraceStep,
    TrialSummary,
};
