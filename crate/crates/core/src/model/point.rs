use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point on a rate-distortion curve. `rate` is nats per source symbol,
/// `distortion` is per symbol, `s` the Lagrange multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateDistortionPoint {
    pub s: f64,
    pub rate: f64,
    pub distortion: f64,
    pub horizon: usize,
}

/// Rates below this are treated as zero when checking `rate > 0 => s < 0`.
const ZERO_RATE: f64 = 1e-9;

impl RateDistortionPoint {
    /// Rounding noise below zero in the rate is clamped.
    pub fn new(s: f64, rate: f64, distortion: f64, horizon: usize) -> Result<Self> {
        if !(s <= 0.0) {
            return Err(Error::PositiveMultiplier(s));
        }
        if rate < -ZERO_RATE || distortion < -ZERO_RATE {
            return Err(Error::InvalidArgument(format!(
                "rate {rate} and distortion {distortion} must be nonnegative"
            )));
        }
        if rate > ZERO_RATE && s == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "positive rate {rate} requires s < 0"
            )));
        }
        Ok(Self {
            s,
            rate: rate.max(0.0),
            distortion: distortion.max(0.0),
            horizon,
        })
    }

    pub fn rate_bits(&self) -> f64 {
        crate::nats_to_bits(self.rate)
    }
}
