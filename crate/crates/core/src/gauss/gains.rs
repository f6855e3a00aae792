use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;
use crate::waterfill::WaterfillAllocation;

/// Relative tolerance when matching an allocation to the eigenvalues of `Λ`.
const EIGEN_MATCH_TOL: f64 = 1e-9;

/// Decoder gain normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderGain {
    /// `sqrt(αP λ) / (αP + Q)`: the linear MMSE estimate of each component,
    /// which reaches the allocated distortion exactly.
    #[default]
    Mmse,
    /// `sqrt(αP λ)` without the `1/(αP + Q)` factor. Kept for comparison; it
    /// does not achieve the allocated distortion.
    AsPrinted,
}

/// Additive Gaussian noise channel usage for one step: `p` parallel
/// sub-channels with noise variance `q`, total power `power` split by
/// `shares`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub q: f64,
    pub power: f64,
    pub shares: Vec<f64>,
}

impl ChannelSpec {
    pub fn component_powers(&self) -> Vec<f64> {
        self.shares.iter().map(|a| a * self.power).collect()
    }

    /// `(1/2) ln(1 + α_i P / Q)` per sub-channel, nats.
    pub fn component_capacities(&self) -> Vec<f64> {
        self.component_powers()
            .iter()
            .map(|p| 0.5 * (p / self.q).ln_1p())
            .collect()
    }

    /// `(1/2) ln(1 + P / Q)`, nats.
    pub fn scalar_capacity(&self) -> f64 {
        0.5 * (self.power / self.q).ln_1p()
    }
}

/// Encoder and decoder gains for one step, in the coordinates that
/// diagonalize the innovation covariance `Λ`.
///
/// `e` holds the eigenvectors of `Λ` as rows (descending eigenvalues), so the
/// rotated innovation `Γ = e K` has covariance `diag(eigenvalues)`. Component
/// `i` is sent as `encoder[i] Γ_i` over its own sub-channel and estimated as
/// `decoder[i] B_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    e: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    lambda: DMatrix<f64>,
    alloc: Option<WaterfillAllocation>,
    encoder: Vec<f64>,
    decoder: Vec<f64>,
    active: Vec<bool>,
    channel: ChannelSpec,
}

impl GainSet {
    /// Noiseless identity gains: `Γ̃ = Γ`, so the decoder sees `Y` exactly.
    pub fn perfect(lambda: &DMatrix<f64>) -> Self {
        let (e, vals) = sorted_symmetric_eigen(lambda);
        let p = vals.len();
        let eigenvalues: Vec<f64> = vals.iter().copied().collect();
        let total: f64 = eigenvalues.iter().sum();
        GainSet {
            e,
            lambda: lambda.clone(),
            alloc: None,
            encoder: vec![1.0; p],
            decoder: vec![1.0; p],
            active: vec![true; p],
            channel: ChannelSpec {
                q: 0.0,
                power: total,
                shares: eigenvalues.iter().map(|l| l / total).collect(),
            },
            eigenvalues,
        }
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }
    pub fn allocation(&self) -> Option<&WaterfillAllocation> {
        self.alloc.as_ref()
    }
    pub fn encoder(&self) -> &[f64] {
        &self.encoder
    }
    pub fn decoder(&self) -> &[f64] {
        &self.decoder
    }
    pub fn channel(&self) -> &ChannelSpec {
        &self.channel
    }
    pub fn q(&self) -> f64 {
        self.channel.q
    }
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Whether component `i` is transmitted.
    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    /// `decoder_i * encoder_i` per component.
    pub fn h_diag(&self) -> Vec<f64> {
        self.decoder.iter().zip(&self.encoder).map(|(b, a)| a * b).collect()
    }

    /// Rotated end-to-end gain `diag(decoder_i encoder_i)`.
    pub fn h(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.h_diag()))
    }

    /// End-to-end gain in observation coordinates, `e^T h e`.
    pub fn h_original(&self) -> DMatrix<f64> {
        self.e.transpose() * self.h() * &self.e
    }

    /// Covariance of the decoded channel noise, `diag(decoder_i^2 Q)`.
    pub fn noise_cov(&self) -> DMatrix<f64> {
        let q = self.channel.q;
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.decoder.iter().map(|b| b * b * q),
        ))
    }

    /// Rotated reconstruction error covariance
    /// `(I - h) diag(λ) (I - h)^T + noise_cov`.
    pub fn t_matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        let i_h = DMatrix::identity(p, p) - self.h();
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &i_h * lam * i_h.transpose() + self.noise_cov()
    }

    /// Per-component reconstruction error, the diagonal of [`Self::t_matrix`].
    pub fn component_errors(&self) -> Vec<f64> {
        self.t_matrix().diagonal().iter().copied().collect()
    }

    /// `trace(T)`, the expected squared reconstruction error `E|Y - Ỹ|^2`.
    pub fn distortion_identity(&self) -> f64 {
        self.t_matrix().trace()
    }
}

/// Design encoder/decoder gains meeting `alloc` over channels with noise
/// variance `q`.
///
/// Component `i` gets power `Q (λ_i / δ_i - 1)`; components with
/// `δ_i = λ_i` are not transmitted.
pub fn design_gains(
    lambda: &DMatrix<f64>,
    alloc: &WaterfillAllocation,
    q: f64,
    decoder: DecoderGain,
) -> Result<GainSet> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::ChannelNoise(q));
    }
    let (e, vals) = sorted_symmetric_eigen(lambda);
    if vals.len() != alloc.eigenvalues().len() {
        return Err(Error::AllocationMismatch);
    }
    for (v, l) in vals.iter().zip(alloc.eigenvalues()) {
        if (v - l).abs() > EIGEN_MATCH_TOL * v.abs().max(1.0) {
            return Err(Error::AllocationMismatch);
        }
    }
    let eigenvalues = alloc.eigenvalues().to_vec();
    let p = eigenvalues.len();
    let mut encoder = vec![0.0; p];
    let mut dec = vec![0.0; p];
    let mut active = vec![false; p];
    let mut powers = vec![0.0; p];
    for i in 0..p {
        let (l, d) = (eigenvalues[i], alloc.deltas()[i]);
        if !alloc.is_active(i) {
            continue;
        }
        let ap = q * (l / d - 1.0);
        if !(ap > 0.0) {
            continue;
        }
        active[i] = true;
        powers[i] = ap;
        encoder[i] = (ap / l).sqrt();
        dec[i] = match decoder {
            DecoderGain::Mmse => (ap * l).sqrt() / (ap + q),
            DecoderGain::AsPrinted => (ap * l).sqrt(),
        };
    }
    let power: f64 = powers.iter().sum();
    let shares = if power > 0.0 {
        powers.iter().map(|x| x / power).collect()
    } else {
        vec![1.0 / p as f64; p]
    };
    Ok(GainSet {
        e,
        eigenvalues,
        lambda: lambda.clone(),
        alloc: Some(alloc.clone()),
        encoder,
        decoder: dec,
        active,
        channel: ChannelSpec { q, power, shares },
    })
}

/// Rotate the innovation and scale each component for transmission.
/// Returns `(Γ, A)`.
pub fn encode_step(gains: &GainSet, k: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let gamma = gains.e() * k;
    let a = DVector::from_iterator(
        gamma.len(),
        gamma.iter().zip(gains.encoder()).map(|(g, w)| g * w),
    );
    (gamma, a)
}

/// One use of an additive Gaussian noise channel with variance `q`.
/// `q = 0` is noiseless and draws nothing.
pub fn channel_step<R: Rng + ?Sized>(a: f64, q: f64, rng: &mut R) -> Result<f64> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::ChannelNoise(q));
    }
    if q == 0.0 {
        return Ok(a);
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(a + q.sqrt() * z)
}

/// Decoder output for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub gamma_tilde: DVector<f64>,
    pub k_tilde: DVector<f64>,
    pub y_tilde: DVector<f64>,
}

/// Scale each sub-channel output, rotate back and add the prediction
/// `predicted = C X̂`.
pub fn decode_step(gains: &GainSet, b: &DVector<f64>, predicted: &DVector<f64>) -> Result<Decoded> {
    if b.len() != gains.dim() || predicted.len() != gains.dim() {
        return Err(Error::Dimension {
            first: "channel outputs",
            second: "gains",
            detail: format!(
                "{} outputs and prediction of length {} for {} components",
                b.len(),
                predicted.len(),
                gains.dim()
            ),
        });
    }
    let gamma_tilde = DVector::from_iterator(
        b.len(),
        b.iter().zip(gains.decoder()).map(|(x, w)| x * w),
    );
    let k_tilde = gains.e().transpose() * &gamma_tilde;
    let y_tilde = &k_tilde + predicted;
    Ok(Decoded {
        gamma_tilde,
        k_tilde,
        y_tilde,
    })
}
