use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gains::GainSet;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, symmetrize};
use crate::model::StateSpaceModel;

/// Condition number above which the innovation-mix covariance is treated as
/// singular.
const MAX_CONDITION: f64 = 1e14;

/// One-step predictor state: `x_hat = E[X_t | Ỹ^{t-1}]`, error covariance
/// `sigma`, and the covariance `mix` of the decoded innovation used in the
/// most recent update (zero before the first update).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub mix: DMatrix<f64>,
}

impl FilterState {
    /// Prior state from the model's initial law.
    pub fn initial(model: &StateSpaceModel) -> Self {
        let p = model.obs_dim();
        FilterState {
            x_hat: model.x0_mean().clone(),
            sigma: model.x0_cov().clone(),
            mix: DMatrix::zeros(p, p),
        }
    }

    pub fn new(x_hat: DVector<f64>, sigma: DMatrix<f64>) -> Self {
        let m = x_hat.len();
        debug_assert_eq!(sigma.shape(), (m, m));
        FilterState {
            x_hat,
            sigma,
            mix: DMatrix::zeros(0, 0),
        }
    }
}

/// Innovation `K = y - C x_hat` and its covariance `Λ = C Σ C^T + G G^T`.
pub fn innovation_step(
    model: &StateSpaceModel,
    filter: &FilterState,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if y.len() != model.obs_dim() {
        return Err(Error::Dimension {
            first: "y",
            second: "C",
            detail: format!("observation has length {}, C has {} rows", y.len(), model.obs_dim()),
        });
    }
    let k = y - model.c() * &filter.x_hat;
    Ok((k, innovation_covariance(model, &filter.sigma)))
}

pub fn innovation_covariance(model: &StateSpaceModel, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let c = model.c();
    symmetrize(&(c * sigma * c.transpose() + model.observation_noise_cov()))
}

/// Predictor gain for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterGain {
    /// `m x p` map from the rotated decoded innovation `Γ̃` to the state
    /// correction; columns of untransmitted components are zero.
    pub gain: DMatrix<f64>,
    /// Covariance of `K̃` in observation coordinates.
    pub mix: DMatrix<f64>,
    /// Next prediction error covariance.
    pub next_sigma: DMatrix<f64>,
}

/// Gain and covariance update for prediction error covariance `sigma`.
///
/// The decoded innovation in rotated coordinates is
/// `Γ̃ = h e C (X - x_hat) + h e G V + decoder * Z`. Untransmitted components
/// of `Γ̃` are identically zero, so only transmitted ones enter the gain.
pub fn filter_gain(model: &StateSpaceModel, sigma: &DMatrix<f64>, gains: &GainSet) -> Result<FilterGain> {
    let (a, c, g) = (model.a(), model.c(), model.g());
    let p = gains.dim();
    if c.nrows() != p {
        return Err(Error::Dimension {
            first: "gains",
            second: "C",
            detail: format!("{p} components for {} observations", c.nrows()),
        });
    }
    let he = gains.h() * gains.e();
    let f = &he * c;
    let hg = &he * g;
    let mix_rot = symmetrize(&(&f * sigma * f.transpose() + &hg * hg.transpose() + gains.noise_cov()));

    let open_loop = a * sigma * a.transpose() + model.process_noise_cov();
    let active: Vec<usize> = (0..p).filter(|&i| gains.is_active(i)).collect();
    let mut gain = DMatrix::zeros(model.state_dim(), p);
    let next_sigma = if active.is_empty() {
        open_loop
    } else {
        let f_j = f.select_rows(&active);
        let m_j = mix_rot.select_rows(&active).select_columns(&active);
        let condition = condition_number(&m_j);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularInnovationMix { condition });
        }
        let cross = a * sigma * f_j.transpose();
        // gain_j = cross * m_j^{-1}, via the symmetric solve m_j gain_j^T = cross^T
        let gain_t = match m_j.clone().cholesky() {
            Some(ch) => ch.solve(&cross.transpose()),
            None => m_j
                .lu()
                .solve(&cross.transpose())
                .ok_or(Error::SingularInnovationMix { condition })?,
        };
        let gain_j = gain_t.transpose();
        for (col, &i) in active.iter().enumerate() {
            gain.set_column(i, &gain_j.column(col));
        }
        open_loop - &gain_j * cross.transpose()
    };
    let e = gains.e();
    Ok(FilterGain {
        gain,
        mix: symmetrize(&(e.transpose() * mix_rot * e)),
        next_sigma: symmetrize(&next_sigma),
    })
}

/// Predictor update from the decoded reproduction `y_tilde`.
pub fn kalman_update(
    model: &StateSpaceModel,
    filter: &FilterState,
    gains: &GainSet,
    y_tilde: &DVector<f64>,
) -> Result<FilterState> {
    let fg = filter_gain(model, &filter.sigma, gains)?;
    let gamma_tilde = gains.e() * (y_tilde - model.c() * &filter.x_hat);
    Ok(FilterState {
        x_hat: model.a() * &filter.x_hat + &fg.gain * gamma_tilde,
        sigma: fg.next_sigma,
        mix: fg.mix,
    })
}
