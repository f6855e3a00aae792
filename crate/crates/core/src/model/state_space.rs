use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_rank, min_symmetric_eigenvalue};

/// Partially observed linear Gauss-Markov source
///
/// ```text
/// X_{t+1} = A X_t + B W_t
/// Y_t     = C X_t + G V_t
/// ```
///
/// with `W_t`, `V_t` standard white Gaussian and `X_0 ~ N(x0_mean, x0_cov)`.
/// Dimensions are checked at construction; the remaining invariants are
/// reported by [`validate_model`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    g: DMatrix<f64>,
    x0_mean: DVector<f64>,
    x0_cov: DMatrix<f64>,
}

/// A named invariant violation found by [`validate_model`].
#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    GSingular { determinant: f64 },
    InitialCovarianceNotPsd { min_eigenvalue: f64 },
    Undetectable { eigenvalue: Complex<f64> },
    Unstabilizable { eigenvalue: Complex<f64> },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::GSingular { determinant } => {
                write!(f, "G singular (det = {determinant:e})")
            }
            Diagnostic::InitialCovarianceNotPsd { min_eigenvalue } => write!(
                f,
                "x0_cov not positive semidefinite (min eigenvalue {min_eigenvalue:e})"
            ),
            Diagnostic::Undetectable { eigenvalue } => write!(
                f,
                "undetectable pair (C, A): unobservable mode {} + {}i",
                eigenvalue.re, eigenvalue.im
            ),
            Diagnostic::Unstabilizable { eigenvalue } => write!(
                f,
                "unstabilizable pair (A, B): unreachable mode {} + {}i",
                eigenvalue.re, eigenvalue.im
            ),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0_cov: Option<Vec<Vec<f64>>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &'static str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension {
            first: name,
            second: name,
            detail: "ragged rows".into(),
        });
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        g: DMatrix<f64>,
        x0_mean: DVector<f64>,
        x0_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let mismatch = |first, second, detail: String| Error::Dimension {
            first,
            second,
            detail,
        };
        let m = a.nrows();
        if m == 0 || a.ncols() != m {
            return Err(mismatch("A", "A", format!("A must be square and nonempty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != m {
            return Err(mismatch("A", "B", format!("B has {} rows, expected {m}", b.nrows())));
        }
        if c.ncols() != m {
            return Err(mismatch("A", "C", format!("C has {} columns, expected {m}", c.ncols())));
        }
        let p = c.nrows();
        if p == 0 {
            return Err(mismatch("C", "C", "C has no rows".into()));
        }
        if g.nrows() != p || g.ncols() != p {
            return Err(mismatch("C", "G", format!("G is {}x{}, expected {p}x{p}", g.nrows(), g.ncols())));
        }
        if x0_mean.len() != m {
            return Err(mismatch("A", "x0_mean", format!("x0_mean has length {}, expected {m}", x0_mean.len())));
        }
        if x0_cov.nrows() != m || x0_cov.ncols() != m {
            return Err(mismatch("A", "x0_cov", format!("x0_cov is {}x{}, expected {m}x{m}", x0_cov.nrows(), x0_cov.ncols())));
        }
        Ok(Self { a, b, c, g, x0_mean, x0_cov })
    }

    /// Model with a zero-mean, zero-covariance initial state.
    pub fn from_system(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        g: DMatrix<f64>,
    ) -> Result<Self> {
        let m = a.nrows();
        Self::new(a, b, c, g, DVector::zeros(m), DMatrix::zeros(m, m))
    }

    /// Scalar model `x' = a x + b w`, `y = c x + g v` with `X_0 = 0`.
    pub fn scalar(a: f64, b: f64, c: f64, g: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self::from_system(s(a), s(b), s(c), s(g)).expect("scalar dimensions are consistent")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, ModelParseError> {
        let raw: RawModel = serde_json::from_str(text)?;
        Ok(Self::from_raw(raw)?)
    }

    pub fn from_json_value(value: serde_json::Value) -> std::result::Result<Self, ModelParseError> {
        let raw: RawModel = serde_json::from_value(value)?;
        Ok(Self::from_raw(raw)?)
    }

    fn from_raw(raw: RawModel) -> Result<Self> {
        let a = matrix_from_rows(&raw.a, "A")?;
        let m = a.nrows();
        let x0_mean = raw.x0_mean.map_or_else(|| DVector::zeros(m), DVector::from_vec);
        let x0_cov = match raw.x0_cov {
            Some(rows) => matrix_from_rows(&rows, "x0_cov")?,
            None => DMatrix::zeros(m, m),
        };
        Self::new(
            a,
            matrix_from_rows(&raw.b, "B")?,
            matrix_from_rows(&raw.c, "C")?,
            matrix_from_rows(&raw.g, "G")?,
            x0_mean,
            x0_cov,
        )
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let raw = RawModel {
            a: rows_of(&self.a),
            b: rows_of(&self.b),
            c: rows_of(&self.c),
            g: rows_of(&self.g),
            x0_mean: Some(self.x0_mean.iter().copied().collect()),
            x0_cov: Some(rows_of(&self.x0_cov)),
        };
        serde_json::to_value(raw).expect("plain numeric arrays serialize")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
    pub fn x0_mean(&self) -> &DVector<f64> {
        &self.x0_mean
    }
    pub fn x0_cov(&self) -> &DMatrix<f64> {
        &self.x0_cov
    }

    /// State dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    /// Process noise dimension `k`.
    pub fn noise_dim(&self) -> usize {
        self.b.ncols()
    }
    /// Observation dimension `p`.
    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn process_noise_cov(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
    }

    pub fn observation_noise_cov(&self) -> DMatrix<f64> {
        &self.g * self.g.transpose()
    }

    /// Replace the initial law.
    pub fn with_initial(mut self, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = self.state_dim();
        if mean.len() != m || cov.nrows() != m || cov.ncols() != m {
            return Err(Error::Dimension {
                first: "A",
                second: "x0",
                detail: format!("initial law must have dimension {m}"),
            });
        }
        self.x0_mean = mean;
        self.x0_cov = cov;
        Ok(self)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelParseError {
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] Error),
}

/// PBH test: for every eigenvalue `l` of `A` with `|l| >= 1`, the stacked
/// matrix `[A - lI; C]` (detectability) or `[A - lI, B]` (stabilizability)
/// must have full rank `m`.
fn pbh_failures(a: &DMatrix<f64>, other: &DMatrix<f64>, stack_rows: bool) -> Vec<Complex<f64>> {
    let m = a.nrows();
    let eigs = a.complex_eigenvalues();
    let mut failures: Vec<Complex<f64>> = Vec::new();
    for &l in eigs.iter() {
        if l.norm() < 1.0 - 1e-12 {
            continue;
        }
        let shifted = DMatrix::from_fn(m, m, |i, j| {
            let v = Complex::new(a[(i, j)], 0.0);
            if i == j {
                v - l
            } else {
                v
            }
        });
        let o = other.map(|x| Complex::new(x, 0.0));
        let stacked = if stack_rows {
            let mut s = DMatrix::zeros(m + o.nrows(), m);
            s.view_mut((0, 0), (m, m)).copy_from(&shifted);
            s.view_mut((m, 0), (o.nrows(), m)).copy_from(&o);
            s
        } else {
            let mut s = DMatrix::zeros(m, m + o.ncols());
            s.view_mut((0, 0), (m, m)).copy_from(&shifted);
            s.view_mut((0, m), (m, o.ncols())).copy_from(&o);
            s
        };
        if complex_rank(&stacked, 1e-9) < m && !failures.iter().any(|f| (f - l).norm() < 1e-9) {
            failures.push(l);
        }
    }
    failures
}

/// Check the model invariants; an empty list means every invariant holds.
pub fn validate_model(model: &StateSpaceModel) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let det = model.g.determinant();
    if !(det.abs() > 1e-12) {
        diags.push(Diagnostic::GSingular { determinant: det });
    }
    let min_eig = min_symmetric_eigenvalue(&model.x0_cov);
    if !(min_eig >= -1e-12) {
        diags.push(Diagnostic::InitialCovarianceNotPsd {
            min_eigenvalue: min_eig,
        });
    }
    for eigenvalue in pbh_failures(&model.a, &model.c, true) {
        diags.push(Diagnostic::Undetectable { eigenvalue });
    }
    // rank of sqrt(BB^T) equals rank of B, so B is tested directly
    for eigenvalue in pbh_failures(&model.a, &model.b, false) {
        diags.push(Diagnostic::Unstabilizable { eigenvalue });
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn stable_scalar_model_is_clean() {
        let model = StateSpaceModel::scalar(0.5, 1.0, 1.0, 1.0);
        assert!(validate_model(&model).is_empty());
    }

    #[test]
    fn singular_g_is_reported() {
        let model = StateSpaceModel::scalar(0.5, 1.0, 1.0, 0.0);
        let diags = validate_model(&model);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].to_string().starts_with("G singular"));
    }

    #[test]
    fn unstable_unobserved_mode_is_undetectable() {
        let model = StateSpaceModel::scalar(2.0, 1.0, 0.0, 1.0);
        let diags = validate_model(&model);
        assert!(diags
            .iter()
            .any(|d| d.to_string().starts_with("undetectable pair")));
        assert!(!diags
            .iter()
            .any(|d| matches!(d, Diagnostic::Unstabilizable { .. })));
    }

    #[test]
    fn unstable_unreached_mode_is_unstabilizable() {
        let model = StateSpaceModel::scalar(1.5, 0.0, 1.0, 1.0);
        let diags = validate_model(&model);
        assert_eq!(diags.len(), 1);
        assert!(matches!(diags[0], Diagnostic::Unstabilizable { .. }));
    }

    #[test]
    fn complex_unstable_mode_observed_through_one_coordinate() {
        // rotation scaled by 1.1; C sees the first coordinate, which mixes both
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.1, 1.1, 0.0]);
        let b = DMatrix::identity(2, 2);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let model = StateSpaceModel::from_system(a, b, c, m1(1.0)).unwrap();
        assert!(validate_model(&model).is_empty());
    }

    #[test]
    fn dimension_mismatch_names_the_pair() {
        let err = StateSpaceModel::from_system(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            m1(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension { first: "A", second: "C", .. }));
    }

    #[test]
    fn indefinite_initial_covariance_is_reported() {
        let model = StateSpaceModel::scalar(0.5, 1.0, 1.0, 1.0)
            .with_initial(DVector::zeros(1), m1(-1.0))
            .unwrap();
        let diags = validate_model(&model);
        assert!(matches!(diags[0], Diagnostic::InitialCovarianceNotPsd { .. }));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"A": [[0.9, 0.1], [0.0, 0.5]], "B": [[1.0], [0.5]],
                       "C": [[1.0, 0.0]], "G": [[1.0]],
                       "x0_mean": [1.0, 2.0], "x0_cov": [[1.0, 0.0], [0.0, 1.0]]}"#;
        let model = StateSpaceModel::from_json(text).unwrap();
        assert_eq!(model.a()[(0, 1)], 0.1);
        assert_eq!(model.b()[(1, 0)], 0.5);
        assert_eq!(model.x0_mean()[1], 2.0);
        let back = StateSpaceModel::from_json_value(model.to_json_value()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn unknown_json_keys_are_rejected() {
        let text = r#"{"A": [[1]], "B": [[1]], "C": [[1]], "G": [[1]], "Q": 3}"#;
        assert!(StateSpaceModel::from_json(text).is_err());
    }
}
