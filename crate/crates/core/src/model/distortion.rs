use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-letter distortion `rho(x, y)` applied along the shift, so a
/// sequence distortion is `sum_i rho(x_i, y_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistortionSpec {
    /// `table[x][y]` over finite alphabets.
    SingleLetterTable { table: Vec<Vec<f64>> },
    /// `(x - y)^2`; on finite alphabets the symbol indices are used as values.
    SquaredError,
}

impl DistortionSpec {
    /// Validated table distortion.
    pub fn table(table: Vec<Vec<f64>>) -> Result<Self> {
        let spec = DistortionSpec::SingleLetterTable { table };
        spec.validate()?;
        Ok(spec)
    }

    /// Hamming distortion on a `k`-letter alphabet.
    pub fn hamming(k: usize) -> Self {
        let table = (0..k)
            .map(|x| (0..k).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
            .collect();
        DistortionSpec::SingleLetterTable { table }
    }

    pub fn validate(&self) -> Result<()> {
        if let DistortionSpec::SingleLetterTable { table } = self {
            let cols = table.first().map_or(0, Vec::len);
            if table.is_empty() || cols == 0 {
                return Err(Error::Distortion("table must be nonempty".into()));
            }
            if table.iter().any(|r| r.len() != cols) {
                return Err(Error::Distortion("table rows have different lengths".into()));
            }
            if table.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Distortion(
                    "table entries must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Check the distortion can be evaluated on `|X| x |Y|` symbols.
    pub fn check_alphabets(&self, x_size: usize, y_size: usize) -> Result<()> {
        self.validate()?;
        if let DistortionSpec::SingleLetterTable { table } = self {
            if table.len() != x_size || table[0].len() != y_size {
                return Err(Error::Distortion(format!(
                    "table is {}x{}, alphabets are {x_size}x{y_size}",
                    table.len(),
                    table[0].len()
                )));
            }
        }
        Ok(())
    }

    /// Reproduction alphabet size implied by the table, if any.
    pub fn reproduction_size(&self) -> Option<usize> {
        match self {
            DistortionSpec::SingleLetterTable { table } => table.first().map(Vec::len),
            DistortionSpec::SquaredError => None,
        }
    }

    /// `rho(x, y)` on symbol indices.
    #[inline]
    pub fn rho(&self, x: usize, y: usize) -> f64 {
        match self {
            DistortionSpec::SingleLetterTable { table } => table[x][y],
            DistortionSpec::SquaredError => {
                let d = x as f64 - y as f64;
                d * d
            }
        }
    }

    /// `rho(x, y)` on real values; only defined for squared error.
    pub fn rho_real(&self, x: f64, y: f64) -> Result<f64> {
        match self {
            DistortionSpec::SquaredError => Ok((x - y) * (x - y)),
            DistortionSpec::SingleLetterTable { .. } => Err(Error::Distortion(
                "table distortion needs symbol sequences".into(),
            )),
        }
    }
}

/// `d(x^n, y^n) = sum_i rho(x_i, y_i)` over symbol sequences. Divide by the
/// length for a per-symbol value.
pub fn evaluate_distortion(spec: &DistortionSpec, x: &[usize], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    spec.validate()?;
    if let DistortionSpec::SingleLetterTable { table } = spec {
        let out_of_range = x.iter().any(|&a| a >= table.len())
            || y.iter().any(|&b| b >= table[0].len());
        if out_of_range {
            return Err(Error::Distortion("symbol outside the table".into()));
        }
    }
    Ok(x.iter().zip(y).map(|(&a, &b)| spec.rho(a, b)).sum())
}

/// Real-valued counterpart of [`evaluate_distortion`].
pub fn evaluate_distortion_real(spec: &DistortionSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    x.iter()
        .zip(y)
        .map(|(&a, &b)| spec.rho_real(a, b))
        .sum()
}
