use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::PROB_TOL;

pub const MAX_HORIZON: usize = 6;
pub const MAX_REPRODUCTION_ALPHABET: usize = 8;
/// Upper bound on `(|X| |Y|)^(n+1)`, the size of the enumerated joint law.
const MAX_JOINT_ENTRIES: usize = 1 << 24;

/// Mixed-radix encoding of symbol histories. A history `(s_0, ..., s_j)`
/// maps to `((s_0 * r + s_1) * r + ...) * r + s_j`, so appending a symbol
/// is `idx * r + s` and the parent is `idx / r`.
#[derive(Clone, Copy, Debug)]
pub struct HistoryIndexer {
    pub radix: usize,
}

impl HistoryIndexer {
    pub fn index(&self, symbols: &[usize]) -> usize {
        symbols.iter().fold(0, |acc, &s| acc * self.radix + s)
    }

    pub fn decode(&self, mut idx: usize, len: usize) -> Vec<usize> {
        let mut out = vec![0; len];
        for slot in out.iter_mut().rev() {
            *slot = idx % self.radix;
            idx /= self.radix;
        }
        out
    }

    pub fn count(&self, len: usize) -> usize {
        self.radix.pow(len as u32)
    }
}

/// Causal reproduction kernels `P(y_i | y^{i-1}, x^i)` for `i = 0..=n`.
///
/// Step `i` is a flat table with one row per `(y^{i-1}, x^i)` pair: rows are
/// grouped by reproduction history (the tree level), then by source prefix.
/// The row index never involves `x_{i+1..n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct ReproductionPolicy {
    x_size: usize,
    y_size: usize,
    horizon: usize,
    kernels: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    x_size: usize,
    y_size: usize,
    horizon: usize,
    kernels: Vec<Vec<f64>>,
}

impl TryFrom<RawPolicy> for ReproductionPolicy {
    type Error = Error;
    fn try_from(raw: RawPolicy) -> Result<Self> {
        Self::from_kernels(raw.x_size, raw.y_size, raw.horizon, raw.kernels)
    }
}

impl From<ReproductionPolicy> for RawPolicy {
    fn from(p: ReproductionPolicy) -> Self {
        RawPolicy {
            x_size: p.x_size,
            y_size: p.y_size,
            horizon: p.horizon,
            kernels: p.kernels,
        }
    }
}

/// Reject instances whose history trees or joint law exceed the caps.
pub(crate) fn check_capacity(x_size: usize, y_size: usize, horizon: usize) -> Result<()> {
    if horizon > MAX_HORIZON {
        return Err(Error::Capacity(format!(
            "horizon n = {horizon} exceeds the cap n <= {MAX_HORIZON}"
        )));
    }
    if y_size == 0 || y_size > MAX_REPRODUCTION_ALPHABET {
        return Err(Error::Capacity(format!(
            "reproduction alphabet |Y| = {y_size} outside 1..={MAX_REPRODUCTION_ALPHABET}"
        )));
    }
    if x_size == 0 {
        return Err(Error::Capacity("source alphabet is empty".into()));
    }
    let entries = (x_size * y_size)
        .checked_pow(horizon as u32 + 1)
        .filter(|&e| e <= MAX_JOINT_ENTRIES);
    if entries.is_none() {
        return Err(Error::Capacity(format!(
            "joint law (|X||Y|)^(n+1) with |X| = {x_size}, |Y| = {y_size}, n = {horizon} exceeds {MAX_JOINT_ENTRIES} entries"
        )));
    }
    Ok(())
}

impl ReproductionPolicy {
    /// Every kernel uniform over `Y`, independent of `x`.
    pub fn uniform(x_size: usize, y_size: usize, horizon: usize) -> Result<Self> {
        Self::from_fn(x_size, y_size, horizon, |_, _, _| vec![1.0; y_size])
    }

    /// Build from a closure `f(step, y^{i-1}, x^i)` returning unnormalized
    /// nonnegative weights over `Y`; each row is normalized.
    pub fn from_fn<F>(x_size: usize, y_size: usize, horizon: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, &[usize], &[usize]) -> Vec<f64>,
    {
        check_capacity(x_size, y_size, horizon)?;
        let xi = HistoryIndexer { radix: x_size };
        let yi = HistoryIndexer { radix: y_size };
        let mut kernels = Vec::with_capacity(horizon + 1);
        for step in 0..=horizon {
            let n_y = yi.count(step);
            let n_x = xi.count(step + 1);
            let mut table = Vec::with_capacity(n_y * n_x * y_size);
            for yh in 0..n_y {
                let y_hist = yi.decode(yh, step);
                for xh in 0..n_x {
                    let x_hist = xi.decode(xh, step + 1);
                    let w = f(step, &y_hist, &x_hist);
                    if w.len() != y_size {
                        return Err(Error::Probability {
                            what: format!("kernel step {step}"),
                            detail: format!("row has {} entries, expected {y_size}", w.len()),
                        });
                    }
                    let sum: f64 = w.iter().sum();
                    if !(sum > 0.0) || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::Probability {
                            what: format!("kernel step {step}, y^{{i-1}} = {y_hist:?}, x^i = {x_hist:?}"),
                            detail: "weights must be finite, nonnegative and not all zero".into(),
                        });
                    }
                    table.extend(w.iter().map(|v| v / sum));
                }
            }
            kernels.push(table);
        }
        Ok(Self {
            x_size,
            y_size,
            horizon,
            kernels,
        })
    }

    /// Wrap precomputed flat kernel tables (layout as in the type docs).
    pub fn from_kernels(
        x_size: usize,
        y_size: usize,
        horizon: usize,
        kernels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_capacity(x_size, y_size, horizon)?;
        let policy = Self {
            x_size,
            y_size,
            horizon,
            kernels,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.len() != self.horizon + 1 {
            return Err(Error::Probability {
                what: "policy".into(),
                detail: format!("expected {} kernels, got {}", self.horizon + 1, self.kernels.len()),
            });
        }
        for step in 0..=self.horizon {
            let expected = self.rows(step) * self.y_size;
            let table = &self.kernels[step];
            if table.len() != expected {
                return Err(Error::Probability {
                    what: format!("kernel step {step}"),
                    detail: format!("expected {expected} entries, got {}", table.len()),
                });
            }
            for (r, row) in table.chunks(self.y_size).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::Probability {
                        what: format!("kernel step {step}, row {r}"),
                        detail: format!("not a probability vector (sum {sum})"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }
    pub fn y_size(&self) -> usize {
        self.y_size
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn x_indexer(&self) -> HistoryIndexer {
        HistoryIndexer { radix: self.x_size }
    }
    pub fn y_indexer(&self) -> HistoryIndexer {
        HistoryIndexer { radix: self.y_size }
    }

    /// Number of `(y^{i-1}, x^i)` rows at `step`.
    pub fn rows(&self, step: usize) -> usize {
        self.y_indexer().count(step) * self.x_indexer().count(step + 1)
    }

    #[inline]
    pub(crate) fn row_offset(&self, step: usize, y_hist: usize, x_hist: usize) -> usize {
        (y_hist * self.x_indexer().count(step + 1) + x_hist) * self.y_size
    }

    /// Row for encoded histories.
    #[inline]
    pub fn row(&self, step: usize, y_hist: usize, x_hist: usize) -> &[f64] {
        let o = self.row_offset(step, y_hist, x_hist);
        &self.kernels[step][o..o + self.y_size]
    }

    /// `P(. | y^{i-1}, x^i)` where `x` may be the whole source sequence;
    /// only `x[..=step]` is read.
    pub fn conditional(&self, step: usize, y_hist: &[usize], x: &[usize]) -> &[f64] {
        assert_eq!(y_hist.len(), step, "reproduction history must have length {step}");
        assert!(x.len() > step, "source sequence must cover step {step}");
        let yh = self.y_indexer().index(y_hist);
        let xh = self.x_indexer().index(&x[..=step]);
        self.row(step, yh, xh)
    }

    pub fn prob(&self, step: usize, y_hist: &[usize], x: &[usize], y: usize) -> f64 {
        self.conditional(step, y_hist, x)[y]
    }

    pub fn kernel(&self, step: usize) -> &[f64] {
        &self.kernels[step]
    }

    pub(crate) fn kernel_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.kernels[step]
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }

    /// Largest absolute entry difference to a policy of the same shape.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.kernels
            .iter()
            .flatten()
            .zip(other.kernels.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `P(y^n | x^n)` for full sequences.
    pub fn sequence_prob(&self, y: &[usize], x: &[usize]) -> f64 {
        (0..=self.horizon)
            .map(|i| self.prob(i, &y[..i], x, y[i]))
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn history_indexer_round_trips() {
        let h = HistoryIndexer { radix: 3 };
        let s = [2, 0, 1, 2];
        assert_eq!(h.decode(h.index(&s), 4), s);
        assert_eq!(h.index(&s[..3]), h.index(&s) / 3);
    }

    #[test]
    fn capacity_caps_are_enforced() {
        assert!(matches!(ReproductionPolicy::uniform(2, 2, 7), Err(Error::Capacity(_))));
        assert!(matches!(ReproductionPolicy::uniform(2, 9, 1), Err(Error::Capacity(_))));
        assert!(matches!(ReproductionPolicy::uniform(40, 8, 6), Err(Error::Capacity(_))));
        assert!(ReproductionPolicy::uniform(2, 8, 3).is_ok());
        assert!(ReproductionPolicy::uniform(2, 2, 6).is_ok());
    }

    #[test]
    fn from_kernels_rejects_unnormalized_rows() {
        let err = ReproductionPolicy::from_kernels(2, 2, 0, vec![vec![0.5, 0.5, 0.6, 0.4 + 1e-9]]);
        assert!(err.is_err());
    }

    #[test]
    fn sequence_probabilities_sum_to_one() {
        let p = ReproductionPolicy::from_fn(2, 3, 2, |i, yh, xh| {
            (0..3).map(|y| 1.0 + (i + y + yh.len() + xh.iter().sum::<usize>()) as f64).collect()
        })
        .unwrap();
        let x = [1, 0, 1];
        let mut total = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    total += p.sequence_prob(&[a, b, c], &x);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn random_rows_normalize(seed_weights in proptest::collection::vec(0.001f64..10.0, 64)) {
            let mut it = seed_weights.into_iter().cycle();
            let p = ReproductionPolicy::from_fn(2, 2, 2, |_, _, _| vec![it.next().unwrap(), it.next().unwrap()]).unwrap();
            for step in 0..=2 {
                for row in p.kernel(step).chunks(2) {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= PROB_TOL);
                }
            }
        }

        #[test]
        fn json_round_trip_is_bit_exact(seed_weights in proptest::collection::vec(1e-6f64..1e3, 32)) {
            let mut it = seed_weights.into_iter().cycle();
            let p = ReproductionPolicy::from_fn(2, 3, 1, |_, _, _| (0..3).map(|_| it.next().unwrap()).collect()).unwrap();
            let text = serde_json::to_string(&p).unwrap();
            let back: ReproductionPolicy = serde_json::from_str(&text).unwrap();
            for (a, b) in p.kernels().iter().flatten().zip(back.kernels().iter().flatten()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
