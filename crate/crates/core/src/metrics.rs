//! DTW alignment over digit strings with 0/1 mismatch costs, and the two
//! evaluation metrics built on it: per-digit accuracy from alignment cost
//! and exact-sequence CAPTCHA accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A string of digits 0-9. Ground truths are 4-6 digits long; predictions
/// may be empty (e.g. solving a silent clip).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DigitSequence(Vec<u8>);

impl DigitSequence {
    pub fn new(digits: Vec<u8>) -> Result<Self> {
        for &d in &digits {
            if d > 9 {
                return Err(Error::DigitOutOfRange { digit: d });
            }
        }
        Ok(Self(digits))
    }

    /// Parses "04648"-style strings. External inputs are capped at 20
    /// digits.
    pub fn parse(s: &str) -> Result<Self> {
        if s.len() > 20 {
            return Err(Error::InvalidCaptchaSpec {
                reason: format!("digit string longer than 20: {s:?}"),
            });
        }
        let mut digits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            let d = ch.to_digit(10).ok_or(Error::InvalidCaptchaSpec {
                reason: format!("non-digit character {ch:?}"),
            })?;
            digits.push(d as u8);
        }
        Ok(Self(digits))
    }

    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for DigitSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// 0 iff the two digit values are equal, else 1.
pub fn dirac_cost(a: u8, b: u8) -> u32 {
    u32::from(a != b)
}

/// Outcome of aligning a truth/prediction pair.
///
/// `cost_matrix[i][j]` is the accumulated minimal cost of aligning
/// `truth[..=i]` with `pred[..=j]`; the path runs from (0, 0) to
/// (n-1, m-1) in steps of (+1,+1), (+1,0) or (0,+1). For an empty input
/// the matrix and path are empty and `total_cost` is the length of the
/// non-empty side.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub cost_matrix: Vec<Vec<u32>>,
    pub path: Vec<(usize, usize)>,
    pub total_cost: u32,
    /// Mean local cost along the backtraced path (total_cost / path length).
    pub path_mean_cost: f64,
}

/// Dynamic-time-warping alignment of two digit sequences under the 0/1
/// mismatch cost. Backtrace prefers diagonal, then vertical (truth index
/// decreases), then horizontal, on ties.
pub fn dtw_align(truth: &DigitSequence, pred: &DigitSequence) -> AlignmentResult {
    let a = truth.digits();
    let b = pred.digits();
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return AlignmentResult {
            cost_matrix: Vec::new(),
            path: Vec::new(),
            total_cost: (n + m) as u32,
            path_mean_cost: 0.0,
        };
    }

    let mut ell = vec![vec![0u32; m]; n];
    ell[0][0] = dirac_cost(a[0], b[0]);
    for j in 1..m {
        ell[0][j] = ell[0][j - 1] + dirac_cost(a[0], b[j]);
    }
    for i in 1..n {
        ell[i][0] = ell[i - 1][0] + dirac_cost(a[i], b[0]);
    }
    for i in 1..n {
        for j in 1..m {
            let best = ell[i - 1][j - 1].min(ell[i - 1][j]).min(ell[i][j - 1]);
            ell[i][j] = dirac_cost(a[i], b[j]) + best;
        }
    }

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let diag = ell[i - 1][j - 1];
            let vert = ell[i - 1][j];
            let horiz = ell[i][j - 1];
            let best = diag.min(vert).min(horiz);
            if diag == best {
                i -= 1;
                j -= 1;
            } else if vert == best {
                i -= 1;
            } else {
                j -= 1;
            }
        } else if i > 0 {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();

    let total_cost = ell[n - 1][m - 1];
    AlignmentResult {
        path_mean_cost: total_cost as f64 / path.len() as f64,
        cost_matrix: ell,
        path,
        total_cost,
    }
}

/// Per-digit accuracy over (truth, prediction) pairs:
/// (sum of truth lengths - sum of per-pair min(alignment cost, truth length))
/// divided by the sum of truth lengths.
pub fn digit_accuracy(pairs: &[(DigitSequence, DigitSequence)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput { what: "pair list" });
    }
    let mut total_len = 0u64;
    let mut total_cost = 0u64;
    for (truth, pred) in pairs {
        let cost = dtw_align(truth, pred).total_cost as u64;
        let len = truth.len() as u64;
        total_len += len;
        total_cost += cost.min(len);
    }
    if total_len == 0 {
        return Err(Error::EmptyInput {
            what: "truth digits",
        });
    }
    Ok((total_len - total_cost) as f64 / total_len as f64)
}

/// Fraction of pairs recognized exactly: equal length and elementwise
/// equality.
pub fn captcha_accuracy(pairs: &[(DigitSequence, DigitSequence)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput { what: "pair list" });
    }
    let exact = pairs.iter().filter(|(t, p)| t == p).count();
    Ok(exact as f64 / pairs.len() as f64)
}

/// Per-file evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileOutcome {
    pub truth: String,
    pub prediction: String,
    pub cost: u32,
    pub exact_match: bool,
}

/// Aggregate evaluation over a test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub digit_accuracy: f64,
    pub captcha_accuracy: f64,
    pub per_file: Vec<FileOutcome>,
}

impl EvalReport {
    /// Builds the report from (truth, prediction) pairs.
    pub fn from_pairs(pairs: &[(DigitSequence, DigitSequence)]) -> Result<Self> {
        let digit_accuracy = digit_accuracy(pairs)?;
        let captcha_accuracy = captcha_accuracy(pairs)?;
        let per_file = pairs
            .iter()
            .map(|(t, p)| FileOutcome {
                truth: t.to_string(),
                prediction: p.to_string(),
                cost: dtw_align(t, p).total_cost,
                exact_match: t == p,
            })
            .collect();
        Ok(Self {
            digit_accuracy,
            captcha_accuracy,
            per_file,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
