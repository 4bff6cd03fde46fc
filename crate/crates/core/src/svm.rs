//! Soft-margin RBF-kernel SVM trained by sequential minimal optimization
//! (two-variable analytic updates, max-violating-pair selection), plus the
//! one-vs-one multiclass reduction used for the 11-class digit problem.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// exp(-gamma ||x1 - x2||^2); in (0, 1].
pub fn rbf_kernel(x1: &[f64], x2: &[f64], gamma: f64) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            got: x2.len(),
        });
    }
    if gamma <= 0.0 {
        return Err(Error::BadGamma { value: gamma });
    }
    let mut d2 = 0.0;
    for (a, b) in x1.iter().zip(x2) {
        let d = a - b;
        d2 += d * d;
    }
    Ok((-gamma * d2).exp())
}

fn rbf_unchecked(x1: &[f64], x2: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for (a, b) in x1.iter().zip(x2) {
        let d = a - b;
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

/// SMO stopping and sizing parameters.
#[derive(Debug, Clone)]
pub struct SmoParams {
    pub c: f64,
    pub gamma: f64,
    /// KKT tolerance; the loop stops when the maximal violating pair gap
    /// drops below it.
    pub tol: f64,
    /// Cap on analytic pair updates. 0 means max(100 * n, 10_000).
    pub max_passes: usize,
    /// Kernel storage budget in bytes; the full matrix is precomputed when
    /// it fits, otherwise rows are computed lazily with FIFO eviction.
    pub cache_bytes: usize,
}

impl SmoParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            tol: 1e-3,
            max_passes: 0,
            cache_bytes: 64 << 20,
        }
    }
}

/// Trained binary machine: support vectors with dual coefficients
/// (alpha_i * y_i), bias, and the kernel/penalty parameters.
#[derive(Debug, Clone)]
pub struct BinarySvm {
    pub(crate) support_vectors: Array2<f64>,
    pub(crate) dual_coeffs: Vec<f64>,
    pub(crate) bias: f64,
    pub(crate) gamma: f64,
    pub(crate) c: f64,
    pub(crate) class_pair: (u8, u8),
    pub(crate) converged: bool,
}

impl BinarySvm {
    pub fn support_vectors(&self) -> ArrayView2<'_, f64> {
        self.support_vectors.view()
    }

    pub fn dual_coeffs(&self) -> &[f64] {
        &self.dual_coeffs
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// (label voted on negative decision values, label voted on positive).
    pub fn class_pair(&self) -> (u8, u8) {
        self.class_pair
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }
}

/// Full SMO result: the pruned machine plus the dense dual solution for
/// diagnostics and KKT auditing.
#[derive(Debug, Clone)]
pub struct SmoOutcome {
    pub svm: BinarySvm,
    /// One alpha per training row, order preserved.
    pub alpha: Vec<f64>,
    /// Dual objective sum(alpha) - 1/2 sum alpha_i alpha_j y_i y_j K_ij.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Kernel row storage: full matrix when it fits the byte budget, lazy rows
/// with FIFO eviction otherwise. Results never depend on what is cached.
struct KernelCache<'a> {
    x: ArrayView2<'a, f64>,
    gamma: f64,
    full: Option<Vec<f64>>,
    rows: Vec<Option<Vec<f64>>>,
    order: std::collections::VecDeque<usize>,
    max_rows: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: ArrayView2<'a, f64>, gamma: f64, budget_bytes: usize) -> Self {
        let n = x.nrows();
        let full_bytes = n.saturating_mul(n).saturating_mul(8);
        if full_bytes <= budget_bytes {
            let mut full = vec![0.0; n * n];
            for i in 0..n {
                let xi = x.row(i);
                let xi = xi.as_slice().expect("row-major");
                for j in i..n {
                    let xj = x.row(j);
                    let k = rbf_unchecked(xi, xj.as_slice().expect("row-major"), gamma);
                    full[i * n + j] = k;
                    full[j * n + i] = k;
                }
            }
            Self {
                x,
                gamma,
                full: Some(full),
                rows: Vec::new(),
                order: std::collections::VecDeque::new(),
                max_rows: 0,
            }
        } else {
            let max_rows = (budget_bytes / (8 * n)).max(2);
            Self {
                x,
                gamma,
                full: None,
                rows: vec![None; n],
                order: std::collections::VecDeque::new(),
                max_rows,
            }
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        let n = self.x.nrows();
        if let Some(full) = &self.full {
            return &full[i * n..(i + 1) * n];
        }
        if self.rows[i].is_none() {
            if self.order.len() >= self.max_rows {
                if let Some(old) = self.order.pop_front() {
                    self.rows[old] = None;
                }
            }
            let xi = self.x.row(i);
            let xi = xi.as_slice().expect("row-major");
            let mut row = vec![0.0; n];
            for (j, slot) in row.iter_mut().enumerate() {
                let xj = self.x.row(j);
                *slot = rbf_unchecked(xi, xj.as_slice().expect("row-major"), self.gamma);
            }
            self.rows[i] = Some(row);
            self.order.push_back(i);
        }
        self.rows[i].as_deref().expect("just inserted")
    }
}

/// Trains a binary soft-margin SVM by SMO. Labels must be +1/-1 and both
/// classes present. Stops when the maximal violating pair satisfies the
/// KKT gap at `tol`; if `max_passes` updates are exhausted first, the best
/// iterate is returned with `converged = false`.
pub fn smo_train(x: ArrayView2<'_, f64>, y: &[f64], params: &SmoParams) -> Result<SmoOutcome> {
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if params.c <= 0.0 {
        return Err(Error::BadPenalty { value: params.c });
    }
    if params.gamma <= 0.0 {
        return Err(Error::BadGamma {
            value: params.gamma,
        });
    }
    let has_pos = y.iter().any(|&v| v > 0.0);
    let has_neg = y.iter().any(|&v| v < 0.0);
    if !has_pos || !has_neg {
        return Err(Error::SingleClassInput);
    }

    let c = params.c;
    let tol = params.tol;
    let max_iter = if params.max_passes == 0 {
        (100 * n).max(10_000)
    } else {
        params.max_passes
    };

    let mut cache = KernelCache::new(x, params.gamma, params.cache_bytes);
    let mut alpha = vec![0.0f64; n];
    // u_i = sum_j alpha_j y_j K_ij (decision value without bias)
    let mut u = vec![0.0f64; n];

    let in_up = |yi: f64, ai: f64| (yi > 0.0 && ai < c) || (yi < 0.0 && ai > 0.0);
    let in_low = |yi: f64, ai: f64| (yi > 0.0 && ai > 0.0) || (yi < 0.0 && ai < c);

    let mut iterations = 0usize;
    let mut converged = false;
    loop {
        // max-violating pair: i maximizes y - u over I_up, j minimizes over I_low
        let mut m_val = f64::NEG_INFINITY;
        let mut m_idx = usize::MAX;
        let mut w_val = f64::INFINITY;
        let mut w_idx = usize::MAX;
        for k in 0..n {
            let g = y[k] - u[k];
            if in_up(y[k], alpha[k]) && g > m_val {
                m_val = g;
                m_idx = k;
            }
            if in_low(y[k], alpha[k]) && g < w_val {
                w_val = g;
                w_idx = k;
            }
        }
        if m_idx == usize::MAX || w_idx == usize::MAX || m_val - w_val <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (i, j) = (m_idx, w_idx);
        let (kii, kjj, kij) = {
            let row_i = cache.row(i);
            let kii = row_i[i];
            let kij = row_i[j];
            let row_j = cache.row(j);
            (kii, row_j[j], kij)
        };
        let eta = (kii + kjj - 2.0 * kij).max(1e-12);

        // analytic step on alpha_j, then clip to the feasible segment
        let e_i = u[i] - y[i];
        let e_j = u[j] - y[j];
        let old_ai = alpha[i];
        let old_aj = alpha[j];
        let mut aj = old_aj + y[j] * (e_i - e_j) / eta;
        let (lo, hi) = if (y[i] > 0.0) != (y[j] > 0.0) {
            ((old_aj - old_ai).max(0.0), (c + old_aj - old_ai).min(c))
        } else {
            ((old_ai + old_aj - c).max(0.0), (old_ai + old_aj).min(c))
        };
        aj = aj.clamp(lo, hi);
        let s = y[i] * y[j];
        let ai = old_ai + s * (old_aj - aj);
        alpha[i] = ai;
        alpha[j] = aj;

        let di = (ai - old_ai) * y[i];
        let dj = (aj - old_aj) * y[j];
        {
            let row_i = cache.row(i).to_vec();
            let row_j = cache.row(j);
            for k in 0..n {
                u[k] += di * row_i[k] + dj * row_j[k];
            }
        }
    }

    // bias: average over free support vectors, else midpoint of the bounds
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for k in 0..n {
        if alpha[k] > 1e-8 && alpha[k] < c - 1e-8 {
            free_sum += y[k] - u[k];
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        let mut m_val = f64::NEG_INFINITY;
        let mut w_val = f64::INFINITY;
        for k in 0..n {
            let g = y[k] - u[k];
            if in_up(y[k], alpha[k]) {
                m_val = m_val.max(g);
            }
            if in_low(y[k], alpha[k]) {
                w_val = w_val.min(g);
            }
        }
        (m_val + w_val) / 2.0
    };

    let objective = alpha.iter().sum::<f64>()
        - 0.5
            * alpha
                .iter()
                .zip(y.iter().zip(&u))
                .map(|(a, (yi, ui))| a * yi * ui)
                .sum::<f64>();

    let kept: Vec<usize> = (0..n).filter(|&k| alpha[k] > 1e-8).collect();
    let dim = x.ncols();
    let mut support_vectors = Array2::zeros((kept.len(), dim));
    let mut dual_coeffs = Vec::with_capacity(kept.len());
    for (row, &k) in kept.iter().enumerate() {
        support_vectors.row_mut(row).assign(&x.row(k));
        dual_coeffs.push(alpha[k] * y[k]);
    }

    Ok(SmoOutcome {
        svm: BinarySvm {
            support_vectors,
            dual_coeffs,
            bias,
            gamma: params.gamma,
            c,
            class_pair: (0, 1),
            converged,
        },
        alpha,
        objective,
        iterations,
        converged,
    })
}

/// sum_i dual_i K(sv_i, x) + bias.
pub fn decision_value(svm: &BinarySvm, x: &[f64]) -> Result<f64> {
    if x.len() != svm.dim() {
        return Err(Error::DimensionMismatch {
            expected: svm.dim(),
            got: x.len(),
        });
    }
    let mut acc = svm.bias;
    for (row, coeff) in svm.support_vectors.rows().into_iter().zip(&svm.dual_coeffs) {
        acc += coeff * rbf_unchecked(row.as_slice().expect("row-major"), x, svm.gamma);
    }
    Ok(acc)
}

/// Checks the three KKT clauses of a trained machine on its training set
/// and returns the maximal violation (0 when all clauses hold exactly).
pub fn kkt_violation(svm: &BinarySvm, x: ArrayView2<'_, f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..x.nrows() {
        let f = decision_value(svm, x.row(k).as_slice().expect("row-major")).expect("dim");
        let margin = y[k] * f;
        let a = alpha[k];
        let violation = if a <= 1e-8 {
            (1.0 - margin).max(0.0)
        } else if a >= svm.c - 1e-8 {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(violation);
    }
    worst
}

/// One machine per unordered class pair. A pair with a missing class
/// degenerates to a constant vote for the present class (or abstains when
/// both are missing).
#[derive(Debug, Clone)]
pub enum PairMachine {
    Trained(BinarySvm),
    Degenerate {
        pair: (u8, u8),
        vote_for: Option<u8>,
    },
}

impl PairMachine {
    pub fn pair(&self) -> (u8, u8) {
        match self {
            PairMachine::Trained(svm) => svm.class_pair,
            PairMachine::Degenerate { pair, .. } => *pair,
        }
    }
}

/// One-vs-one multiclass SVM over a fixed label universe.
#[derive(Debug, Clone)]
pub struct MulticlassSvm {
    pub(crate) machines: Vec<PairMachine>,
    pub(crate) labels: Vec<u8>,
    pub(crate) dim: usize,
}

impl MulticlassSvm {
    pub fn machines(&self) -> &[PairMachine] {
        &self.machines
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Trains one binary machine per unordered pair of `label_universe`
/// entries, each on the subset of rows belonging to that pair. Requires at
/// least two distinct labels present in `y`.
pub fn ovo_train(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    label_universe: &[u8],
    params: &SmoParams,
) -> Result<MulticlassSvm> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let mut labels = label_universe.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let present: std::collections::BTreeSet<u8> = y.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::TooFewClasses {
            got: present.len(),
        });
    }

    let pairs: Vec<(u8, u8)> = labels
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| labels[i + 1..].iter().map(move |&b| (a, b)))
        .collect();

    let machines: Vec<PairMachine> = pairs
        .par_iter()
        .map(|&(neg, pos)| -> Result<PairMachine> {
            let has_neg = present.contains(&neg);
            let has_pos = present.contains(&pos);
            if !(has_neg && has_pos) {
                let vote_for = match (has_neg, has_pos) {
                    (true, false) => Some(neg),
                    (false, true) => Some(pos),
                    _ => None,
                };
                return Ok(PairMachine::Degenerate {
                    pair: (neg, pos),
                    vote_for,
                });
            }
            let idx: Vec<usize> = (0..y.len()).filter(|&k| y[k] == neg || y[k] == pos).collect();
            let mut sub = Array2::zeros((idx.len(), x.ncols()));
            let mut suby = Vec::with_capacity(idx.len());
            for (r, &k) in idx.iter().enumerate() {
                sub.row_mut(r).assign(&x.row(k));
                suby.push(if y[k] == pos { 1.0 } else { -1.0 });
            }
            let mut outcome = smo_train(sub.view(), &suby, params)?;
            outcome.svm.class_pair = (neg, pos);
            Ok(PairMachine::Trained(outcome.svm))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MulticlassSvm {
        machines,
        labels,
        dim: x.ncols(),
    })
}

/// Majority vote over all pair machines. Ties break toward the largest
/// aggregate |decision value| collected by each winning class, then the
/// smallest label.
pub fn ovo_predict(model: &MulticlassSvm, x: &[f64]) -> Result<u8> {
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: x.len(),
        });
    }
    let index_of = |label: u8| model.labels.iter().position(|&l| l == label).expect("label");
    let mut votes = vec![0usize; model.labels.len()];
    let mut margin = vec![0.0f64; model.labels.len()];
    for machine in &model.machines {
        match machine {
            PairMachine::Trained(svm) => {
                let d = decision_value(svm, x)?;
                let winner = if d > 0.0 {
                    svm.class_pair.1
                } else {
                    svm.class_pair.0
                };
                let w = index_of(winner);
                votes[w] += 1;
                margin[w] += d.abs();
            }
            PairMachine::Degenerate { vote_for, .. } => {
                if let Some(label) = vote_for {
                    votes[index_of(*label)] += 1;
                }
            }
        }
    }
    let mut best = 0usize;
    for i in 1..model.labels.len() {
        if votes[i] > votes[best]
            || (votes[i] == votes[best] && margin[i] > margin[best])
        {
            best = i;
        }
    }
    Ok(model.labels[best])
}
