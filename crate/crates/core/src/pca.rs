//! PCA fitted on training feature rows. The covariance eigendecomposition
//! is a cyclic Jacobi solve, so the module has no linear-algebra
//! dependency; retention keeps the smallest component count whose
//! explained-variance share meets the target.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Eigenvalues below `RANK_EPS * max` are treated as exact zeros, so
/// rank-deficient data retains exactly rank components at fraction 1.0.
const RANK_EPS: f64 = 1e-12;

/// Full eigendecomposition of a training set's covariance, reusable across
/// several variance targets (the grid search derives one `PcaModel` per
/// target from a single basis).
#[derive(Debug, Clone)]
pub struct EigenBasis {
    mean: Array1<f64>,
    /// Descending, clipped at zero; length d.
    eigenvalues: Vec<f64>,
    /// Row i is the eigenvector for eigenvalues[i].
    vectors: Array2<f64>,
    total_variance: f64,
    /// Prefix sums of `eigenvalues`, shared with k-selection so that the
    /// full-retention fraction is exactly 1.0.
    cumulative: Vec<f64>,
}

impl EigenBasis {
    /// Decomposes the sample covariance (divisor n-1) of `x` (n rows, d
    /// columns). Sign convention: each eigenvector's entry of largest
    /// magnitude is positive; equal eigenvalues keep ascending original
    /// index order.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        let n = x.nrows();
        let d = x.ncols();
        if n < 2 {
            return Err(Error::PcaTooFewRows { rows: n });
        }
        let mean = x.mean_axis(Axis(0)).expect("n >= 2");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

        let (mut vals, vecs) = jacobi_eigh(cov.as_slice().expect("contiguous"), d);
        for v in &mut vals {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let max = vals.iter().cloned().fold(0.0f64, f64::max);
        for v in &mut vals {
            if *v < max * RANK_EPS {
                *v = 0.0;
            }
        }

        // stable descending sort with ascending-index tie-break
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap().then(a.cmp(&b)));

        let eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        let mut vectors = Array2::zeros((d, d));
        for (row, &col) in order.iter().enumerate() {
            // eigenvector `col` is a column of the accumulated rotation matrix
            let mut max_abs = 0.0f64;
            let mut max_sign = 1.0f64;
            for p in 0..d {
                let e = vecs[p * d + col];
                if e.abs() > max_abs {
                    max_abs = e.abs();
                    max_sign = if e >= 0.0 { 1.0 } else { -1.0 };
                }
            }
            for p in 0..d {
                vectors[(row, p)] = vecs[p * d + col] * max_sign;
            }
        }

        let mut cumulative = Vec::with_capacity(d);
        let mut acc = 0.0;
        for &v in &eigenvalues {
            acc += v;
            cumulative.push(acc);
        }
        let total_variance = *cumulative.last().expect("d >= 1");
        if total_variance <= 0.0 {
            return Err(Error::PcaZeroVariance);
        }
        Ok(Self {
            mean,
            eigenvalues,
            vectors,
            total_variance,
            cumulative,
        })
    }
}

/// Fitted PCA: mean, k orthonormal component rows, and their eigenvalues.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: Array1<f64>,
    components: Array2<f64>,
    eigenvalues: Vec<f64>,
    var_fraction: f64,
    total_variance: f64,
    achieved_fraction: f64,
}

impl PcaModel {
    /// Selects k = smallest count whose cumulative eigenvalue share meets
    /// `var_fraction` and materializes the reduced model.
    pub fn from_basis(basis: &EigenBasis, var_fraction: f64) -> Result<Self> {
        if !(var_fraction > 0.0 && var_fraction <= 1.0) {
            return Err(Error::BadVarFraction {
                value: var_fraction,
            });
        }
        let d = basis.eigenvalues.len();
        let mut k = d;
        for (i, &cum) in basis.cumulative.iter().enumerate() {
            if cum / basis.total_variance >= var_fraction {
                k = i + 1;
                break;
            }
        }
        let components = basis.vectors.slice(ndarray::s![..k, ..]).to_owned();
        Ok(Self {
            mean: basis.mean.clone(),
            components,
            eigenvalues: basis.eigenvalues[..k].to_vec(),
            var_fraction,
            total_variance: basis.total_variance,
            achieved_fraction: basis.cumulative[k - 1] / basis.total_variance,
        })
    }

    /// Assembles a model from already-validated parts (model file loading).
    pub(crate) fn from_parts(
        mean: Array1<f64>,
        components: Array2<f64>,
        eigenvalues: Vec<f64>,
        var_fraction: f64,
        total_variance: f64,
        achieved_fraction: f64,
    ) -> Self {
        Self {
            mean,
            components,
            eigenvalues,
            var_fraction,
            total_variance,
            achieved_fraction,
        }
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    pub fn var_fraction(&self) -> f64 {
        self.var_fraction
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn achieved_fraction(&self) -> f64 {
        self.achieved_fraction
    }
}

/// Fits a PCA model on `x` directly. Grid searches should fit an
/// `EigenBasis` once and derive models per target instead.
pub fn fit_pca(x: ArrayView2<'_, f64>, var_fraction: f64) -> Result<PcaModel> {
    PcaModel::from_basis(&EigenBasis::fit(x)?, var_fraction)
}

/// Projects a d-vector onto the k retained components: components . (x - mean).
pub fn project(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    let mut out = vec![0.0; model.k()];
    for (i, row) in model.components.rows().into_iter().enumerate() {
        let mut acc = 0.0;
        for (j, &c) in row.iter().enumerate() {
            acc += c * (x[j] - model.mean[j]);
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Inverse of `project` up to the discarded subspace: mean + components^T . y.
pub fn reconstruct(model: &PcaModel, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != model.k() {
        return Err(Error::DimensionMismatch {
            expected: model.k(),
            got: y.len(),
        });
    }
    let mut out = model.mean.to_vec();
    for (i, &yi) in y.iter().enumerate() {
        for (j, &c) in model.components.row(i).iter().enumerate() {
            out[j] += c * yi;
        }
    }
    Ok(out)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major,
/// n x n). Returns (eigenvalues, accumulated rotations V row-major) with
/// A = V diag(vals) V^T; column q of V is the eigenvector of vals[q].
pub(crate) fn jacobi_eigh(a_in: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a_in.len(), n * n);
    let mut a = a_in.to_vec();
    let mut v = vec![0.0; n * n];
    for p in 0..n {
        v[p * n + p] = 1.0;
    }
    let mut b: Vec<f64> = (0..n).map(|p| a[p * n + p]).collect();
    let mut d = b.clone();
    let mut z = vec![0.0; n];

    for sweep in 0..100 {
        let mut sm = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                sm += a[p * n + q].abs();
            }
        }
        if sm == 0.0 {
            break;
        }
        let tresh = if sweep < 3 {
            0.2 * sm / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= tresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a[p * n + q] = 0.0;

                let rot = |m: &mut [f64], i: usize, j: usize, k: usize, l: usize| {
                    let g = m[i * n + j];
                    let h = m[k * n + l];
                    m[i * n + j] = g - s * (h + g * tau);
                    m[k * n + l] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rot(&mut a, j, p, j, q);
                }
                for j in p + 1..q {
                    rot(&mut a, p, j, j, q);
                }
                for j in q + 1..n {
                    rot(&mut a, p, j, q, j);
                }
                for j in 0..n {
                    rot(&mut v, j, p, j, q);
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    (d, v)
}
