//! Gaussian Naive Bayes baseline: per-class priors and per-feature normal
//! densities, evaluated in the log domain.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

const VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GnbModel {
    pub(crate) labels: Vec<u8>,
    pub(crate) priors: Vec<f64>,
    /// class x feature
    pub(crate) means: Array2<f64>,
    /// class x feature, floored at 1e-9
    pub(crate) variances: Array2<f64>,
}

impl GnbModel {
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub(crate) fn from_parts(
        labels: Vec<u8>,
        priors: Vec<f64>,
        means: Array2<f64>,
        variances: Array2<f64>,
    ) -> Self {
        Self {
            labels,
            priors,
            means,
            variances,
        }
    }
}

/// Fits per-class priors, means, and variances. Every present class needs
/// at least 2 rows so its variance is estimable.
pub fn gnb_train(x: ArrayView2<'_, f64>, y: &[u8]) -> Result<GnbModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput { what: "training rows" });
    }
    let mut labels: Vec<u8> = y.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::TooFewClasses { got: labels.len() });
    }

    let d = x.ncols();
    let n = y.len() as f64;
    let mut priors = Vec::with_capacity(labels.len());
    let mut means = Array2::zeros((labels.len(), d));
    let mut variances = Array2::zeros((labels.len(), d));
    for (ci, &label) in labels.iter().enumerate() {
        let idx: Vec<usize> = (0..y.len()).filter(|&k| y[k] == label).collect();
        if idx.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                count: idx.len(),
                need: 2,
            });
        }
        let m = idx.len() as f64;
        priors.push(m / n);
        for j in 0..d {
            let mean = idx.iter().map(|&k| x[(k, j)]).sum::<f64>() / m;
            let var = idx
                .iter()
                .map(|&k| {
                    let dlt = x[(k, j)] - mean;
                    dlt * dlt
                })
                .sum::<f64>()
                / m;
            means[(ci, j)] = mean;
            variances[(ci, j)] = var.max(VAR_FLOOR);
        }
    }
    Ok(GnbModel {
        labels,
        priors,
        means,
        variances,
    })
}

/// Log joint density of `x` under class `ci`: log prior plus the sum of
/// per-feature normal log densities.
pub fn gnb_log_posterior(model: &GnbModel, ci: usize, x: &[f64]) -> f64 {
    let mut acc = model.priors[ci].ln();
    for (j, &v) in x.iter().enumerate() {
        let var = model.variances[(ci, j)];
        let diff = v - model.means[(ci, j)];
        acc += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - diff * diff / (2.0 * var);
    }
    acc
}

/// argmax over classes of the log joint density; ties break toward the
/// smaller label.
pub fn gnb_predict(model: &GnbModel, x: &[f64]) -> Result<u8> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let mut best = 0usize;
    let mut best_score = gnb_log_posterior(model, 0, x);
    for ci in 1..model.labels.len() {
        let score = gnb_log_posterior(model, ci, x);
        if score > best_score {
            best = ci;
            best_score = score;
        }
    }
    Ok(model.labels[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_tie_breaks_to_smaller_label() {
        // two 1-D classes with means -1 and +1, equal spread, x = 0
        let x = array![[-1.2], [-0.8], [0.8], [1.2]];
        let y = vec![0u8, 0, 1, 1];
        let m = gnb_train(x.view(), &y).unwrap();
        assert_eq!(gnb_predict(&m, &[0.0]).unwrap(), 0);
    }

    #[test]
    fn class_mean_maps_to_class() {
        let x = array![
            [0.0, 0.0],
            [0.2, -0.1],
            [5.0, 5.0],
            [5.2, 4.9],
            [-5.0, 5.0],
            [-5.1, 5.2]
        ];
        let y = vec![0u8, 0, 1, 1, 2, 2];
        let m = gnb_train(x.view(), &y).unwrap();
        assert_eq!(gnb_predict(&m, &[0.1, -0.05]).unwrap(), 0);
        assert_eq!(gnb_predict(&m, &[5.1, 4.95]).unwrap(), 1);
        assert_eq!(gnb_predict(&m, &[-5.05, 5.1]).unwrap(), 2);
    }

    #[test]
    fn posterior_matches_hand_rolled_density_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0));
        let y: Vec<u8> = (0..n).map(|k| (k % 3) as u8).collect();
        let m = gnb_train(x.view(), &y).unwrap();
        for _ in 0..10 {
            let probe = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            for ci in 0..3 {
                let fast = gnb_log_posterior(&m, ci, &probe);
                // direct Bayes computation
                let mut slow = m.priors()[ci].ln();
                for j in 0..2 {
                    let var = m.variances[(ci, j)];
                    let mu = m.means[(ci, j)];
                    let dens = (-((probe[j] - mu).powi(2)) / (2.0 * var)).exp()
                        / (2.0 * std::f64::consts::PI * var).sqrt();
                    slow += dens.ln();
                }
                assert!((fast - slow).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn argmax_invariant_to_prior_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 24;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let y: Vec<u8> = (0..n).map(|k| (k % 2) as u8).collect();
        let m = gnb_train(x.view(), &y).unwrap();
        let mut scaled = m.clone();
        for p in &mut scaled.priors {
            *p *= 3.7; // unnormalized priors, same ratios
        }
        for _ in 0..20 {
            let probe: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(
                gnb_predict(&m, &probe).unwrap(),
                gnb_predict(&scaled, &probe).unwrap()
            );
        }
    }

    #[test]
    fn undersized_class_is_rejected() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = vec![0u8, 0, 1];
        assert!(matches!(
            gnb_train(x.view(), &y),
            Err(Error::ClassTooSmall { label: 1, .. })
        ));
    }

    #[test]
    fn priors_sum_to_one_and_variances_are_floored() {
        let x = array![[1.0, 5.0], [1.0, 5.0], [2.0, 6.0], [2.0, 6.0]];
        let y = vec![0u8, 0, 1, 1];
        let m = gnb_train(x.view(), &y).unwrap();
        let s: f64 = m.priors().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        // constant features within class -> floored variance, still positive
        assert!(m.variances.iter().all(|&v| v >= VAR_FLOOR));
    }
}
