//! Python extension module exposing the toolkit's main types and
//! operations: audio I/O, the synthetic corpus generator, feature
//! extraction, training, solving, evaluation, and the DTW metrics.
//!
//! Build with `cargo build -p decaptcha-py`, then rename/copy the produced
//! `libdecaptcha.so` to `decaptcha.so` somewhere on `sys.path` (see
//! `python/smoke_test.py`).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use decaptcha_core as core;
use decaptcha_core::features::FeatureExtractor;
use decaptcha_core::pipeline::{self, ClassifierKind, GridConfig, SolveOptions};
use decaptcha_core::synth::{self, CorpusConfig, CorpusManifest};

fn to_py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<ClassifierKind> {
    match kind {
        "proposed-svm" => Ok(ClassifierKind::ProposedSvm),
        "default-svm" => Ok(ClassifierKind::DefaultSvm),
        "naive-bayes" => Ok(ClassifierKind::NaiveBayes),
        other => Err(PyValueError::new_err(format!(
            "unknown kind {other:?}; expected proposed-svm, default-svm, or naive-bayes"
        ))),
    }
}

fn parse_digits(s: &str) -> PyResult<core::DigitSequence> {
    core::DigitSequence::parse(s).map_err(to_py_err)
}

/// Mono audio clip.
#[pyclass(name = "AudioClip")]
struct PyAudioClip {
    inner: core::AudioClip,
}

#[pymethods]
impl PyAudioClip {
    #[new]
    fn new(samples: Vec<f64>, sample_rate: u32) -> PyResult<Self> {
        Ok(Self {
            inner: core::AudioClip::new(samples, sample_rate).map_err(to_py_err)?,
        })
    }

    /// Read a PCM-16 RIFF/WAVE file (stereo is averaged to mono).
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::read_wav(&path).map_err(to_py_err)?,
        })
    }

    /// Write as mono PCM-16.
    fn write(&self, path: PathBuf) -> PyResult<()> {
        core::write_wav(&self.inner, &path).map_err(to_py_err)
    }

    fn zero_mean(&self) -> PyResult<Self> {
        Ok(Self {
            inner: core::zero_mean(&self.inner).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate()
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Trained solver (optional PCA + classifier).
#[pyclass(name = "SolverModel")]
struct PySolverModel {
    inner: pipeline::SolverModel,
}

#[pymethods]
impl PySolverModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::load_model(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core::save_model(&self.inner, &path).map_err(to_py_err)
    }

    /// Solve a clip; returns the predicted digit string.
    fn solve(&self, clip: &PyAudioClip) -> PyResult<String> {
        let prediction = pipeline::solve(&self.inner, &clip.inner, &SolveOptions::default())
            .map_err(to_py_err)?;
        Ok(prediction.to_string())
    }

    /// Read a WAV file and solve it.
    fn solve_wav(&self, path: PathBuf) -> PyResult<String> {
        let clip = core::read_wav(&path).map_err(to_py_err)?;
        self.solve(&PyAudioClip { inner: clip })
    }

    #[getter]
    fn chosen_c(&self) -> f64 {
        self.inner.chosen_c
    }

    #[getter]
    fn chosen_var(&self) -> Option<f64> {
        self.inner.chosen_var
    }

    /// Number of retained principal components, or None without PCA.
    #[getter]
    fn pca_k(&self) -> Option<usize> {
        self.inner.pca.as_ref().map(|p| p.k())
    }
}

/// Render one 0.4 s synthetic digit utterance.
#[pyfunction]
fn render_digit(digit: u8, seed: u64) -> PyResult<PyAudioClip> {
    let clip = synth::render_digit(&synth::DigitRenderSpec {
        digit,
        base_seed: seed,
    })
    .map_err(to_py_err)?;
    Ok(PyAudioClip { inner: clip })
}

/// Synthesize a whole captcha; returns (clip, onset seconds).
#[pyfunction]
#[pyo3(signature = (digits, seed, gap_min=0.3, gap_max=0.8))]
fn synth_captcha(
    digits: &str,
    seed: u64,
    gap_min: f64,
    gap_max: f64,
) -> PyResult<(PyAudioClip, Vec<f64>)> {
    let digits = parse_digits(digits)?;
    let (clip, _, onsets) = synth::synth_captcha(&synth::CaptchaSpec {
        digits: digits.digits().to_vec(),
        gap_range_s: (gap_min, gap_max),
        noise: synth::NoiseProfile::default(),
        seed,
    })
    .map_err(to_py_err)?;
    Ok((PyAudioClip { inner: clip }, onsets))
}

/// Generate a labeled corpus; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, n_train, n_test, seed=42))]
fn gen_corpus(out_dir: PathBuf, n_train: usize, n_test: usize, seed: u64) -> PyResult<String> {
    synth::gen_corpus(
        &out_dir,
        &CorpusConfig {
            n_train,
            n_test,
            seed,
            ..CorpusConfig::default()
        },
    )
    .map_err(to_py_err)?;
    Ok(out_dir.join("manifest.json").display().to_string())
}

/// Train a model on a manifest's train split and write it to `model_out`.
#[pyfunction]
#[pyo3(signature = (manifest, model_out, kind="proposed-svm", c=50.0, var=0.9))]
fn train(manifest: PathBuf, model_out: PathBuf, kind: &str, c: f64, var: f64) -> PyResult<()> {
    let kind = parse_kind(kind)?;
    let loaded = CorpusManifest::load(&manifest).map_err(to_py_err)?;
    let fcfg = core::FeatureConfig::default();
    let table = pipeline::build_training_table(&loaded, &manifest, &fcfg).map_err(to_py_err)?;
    let model = pipeline::train_final(&table, kind, c, Some(var), &fcfg).map_err(to_py_err)?;
    core::save_model(&model, &model_out).map_err(to_py_err)
}

/// Cross-validated grid search; returns a dict with the CSV text and the
/// best cell.
#[pyfunction]
#[pyo3(signature = (manifest, penalties, vars, folds=4, seed=42))]
fn grid_search(
    py: Python<'_>,
    manifest: PathBuf,
    penalties: Vec<f64>,
    vars: Vec<f64>,
    folds: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let loaded = CorpusManifest::load(&manifest).map_err(to_py_err)?;
    let fcfg = core::FeatureConfig::default();
    let table = pipeline::build_training_table(&loaded, &manifest, &fcfg).map_err(to_py_err)?;
    let report = pipeline::cross_validate(
        &table,
        &GridConfig {
            penalties,
            var_fractions: vars,
            folds,
        },
        seed,
    )
    .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("csv", report.to_csv())?;
    out.set_item("best_c", report.best_c)?;
    out.set_item("best_var", report.best_var)?;
    out.set_item("best_accuracy", report.best_accuracy)?;
    Ok(out.into())
}

/// Evaluate a saved model on a manifest's test split.
#[pyfunction]
fn evaluate(py: Python<'_>, model: PathBuf, manifest: PathBuf) -> PyResult<Py<PyDict>> {
    let model = core::load_model(&model).map_err(to_py_err)?;
    let loaded = CorpusManifest::load(&manifest).map_err(to_py_err)?;
    let report = pipeline::evaluate(&model, &loaded, &manifest, &SolveOptions::default())
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("digit_accuracy", report.digit_accuracy)?;
    out.set_item("captcha_accuracy", report.captcha_accuracy)?;
    let per_file: Vec<(String, String, u32, bool)> = report
        .per_file
        .iter()
        .map(|f| (f.truth.clone(), f.prediction.clone(), f.cost, f.exact_match))
        .collect();
    out.set_item("per_file", per_file)?;
    Ok(out.into())
}

/// RASTA-PLP features of the 0.4 s segment starting at `start_index`.
#[pyfunction]
#[pyo3(signature = (clip, start_index=0))]
fn features(clip: &PyAudioClip, start_index: usize) -> PyResult<Vec<f64>> {
    let segment = core::extract_segment(&clip.inner, start_index).map_err(to_py_err)?;
    let extractor = FeatureExtractor::new(core::FeatureConfig::default()).map_err(to_py_err)?;
    Ok(extractor.features(&segment).map_err(to_py_err)?.into_vec())
}

/// Candidate digit start times (seconds) from the energy envelope.
#[pyfunction]
#[pyo3(signature = (clip, theta_start=1e-5, theta_end=1e-3))]
fn detect_starts(clip: &PyAudioClip, theta_start: f64, theta_end: f64) -> PyResult<Vec<f64>> {
    let zeroed = core::zero_mean(&clip.inner).map_err(to_py_err)?;
    let env = core::energy_envelope(&zeroed).map_err(to_py_err)?;
    Ok(core::detect_candidates(&env, theta_start, theta_end)
        .iter()
        .map(|c| c.start_s)
        .collect())
}

/// DTW alignment cost between two digit strings under the 0/1 cost.
#[pyfunction]
fn dtw_cost(truth: &str, prediction: &str) -> PyResult<u32> {
    Ok(core::dtw_align(&parse_digits(truth)?, &parse_digits(prediction)?).total_cost)
}

/// Alignment-based per-digit accuracy over (truth, prediction) pairs.
#[pyfunction]
fn digit_accuracy(pairs: Vec<(String, String)>) -> PyResult<f64> {
    let parsed = pairs
        .iter()
        .map(|(t, p)| Ok((parse_digits(t)?, parse_digits(p)?)))
        .collect::<PyResult<Vec<_>>>()?;
    core::digit_accuracy(&parsed).map_err(to_py_err)
}

/// Exact-sequence accuracy over (truth, prediction) pairs.
#[pyfunction]
fn captcha_accuracy(pairs: Vec<(String, String)>) -> PyResult<f64> {
    let parsed = pairs
        .iter()
        .map(|(t, p)| Ok((parse_digits(t)?, parse_digits(p)?)))
        .collect::<PyResult<Vec<_>>>()?;
    core::captcha_accuracy(&parsed).map_err(to_py_err)
}

/// exp(-gamma * ||x1 - x2||^2).
#[pyfunction]
fn rbf_kernel(x1: Vec<f64>, x2: Vec<f64>, gamma: f64) -> PyResult<f64> {
    core::rbf_kernel(&x1, &x2, gamma).map_err(to_py_err)
}

#[pymodule]
fn decaptcha(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAudioClip>()?;
    m.add_class::<PySolverModel>()?;
    m.add_function(wrap_pyfunction!(render_digit, m)?)?;
    m.add_function(wrap_pyfunction!(synth_captcha, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(detect_starts, m)?)?;
    m.add_function(wrap_pyfunction!(dtw_cost, m)?)?;
    m.add_function(wrap_pyfunction!(digit_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(captcha_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(rbf_kernel, m)?)?;
    m.add("FEATURE_DIM", core::FEATURE_DIM)?;
    m.add("SAMPLE_RATE", core::SAMPLE_RATE)?;
    Ok(())
}
