//! Audio-CAPTCHA digit recognition toolkit: energy-based segmentation,
//! RASTA-PLP features, PCA, one-vs-one RBF-SVM trained by SMO, a Gaussian
//! Naive Bayes baseline, DTW-based evaluation metrics, and a synthetic
//! corpus generator that stands in for scraped captcha audio.

pub mod audio;
pub mod error;
pub mod features;
pub mod gnb;
pub mod metrics;
pub mod model_file;
pub mod pca;
pub mod pipeline;
pub mod segment;
pub mod svm;
pub mod synth;

pub use audio::{read_wav, write_wav, zero_mean, AudioClip, SAMPLE_RATE};
pub use error::{Error, Result};
pub use features::{
    features_for_segment, FeatureConfig, FeatureExtractor, FeatureVector, FEATURE_DIM,
};
pub use gnb::{gnb_predict, gnb_train, GnbModel};
pub use metrics::{
    captcha_accuracy, digit_accuracy, dirac_cost, dtw_align, AlignmentResult, DigitSequence,
    EvalReport,
};
pub use model_file::{load_model, save_model};
pub use pca::{fit_pca, project, PcaModel};
pub use pipeline::{
    build_training_table, cross_validate, evaluate, solve, train_final, Classifier,
    ClassifierKind, GridConfig, GridReport, SolveOptions, SolverModel, TrainingTable, ALL_LABELS,
    NOISE_CLASS,
};
pub use segment::{
    detect_candidates, energy_envelope, extract_segment, EnergyEnvelope, Segment,
    SegmentCandidate, SEGMENT_SAMPLES, SEGMENT_SECONDS,
};
pub use svm::{
    decision_value, ovo_predict, ovo_train, rbf_kernel, smo_train, BinarySvm, MulticlassSvm,
    SmoOutcome, SmoParams,
};
pub use synth::{
    gen_corpus, render_digit, synth_captcha, CaptchaSpec, CorpusConfig, CorpusManifest,
    DigitRenderSpec, ManifestEntry, NoiseProfile, Split,
};
