use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants name the offending field or quantity so
/// callers can tell a malformed header from an unsupported codec from a
/// numeric failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed WAV header: bad {field}")]
    WavHeader { path: PathBuf, field: &'static str },

    #[error("{path}: unsupported WAV codec: audio_format = {audio_format} (PCM = 1 required)")]
    WavCodec { path: PathBuf, audio_format: u16 },

    #[error("{path}: unsupported bits_per_sample = {bits} (16 required)")]
    WavBits { path: PathBuf, bits: u16 },

    #[error("{path}: unsupported channel count {channels} (mono or stereo required)")]
    WavChannels { path: PathBuf, channels: u16 },

    #[error("sample_rate must be positive")]
    ZeroSampleRate,

    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },

    #[error("empty clip")]
    EmptyClip,

    #[error("clip has {len} samples, need at least {min}")]
    ClipTooShort { len: usize, min: usize },

    #[error("clip mean {mean:e} exceeds zero-mean precondition ({limit:e})")]
    NotZeroMean { mean: f64, limit: f64 },

    #[error("segment start {start} out of clip of {len} samples")]
    StartOutOfClip { start: usize, len: usize },

    #[error("segment has {len} samples, need at least {min}")]
    SegmentTooShort { len: usize, min: usize },

    #[error("sample rate {rate} Hz is not the canonical 8000 Hz (resampling unsupported)")]
    NonCanonicalRate { rate: u32 },

    #[error("digit {digit} out of range 0-9")]
    DigitOutOfRange { digit: u8 },

    #[error("invalid captcha spec: {reason}")]
    InvalidCaptchaSpec { reason: String },

    #[error("infeasible captcha spec: rendered clip would be {seconds:.1} s (limit 30 s)")]
    InfeasibleSpec { seconds: f64 },

    #[error("Levinson-Durbin instability (non-positive prediction error) in frame {frame}")]
    LevinsonUnstable { frame: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("PCA needs at least 2 rows, got {rows}")]
    PcaTooFewRows { rows: usize },

    #[error("PCA: data has zero total variance")]
    PcaZeroVariance,

    #[error("variance fraction {value} outside (0, 1]")]
    BadVarFraction { value: f64 },

    #[error("SMO requires both classes present in the training set")]
    SingleClassInput,

    #[error("penalty C must be positive, got {value}")]
    BadPenalty { value: f64 },

    #[error("gamma must be positive, got {value}")]
    BadGamma { value: f64 },

    #[error("need at least 2 distinct classes, got {got}")]
    TooFewClasses { got: usize },

    #[error("class {label} has {count} rows, need at least {need}")]
    ClassTooSmall { label: u8, count: usize, need: usize },

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error("manifest has no {split} entries")]
    EmptyManifestSplit { split: &'static str },

    #[error("{path}: onset {onset_s:.3} s + 0.4 s exceeds clip duration {duration_s:.3} s")]
    OnsetOutOfBounds {
        path: String,
        onset_s: f64,
        duration_s: f64,
    },

    #[error("model file version {found} unsupported (expected {expected})")]
    ModelVersion { found: u16, expected: u16 },

    #[error("corrupt model file: {detail}")]
    ModelCorrupt { detail: String },

    #[error("feature config hash mismatch: model {model:#018x}, runtime {runtime:#018x}")]
    FeatureCfgMismatch { model: u64, runtime: u64 },

    #[error("manifest {path}: {detail}")]
    ManifestFormat { path: PathBuf, detail: String },

    #[error("missing parameter: {name}")]
    MissingParameter { name: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
