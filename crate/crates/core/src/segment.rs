//! Energy-based endpoint detection: smoothed energy envelope, hysteresis
//! thresholding for candidate digit regions, and fixed-length segment
//! extraction.

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Running-mean window over squared samples, in samples.
pub const ENERGY_WINDOW: usize = 100;
/// Every candidate segment is exactly this long.
pub const SEGMENT_SECONDS: f64 = 0.4;
/// 0.4 s at the canonical 8000 Hz.
pub const SEGMENT_SAMPLES: usize = 3200;
/// Default hysteresis thresholds on the max-normalized envelope.
pub const DEFAULT_THETA_START: f64 = 1e-5;
pub const DEFAULT_THETA_END: f64 = 1e-3;
/// Candidates shorter than this are discarded.
const MIN_CANDIDATE_SECONDS: f64 = 0.05;

/// Smoothed squared-sample envelope; same length as the clip.
#[derive(Debug, Clone)]
pub struct EnergyEnvelope {
    values: Vec<f64>,
    sample_rate: u32,
}

impl EnergyEnvelope {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn window(&self) -> usize {
        ENERGY_WINDOW
    }

    /// CSV dump of (index, value) rows for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v:e}\n"));
        }
        out
    }
}

/// Half-open candidate region [start_index, end_index).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCandidate {
    pub start_index: usize,
    pub end_index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// A 0.4 s window of samples, ready for feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
}

impl Segment {
    /// Wraps exactly `SEGMENT_SAMPLES` samples.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() != SEGMENT_SAMPLES {
            return Err(Error::SegmentTooShort {
                len: samples.len(),
                min: SEGMENT_SAMPLES,
            });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// 100-point running mean of squared samples, window centered on each
/// index and truncated at the clip edges. Requires a zero-meaned clip
/// (|mean| < 1e-9) of at least 100 samples.
pub fn energy_envelope(clip: &AudioClip) -> Result<EnergyEnvelope> {
    let n = clip.len();
    if n < ENERGY_WINDOW {
        return Err(Error::ClipTooShort {
            len: n,
            min: ENERGY_WINDOW,
        });
    }
    let mean = clip.samples().iter().sum::<f64>() / n as f64;
    if mean.abs() >= 1e-9 {
        return Err(Error::NotZeroMean {
            mean,
            limit: 1e-9,
        });
    }

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &s in clip.samples() {
        acc += s * s;
        prefix.push(acc);
    }
    let half = ENERGY_WINDOW / 2;
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    Ok(EnergyEnvelope {
        values,
        sample_rate: clip.sample_rate(),
    })
}

/// Hysteresis thresholding on the max-normalized envelope: a candidate
/// opens when the normalized value rises above `theta_start` and closes
/// when it falls below min(theta_start, theta_end); a region still open at
/// the end of the clip closes there. Candidates shorter than 0.05 s are
/// discarded. An all-zero envelope yields no candidates.
pub fn detect_candidates(
    env: &EnergyEnvelope,
    theta_start: f64,
    theta_end: f64,
) -> Vec<SegmentCandidate> {
    let max = env.values.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let close_thr = theta_start.min(theta_end);
    let rate = env.sample_rate as f64;
    let min_len = (MIN_CANDIDATE_SECONDS * rate).round() as usize;

    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &v) in env.values.iter().enumerate() {
        let nv = v / max;
        match open {
            None => {
                if nv > theta_start {
                    open = Some(i);
                }
            }
            Some(start) => {
                if nv < close_thr {
                    if i - start >= min_len {
                        out.push(SegmentCandidate {
                            start_index: start,
                            end_index: i,
                            start_s: start as f64 / rate,
                            end_s: i as f64 / rate,
                        });
                    }
                    open = None;
                }
            }
        }
    }
    if let Some(start) = open {
        let end = env.values.len();
        if end - start >= min_len {
            out.push(SegmentCandidate {
                start_index: start,
                end_index: end,
                start_s: start as f64 / rate,
                end_s: end as f64 / rate,
            });
        }
    }
    out
}

/// Extracts the 0.4 s segment starting at `start_index`, zero-padding past
/// the clip tail. The clip must be at the canonical 8000 Hz.
pub fn extract_segment(clip: &AudioClip, start_index: usize) -> Result<Segment> {
    if clip.sample_rate() != SAMPLE_RATE {
        return Err(Error::NonCanonicalRate {
            rate: clip.sample_rate(),
        });
    }
    if start_index >= clip.len() {
        return Err(Error::StartOutOfClip {
            start: start_index,
            len: clip.len(),
        });
    }
    let mut samples = vec![0.0; SEGMENT_SAMPLES];
    let avail = (clip.len() - start_index).min(SEGMENT_SAMPLES);
    samples[..avail].copy_from_slice(&clip.samples()[start_index..start_index + avail]);
    Segment::from_samples(samples)
}
