//! RASTA-PLP feature extraction: a 0.4 s segment becomes 42 half-
//! overlapping frames of 13 cepstral coefficients each, flattened
//! frame-major into a 546-vector.
//!
//! Per frame: Hamming window, 256-point power spectrum, Bark-scale
//! critical-band integration. Per band: log, RASTA band-pass over the
//! 42-frame trajectory. Back per frame: exponentiate, equal-loudness
//! weighting, 0.33 power law, autocorrelation via the even-extension
//! inverse DFT, Levinson-Durbin to LPC order 12, LPC-to-cepstrum.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::segment::Segment;

/// 42 frames x 13 coefficients.
pub const FEATURE_DIM: usize = 546;

/// Log-domain floor added to band energies before taking the log.
pub const LOG_EPS: f64 = 1e-8;

/// RASTA FIR numerator; zero-sum, so the filter has no DC gain.
pub const RASTA_NUMERATOR: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub n_frames: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub n_ceps: usize,
    pub lpc_order: usize,
    pub fft_size: usize,
    pub compression_exp: f64,
    pub rasta_pole: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            n_frames: 42,
            frame_len: 148,
            hop: 74,
            n_ceps: 13,
            lpc_order: 12,
            fft_size: 256,
            compression_exp: 0.33,
            rasta_pole: 0.98,
        }
    }
}

impl FeatureConfig {
    /// Bands span 0..Nyquist at roughly 1-Bark spacing:
    /// floor(bark(nyquist)) + 1, which is 18 at 8 kHz.
    pub fn n_bark_bands(&self) -> usize {
        hz_to_bark(self.sample_rate as f64 / 2.0).floor() as usize + 1
    }

    pub fn feature_dim(&self) -> usize {
        self.n_frames * self.n_ceps
    }

    /// Samples consumed by the frame grid: 148 + 41 * 74 = 3182.
    pub fn min_segment_len(&self) -> usize {
        self.frame_len + (self.n_frames - 1) * self.hop
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidCaptchaSpec { reason };
        if self.frame_len != 2 * self.hop {
            return Err(bad(format!(
                "frame_len {} must be twice hop {} for 50% overlap",
                self.frame_len, self.hop
            )));
        }
        if self.n_ceps != self.lpc_order + 1 {
            return Err(bad(format!(
                "n_ceps {} must be lpc_order {} + 1",
                self.n_ceps, self.lpc_order
            )));
        }
        if self.fft_size < self.frame_len {
            return Err(bad(format!(
                "fft_size {} smaller than frame_len {}",
                self.fft_size, self.frame_len
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::ZeroSampleRate);
        }
        Ok(())
    }

    /// Stable FNV-1a hash of every field; stored with dumps and models so
    /// mismatched configurations are refused at load time.
    pub fn hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&(self.sample_rate as u64).to_le_bytes());
        eat(&(self.n_frames as u64).to_le_bytes());
        eat(&(self.frame_len as u64).to_le_bytes());
        eat(&(self.hop as u64).to_le_bytes());
        eat(&(self.n_ceps as u64).to_le_bytes());
        eat(&(self.lpc_order as u64).to_le_bytes());
        eat(&(self.fft_size as u64).to_le_bytes());
        eat(&self.compression_exp.to_bits().to_le_bytes());
        eat(&self.rasta_pole.to_bits().to_le_bytes());
        h
    }
}

/// One segment's features, frame-major: values[n_ceps * k + j] is
/// coefficient j of frame k.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Traunmuller/Zwicker critical-band rate.
pub fn hz_to_bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * ((f / 7500.0) * (f / 7500.0)).atan()
}

/// Inverse of `hz_to_bark` by bisection.
pub fn bark_to_hz(z: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 24000.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hz_to_bark(mid) < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Hermansky's equal-loudness weight at frequency `f`.
pub fn equal_loudness(f: f64) -> f64 {
    let fsq = f * f;
    let t = fsq / (fsq + 1.6e5);
    t * t * (fsq + 1.44e6) / (fsq + 9.61e6)
}

/// Trapezoidal critical-band filters on the Bark axis. Bands are spaced
/// one step apart with flat top step/2 and ramps step/2, so interior
/// filters tile to unit total gain and a tone at a band center lands in
/// that band alone.
#[derive(Debug, Clone)]
pub struct BarkFilterbank {
    /// band x fft-bin weights
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
}

impl BarkFilterbank {
    pub fn new(cfg: &FeatureConfig) -> Self {
        let nyq = cfg.sample_rate as f64 / 2.0;
        let n_bands = cfg.n_bark_bands();
        let n_bins = cfg.fft_size / 2 + 1;
        let step = hz_to_bark(nyq) / n_bands as f64;
        let flat = step / 4.0;
        let zero = 3.0 * step / 4.0;

        let bin_bark: Vec<f64> = (0..n_bins)
            .map(|k| hz_to_bark(k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64))
            .collect();
        let mut weights = Vec::with_capacity(n_bands);
        let mut centers_hz = Vec::with_capacity(n_bands);
        for b in 0..n_bands {
            let center = (b as f64 + 0.5) * step;
            centers_hz.push(bark_to_hz(center));
            let row = bin_bark
                .iter()
                .map(|&z| {
                    let d = (z - center).abs();
                    if d <= flat {
                        1.0
                    } else if d < zero {
                        (zero - d) / (zero - flat)
                    } else {
                        0.0
                    }
                })
                .collect();
            weights.push(row);
        }
        Self {
            weights,
            centers_hz,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.weights.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Integrates a one-sided power spectrum into band energies.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Splits a segment into `n_frames` half-overlapping frames and applies
/// the Hamming window. Frame k covers samples [k*hop, k*hop + frame_len).
pub fn frame_segment(segment: &Segment, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let samples = segment.samples();
    let need = cfg.min_segment_len();
    if samples.len() < need {
        return Err(Error::SegmentTooShort {
            len: samples.len(),
            min: need,
        });
    }
    let window = hamming(cfg.frame_len);
    let mut frames = Vec::with_capacity(cfg.n_frames);
    for k in 0..cfg.n_frames {
        let start = k * cfg.hop;
        let frame = samples[start..start + cfg.frame_len]
            .iter()
            .zip(&window)
            .map(|(s, w)| s * w)
            .collect();
        frames.push(frame);
    }
    Ok(frames)
}

fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n as f64 - 1.0)).cos())
        .collect()
}

/// Critical-band energies of one windowed frame: magnitude-squared FFT
/// (zero-padded to fft_size) integrated over the Bark filterbank.
/// Convenience wrapper over `FeatureExtractor` for one-off use.
pub fn bark_power_spectrum(frame: &[f64], cfg: &FeatureConfig) -> Vec<f64> {
    let ex = FeatureExtractor::new(cfg.clone()).expect("valid config");
    ex.bark_spectrum(frame)
}

/// Classic RASTA band-pass over one band's log-energy trajectory: the
/// zero-sum FIR numerator followed by a single-pole integrator. The first
/// four outputs are zero while the FIR delay line warms up on the first
/// four inputs; the integrator then starts from zero state, so an additive
/// constant in the input (a gain factor in the linear domain) never
/// reaches the output.
pub fn rasta_filter(trajectory: &[f64], pole: f64) -> Vec<f64> {
    let n = trajectory.len();
    let mut y = vec![0.0; n];
    for t in 4..n {
        let mut fir = 0.0;
        for (k, b) in RASTA_NUMERATOR.iter().enumerate() {
            fir += b * trajectory[t - k];
        }
        y[t] = fir + pole * y[t - 1];
    }
    y
}

/// Levinson-Durbin recursion on autocorrelations r[0..=order]. Returns
/// (a, err) with a[0] = 1 (prediction polynomial A(z) = 1 + sum a_k z^-k)
/// and the final prediction error, or None if the error becomes
/// non-positive.
pub fn levinson(r: &[f64], order: usize) -> Option<(Vec<f64>, f64)> {
    debug_assert!(r.len() > order);
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if err <= 0.0 {
        return None;
    }
    for m in 1..=order {
        let mut acc = r[m];
        for k in 1..m {
            acc += a[k] * r[m - k];
        }
        let reflect = -acc / err;
        let prev = a.clone();
        a[m] = reflect;
        for k in 1..m {
            a[k] = prev[k] + reflect * prev[m - k];
        }
        err *= 1.0 - reflect * reflect;
        if err <= 0.0 {
            return None;
        }
    }
    Some((a, err))
}

/// Autocorrelations of a band power spectrum, treating the bands as
/// samples of a symmetric spectrum on 2*(B-1) points (even-extension
/// inverse DFT).
pub fn autocorr_from_band_spectrum(q: &[f64], max_lag: usize) -> Vec<f64> {
    let b = q.len();
    let m = 2 * (b - 1);
    (0..=max_lag)
        .map(|tau| {
            let mut acc = q[0];
            for (band, &v) in q.iter().enumerate().take(b - 1).skip(1) {
                acc += 2.0
                    * v
                    * (2.0 * std::f64::consts::PI * band as f64 * tau as f64 / m as f64).cos();
            }
            acc += q[b - 1] * if tau % 2 == 0 { 1.0 } else { -1.0 };
            acc / m as f64
        })
        .collect()
}

/// LPC-to-cepstrum recursion: c0 = ln(prediction error), then the standard
/// minimum-phase expansion of -ln A(z).
pub fn lpc_to_cepstra(a: &[f64], err: f64, n_ceps: usize) -> Vec<f64> {
    let mut c = vec![0.0; n_ceps];
    c[0] = err.ln();
    for n in 1..n_ceps {
        let mut sum = 0.0;
        for m in 1..n {
            sum += (n - m) as f64 * a[m] * c[n - m];
        }
        c[n] = -(a[n] + sum / n as f64);
    }
    c
}

/// Final PLP stage from already equal-loudness-weighted, compressed band
/// values: autocorrelation, Levinson-Durbin, cepstra. `frame` only labels
/// the instability error.
pub fn cepstra_from_weighted_bands(
    weighted: &[f64],
    lpc_order: usize,
    n_ceps: usize,
    frame: usize,
) -> Result<Vec<f64>> {
    let r = autocorr_from_band_spectrum(weighted, lpc_order);
    let (a, err) = levinson(&r, lpc_order).ok_or(Error::LevinsonUnstable { frame })?;
    Ok(lpc_to_cepstra(&a, err, n_ceps))
}

/// Shared state for extracting features from many segments: validated
/// config, FFT plan, filterbank, window. Cheap to share across threads.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    filterbank: BarkFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let filterbank = BarkFilterbank::new(&cfg);
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            filterbank,
            fft,
        })
    }

    pub fn cfg(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &BarkFilterbank {
        &self.filterbank
    }

    /// One-sided magnitude-squared spectrum of a windowed frame,
    /// zero-padded to fft_size; bins 0..=fft_size/2.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        for (slot, &s) in buf.iter_mut().zip(frame) {
            slot.re = s;
        }
        self.fft.process(&mut buf);
        buf[..self.cfg.fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }

    pub fn bark_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        self.filterbank.apply(&self.power_spectrum(frame))
    }

    /// PLP cepstra of one frame's RASTA-filtered log band values.
    pub fn plp_cepstra(&self, filtered_log_bands: &[f64], frame: usize) -> Result<Vec<f64>> {
        let weighted: Vec<f64> = filtered_log_bands
            .iter()
            .zip(self.filterbank.centers_hz())
            .map(|(&l, &f)| (equal_loudness(f) * l.exp()).powf(self.cfg.compression_exp))
            .collect();
        cepstra_from_weighted_bands(&weighted, self.cfg.lpc_order, self.cfg.n_ceps, frame)
    }

    /// Full composition frame -> bark -> log -> rasta -> cepstra,
    /// flattened frame-major.
    pub fn features(&self, segment: &Segment) -> Result<FeatureVector> {
        let frames = frame_segment(segment, &self.cfg)?;
        let n_bands = self.filterbank.n_bands();
        let n_frames = self.cfg.n_frames;

        // band-major log energies over time
        let mut trajectories = vec![vec![0.0; n_frames]; n_bands];
        for (t, frame) in frames.iter().enumerate() {
            let bands = self.bark_spectrum(frame);
            for (b, &e) in bands.iter().enumerate() {
                trajectories[b][t] = (e + LOG_EPS).ln();
            }
        }
        for traj in &mut trajectories {
            *traj = rasta_filter(traj, self.cfg.rasta_pole);
        }

        let mut out = vec![0.0; self.cfg.feature_dim()];
        let mut bands_at = vec![0.0; n_bands];
        for t in 0..n_frames {
            for b in 0..n_bands {
                bands_at[b] = trajectories[b][t];
            }
            let ceps = self.plp_cepstra(&bands_at, t)?;
            out[t * self.cfg.n_ceps..(t + 1) * self.cfg.n_ceps].copy_from_slice(&ceps);
        }
        Ok(FeatureVector(out))
    }
}

/// One-off feature extraction; pipelines keep a `FeatureExtractor` around
/// instead.
pub fn features_for_segment(segment: &Segment, cfg: &FeatureConfig) -> Result<FeatureVector> {
    FeatureExtractor::new(cfg.clone())?.features(segment)
}
