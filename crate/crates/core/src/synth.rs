//! Synthetic audio-CAPTCHA corpus generation. Digits are rendered as
//! amplitude-modulated two-formant signatures (a fixed F1/F2 pair and a
//! digit-specific modulation rate), placed with random gaps under white,
//! hum, and babble noise. Everything is a pure function of (config, seed),
//! so corpora regenerate bit-identically.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::segment::SEGMENT_SECONDS;

/// Fixed formant pairs (F1, F2) in Hz, one per digit. Values share
/// neighborhoods across digits on purpose; the modulation rate and the
/// pair as a whole stay distinct.
const DIGIT_FORMANTS: [(f64, f64); 10] = [
    (320.0, 950.0),
    (440.0, 1900.0),
    (560.0, 1250.0),
    (380.0, 2200.0),
    (500.0, 1000.0),
    (620.0, 1700.0),
    (350.0, 1450.0),
    (470.0, 2050.0),
    (590.0, 1150.0),
    (410.0, 1600.0),
];

/// Digit-specific amplitude-modulation rates in Hz, inside the RASTA
/// passband so the temporal pattern survives filtering.
const DIGIT_AM_RATE: [f64; 10] = [2.6, 3.1, 3.6, 4.1, 4.6, 5.1, 5.6, 6.1, 6.6, 7.1];

const RAMP_SAMPLES: usize = 40; // 5 ms attack/release
const MAX_CLIP_SECONDS: f64 = 30.0;

/// Derives independent per-entry randomness from a base seed (splitmix64
/// finalizer), so parallel and serial generation agree.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed handed to `render_digit` for the digit at `position` inside a
/// captcha generated from `captcha_seed`.
pub fn digit_seed(captcha_seed: u64, position: usize) -> u64 {
    mix_seed(captcha_seed, 0x00D1_6175 + position as u64)
}

#[derive(Debug, Clone)]
pub struct DigitRenderSpec {
    pub digit: u8,
    pub base_seed: u64,
}

/// Renders one 0.4 s digit utterance surrogate. Deterministic for a fixed
/// spec; the seed drives +-3% pitch jitter, phases, and the RMS target.
pub fn render_digit(spec: &DigitRenderSpec) -> Result<AudioClip> {
    if spec.digit > 9 {
        return Err(Error::DigitOutOfRange { digit: spec.digit });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.base_seed, 0xD1D1 + spec.digit as u64));
    let jitter = 1.0 + rng.random_range(-0.03..=0.03);
    let phi1 = rng.random_range(0.0..2.0 * PI);
    let phi2 = rng.random_range(0.0..2.0 * PI);
    let phi_am = rng.random_range(0.0..2.0 * PI);
    let target_rms = rng.random_range(0.1..=0.35);

    let (f1, f2) = DIGIT_FORMANTS[spec.digit as usize];
    let (f1, f2) = (f1 * jitter, f2 * jitter);
    let am_rate = DIGIT_AM_RATE[spec.digit as usize];

    // the two formants are modulated at the same digit rate but with a
    // digit-specific phase offset between them, so each digit has its own
    // band-trajectory pattern, not just a gain wobble
    let am_offset = 2.0 * PI * (spec.digit as f64 + 1.0) / 11.0;
    let n = (SEGMENT_SECONDS * SAMPLE_RATE as f64).round() as usize;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / SAMPLE_RATE as f64;
        let am1 = 1.0 - 0.3 * (1.0 + (2.0 * PI * am_rate * t + phi_am).sin());
        let am2 = 1.0 - 0.3 * (1.0 + (2.0 * PI * am_rate * t + phi_am + am_offset).sin());
        let mut s = am1 * (2.0 * PI * f1 * t + phi1).sin()
            + 0.8 * am2 * (2.0 * PI * f2 * t + phi2).sin();
        if i < RAMP_SAMPLES {
            s *= i as f64 / RAMP_SAMPLES as f64;
        }
        if n - 1 - i < RAMP_SAMPLES {
            s *= (n - 1 - i) as f64 / RAMP_SAMPLES as f64;
        }
        samples.push(s);
    }
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    let scale = target_rms / rms;
    for s in &mut samples {
        *s *= scale;
    }
    AudioClip::new(samples, SAMPLE_RATE)
}

/// Background noise mix. `white_snr_db` may be infinite (no white noise);
/// amplitudes of zero disable the other components. The defaults are
/// calibrated so the segmenter's stock thresholds recover onsets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub white_snr_db: f64,
    pub hum_freq_hz: f64,
    pub hum_amp: f64,
    pub babble_amp: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            white_snr_db: 60.0,
            hum_freq_hz: 50.0,
            hum_amp: 2e-4,
            babble_amp: 3e-4,
        }
    }
}

impl NoiseProfile {
    /// No noise at all; the zero-noise reference used by tests.
    pub fn silent() -> Self {
        Self {
            white_snr_db: f64::INFINITY,
            hum_freq_hz: 50.0,
            hum_amp: 0.0,
            babble_amp: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaptchaSpec {
    /// 1-6 digits; corpora draw 4-6 per the usual captcha length.
    pub digits: Vec<u8>,
    pub gap_range_s: (f64, f64),
    pub noise: NoiseProfile,
    pub seed: u64,
}

impl CaptchaSpec {
    fn validate(&self) -> Result<()> {
        if self.digits.is_empty() || self.digits.len() > 6 {
            return Err(Error::InvalidCaptchaSpec {
                reason: format!("digit count {} outside 1-6", self.digits.len()),
            });
        }
        for &d in &self.digits {
            if d > 9 {
                return Err(Error::DigitOutOfRange { digit: d });
            }
        }
        let (lo, hi) = self.gap_range_s;
        if !(lo >= 0.05 && hi >= lo) {
            return Err(Error::InvalidCaptchaSpec {
                reason: format!("gap range ({lo}, {hi}) invalid; min gap is 0.05 s"),
            });
        }
        Ok(())
    }
}

/// Unmixed components of one captcha, for tests that need to measure SNR
/// or check digit placement before peak normalization.
#[derive(Debug, Clone)]
pub struct CaptchaParts {
    pub clean: Vec<f64>,
    pub white: Vec<f64>,
    pub hum: Vec<f64>,
    pub babble: Vec<f64>,
    pub onsets_s: Vec<f64>,
}

/// Renders the clean digit track and each noise component separately.
pub fn synth_captcha_parts(spec: &CaptchaSpec) -> Result<CaptchaParts> {
    spec.validate()?;
    let rate = SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0xCA9C_4A10));

    let lead = rng.random_range(0.8..1.5);
    let gaps: Vec<f64> = (1..spec.digits.len())
        .map(|_| rng.random_range(spec.gap_range_s.0..=spec.gap_range_s.1))
        .collect();
    let tail = rng.random_range(0.8..1.5);

    let mut onsets_s = Vec::with_capacity(spec.digits.len());
    let mut t = lead;
    for (i, _) in spec.digits.iter().enumerate() {
        onsets_s.push(t);
        t += SEGMENT_SECONDS;
        if i < gaps.len() {
            t += gaps[i];
        }
    }
    let total_s = t + tail;
    if total_s > MAX_CLIP_SECONDS {
        return Err(Error::InfeasibleSpec { seconds: total_s });
    }
    let n = (total_s * rate).round() as usize;

    let mut clean = vec![0.0; n];
    for (i, &d) in spec.digits.iter().enumerate() {
        let clip = render_digit(&DigitRenderSpec {
            digit: d,
            base_seed: digit_seed(spec.seed, i),
        })?;
        let start = (onsets_s[i] * rate).round() as usize;
        for (k, &s) in clip.samples().iter().enumerate() {
            clean[start + k] = s;
        }
    }

    // white noise scaled against the clean track's whole-clip power
    let mut white = vec![0.0; n];
    if spec.noise.white_snr_db.is_finite() {
        let p_clean = clean.iter().map(|s| s * s).sum::<f64>() / n as f64;
        let sigma2 = p_clean / 10f64.powf(spec.noise.white_snr_db / 10.0);
        let amp = (3.0 * sigma2).sqrt(); // uniform [-amp, amp] has variance amp^2/3
        for w in &mut white {
            *w = rng.random_range(-amp..=amp);
        }
    }

    let mut hum = vec![0.0; n];
    if spec.noise.hum_amp > 0.0 {
        let phase = rng.random_range(0.0..2.0 * PI);
        for (i, h) in hum.iter_mut().enumerate() {
            *h = spec.noise.hum_amp
                * (2.0 * PI * spec.noise.hum_freq_hz * i as f64 / rate + phase).sin();
        }
    }

    // babble: low-passed noise bursts confined to gap regions
    let mut babble = vec![0.0; n];
    if spec.noise.babble_amp > 0.0 {
        let mut gap_regions: Vec<(f64, f64)> = Vec::new();
        gap_regions.push((0.0, lead));
        for (i, g) in gaps.iter().enumerate() {
            let gap_start = onsets_s[i] + SEGMENT_SECONDS;
            gap_regions.push((gap_start, gap_start + g));
        }
        gap_regions.push((total_s - tail, total_s));
        for (g0, g1) in gap_regions {
            if g1 - g0 < 0.12 || rng.random_range(0.0..1.0) > 0.7 {
                continue;
            }
            let burst_len = rng.random_range(0.08..(g1 - g0).min(0.2));
            let burst_at = rng.random_range(g0..(g1 - burst_len));
            let i0 = (burst_at * rate) as usize;
            let i1 = ((burst_at + burst_len) * rate) as usize;
            let mut lp = 0.0;
            for i in i0..i1.min(n) {
                let x = rng.random_range(-1.0..1.0);
                lp += 0.25 * (x - lp);
                babble[i] = spec.noise.babble_amp * lp * 4.0;
            }
        }
    }

    Ok(CaptchaParts {
        clean,
        white,
        hum,
        babble,
        onsets_s,
    })
}

/// Full captcha: digits at the returned onsets plus noise, peak-normalized
/// to 0.9. Returns (clip, digits, onset seconds).
pub fn synth_captcha(spec: &CaptchaSpec) -> Result<(AudioClip, Vec<u8>, Vec<f64>)> {
    let parts = synth_captcha_parts(spec)?;
    let n = parts.clean.len();
    let mut mix = vec![0.0; n];
    for i in 0..n {
        mix[i] = parts.clean[i] + parts.white[i] + parts.hum[i] + parts.babble[i];
    }
    let peak = mix.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = 0.9 / peak;
        for s in &mut mix {
            *s *= scale;
        }
    }
    let clip = AudioClip::new(mix, SAMPLE_RATE)?;
    Ok((clip, spec.digits.clone(), parts.onsets_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// WAV path relative to the manifest location.
    pub path: String,
    pub digits: Vec<u8>,
    pub onsets_s: Vec<f64>,
    pub split: Split,
}

/// Corpus index: file list with per-file digit labels and onset times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub sample_rate: u32,
    pub entries: Vec<ManifestEntry>,
    /// Per-digit tally over the train split.
    pub counts: BTreeMap<String, usize>,
}

impl CorpusManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| Error::ManifestFormat {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        manifest.validate(path)?;
        Ok(manifest)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |detail: String| Error::ManifestFormat {
            path: path.to_path_buf(),
            detail,
        };
        if self.version != 1 {
            return Err(bad(format!("unsupported manifest version {}", self.version)));
        }
        for entry in &self.entries {
            if entry.digits.len() != entry.onsets_s.len() {
                return Err(bad(format!(
                    "{}: {} digits but {} onsets",
                    entry.path,
                    entry.digits.len(),
                    entry.onsets_s.len()
                )));
            }
            if entry.digits.iter().any(|&d| d > 9) {
                return Err(bad(format!("{}: digit out of range", entry.path)));
            }
            if entry.onsets_s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad(format!("{}: onsets not strictly increasing", entry.path)));
            }
        }
        Ok(())
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub digit_count_range: (usize, usize),
    pub gap_range_s: (f64, f64),
    pub noise: NoiseProfile,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 800,
            n_test: 100,
            digit_count_range: (4, 6),
            gap_range_s: (0.3, 0.8),
            noise: NoiseProfile::default(),
            seed: 42,
        }
    }
}

/// Generates `n_train + n_test` captcha WAVs plus `manifest.json` in
/// `out_dir`. Each entry's randomness derives from (seed, entry index).
pub fn gen_corpus(out_dir: &Path, cfg: &CorpusConfig) -> Result<CorpusManifest> {
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(Error::EmptyInput {
            what: "n_train and n_test must be at least 1",
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let total = cfg.n_train + cfg.n_test;
    let mut entries = Vec::with_capacity(total);
    let mut counts: BTreeMap<String, usize> = (0..10).map(|d| (d.to_string(), 0)).collect();
    for idx in 0..total {
        let split = if idx < cfg.n_train {
            Split::Train
        } else {
            Split::Test
        };
        let within = if idx < cfg.n_train {
            idx
        } else {
            idx - cfg.n_train
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xE147_0000 + idx as u64));
        let count = rng.random_range(cfg.digit_count_range.0..=cfg.digit_count_range.1);
        let digits: Vec<u8> = (0..count).map(|_| rng.random_range(0..=9u8)).collect();
        let spec = CaptchaSpec {
            digits,
            gap_range_s: cfg.gap_range_s,
            noise: cfg.noise.clone(),
            seed: mix_seed(cfg.seed, 0xCAFE_0000 + idx as u64),
        };
        let (clip, digits, onsets_s) = synth_captcha(&spec)?;
        let name = format!("{split}_{within:04}.wav");
        write_wav(&clip, &out_dir.join(&name))?;
        if split == Split::Train {
            for &d in &digits {
                *counts.get_mut(&d.to_string()).expect("digit key") += 1;
            }
        }
        entries.push(ManifestEntry {
            path: name,
            digits,
            onsets_s,
            split,
        });
    }

    let manifest = CorpusManifest {
        version: 1,
        sample_rate: SAMPLE_RATE,
        entries,
        counts,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Resolves a manifest entry's WAV path against the manifest's directory.
pub fn entry_path(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&entry.path)
}
