//! Single-channel PCM audio: the boundary between WAV files and the
//! numerical pipeline.
//!
//! The pipeline's canonical format is 8000 Hz mono 16-bit PCM. `read_wav`
//! accepts any PCM-16 RIFF/WAVE file (stereo is averaged to mono); rate
//! enforcement happens where frame arithmetic needs it, in the pipeline.

use std::path::Path;

use crate::error::{Error, Result};

/// Canonical sample rate of the pipeline, in Hz.
pub const SAMPLE_RATE: u32 = 8000;

const I16_SCALE: f64 = 32768.0;

/// Immutable mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting non-finite samples and a zero rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::ZeroSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAVE PCM-16 file. Stereo is averaged to mono; the sample
/// rate is taken from the header. Samples are scaled by 1/32768, so the
/// result always lies in [-1, 1].
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header = |field| Error::WavHeader {
        path: path.to_path_buf(),
        field,
    };

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(header("RIFF"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(header("WAVE"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).ok_or_else(|| header("chunk size"))?;
        if body_end > bytes.len() {
            return Err(header("chunk size"));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(header("fmt "));
                }
                let audio_format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((audio_format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunk bodies are padded to even length
        pos = body_end + (size & 1);
    }

    let (audio_format, channels, rate, bits) = fmt.ok_or_else(|| header("fmt "))?;
    if audio_format != 1 {
        return Err(Error::WavCodec {
            path: path.to_path_buf(),
            audio_format,
        });
    }
    if bits != 16 {
        return Err(Error::WavBits {
            path: path.to_path_buf(),
            bits,
        });
    }
    if !(channels == 1 || channels == 2) {
        return Err(Error::WavChannels {
            path: path.to_path_buf(),
            channels,
        });
    }
    if rate == 0 {
        return Err(Error::ZeroSampleRate);
    }
    let data = data.ok_or_else(|| header("data"))?;

    let frame_bytes = 2 * channels as usize;
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let base = f * frame_bytes;
        let mut acc = 0.0;
        for c in 0..channels as usize {
            let v = i16::from_le_bytes(data[base + 2 * c..base + 2 * c + 2].try_into().unwrap());
            acc += v as f64 / I16_SCALE;
        }
        samples.push(acc / channels as f64);
    }
    AudioClip::new(samples, rate)
}

/// Writes a clip as mono PCM-16. Samples are scaled by 32768 and clamped to
/// [-32768, 32767]; the file is the canonical 44-byte header plus 2 bytes
/// per sample.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    let n = clip.len();
    let data_bytes = 2 * n as u32;
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in clip.samples() {
        let q = (s * I16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Subtracts the clip mean. Means at or below the summation noise floor
/// (a few ulps of the sample scale, scaled by sqrt(n)) are treated as
/// zero and leave the clip untouched, which makes the operation an exact
/// fixed point: its own output always lands under that floor.
pub fn zero_mean(clip: &AudioClip) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    let mut samples = clip.samples().to_vec();
    let n = samples.len() as f64;
    let scale = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let tol = 8.0 * n.sqrt() * f64::EPSILON * scale;
    for _ in 0..8 {
        let mean = samples.iter().sum::<f64>() / n;
        if mean.abs() <= tol {
            break;
        }
        for s in &mut samples {
            *s -= mean;
        }
    }
    AudioClip::new(samples, clip.sample_rate())
}
