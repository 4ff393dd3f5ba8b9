//! Time-frequency front end: STFT analysis and synthesis, magnitude
//! compression, fixed-size segmentation and SNR measurement.
//!
//! All functions here are pure; identical inputs give identical outputs.

mod matrix;
mod segment;
mod snr;
mod stft;
mod wav;

pub use matrix::Matrix;
pub use segment::{reassemble, segment, SpectrogramSegment, SEGMENT_BINS, SEGMENT_FRAMES};
pub use snr::{estimate_snr, estimate_snr_blind, BlindSnrConfig};
pub use stft::{istft, reconstruct_waveform, stft, Compression, Spectrogram, StftConfig};
pub use wav::{read_wav, write_wav, WavFormat};

use crate::error::{Error, Result};

/// Default sample rate of the whole pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono time-domain signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
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

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|&v| (v as f64).powi(2)).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.energy() / self.samples.len() as f64).sqrt()
        }
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Scales down so that `|sample| <= peak`; quieter signals are untouched.
    pub fn limit_peak(mut self, peak: f32) -> Self {
        let current = self.peak();
        if current > peak && current > 0.0 {
            let g = peak / current;
            self.samples.iter_mut().for_each(|v| *v *= g);
        }
        self
    }

    pub fn scaled(mut self, gain: f32) -> Self {
        self.samples.iter_mut().for_each(|v| *v *= gain);
        self
    }

    /// Truncates or zero-extends to `len` samples.
    pub fn fit_length(mut self, len: usize) -> Self {
        self.samples.resize(len, 0.0);
        self
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Decimates by an integer factor after a windowed-sinc low-pass.
    /// Only integer ratios (e.g. 48 kHz to 16 kHz) are supported.
    pub fn resample_to(&self, target_rate: u32) -> Result<Self> {
        if target_rate == self.sample_rate {
            return Ok(self.clone());
        }
        if target_rate == 0 || self.sample_rate % target_rate != 0 {
            return Err(Error::Unsupported(format!(
                "resampling {} Hz to {} Hz (only integer decimation)",
                self.sample_rate, target_rate
            )));
        }
        let factor = (self.sample_rate / target_rate) as usize;
        let taps = 16 * factor + 1;
        let mid = (taps / 2) as f64;
        let cutoff = 0.5 / factor as f64 * 0.95;
        let kernel: Vec<f64> = (0..taps)
            .map(|i| {
                let t = i as f64 - mid;
                let sinc = if t == 0.0 {
                    2.0 * cutoff
                } else {
                    (2.0 * std::f64::consts::PI * cutoff * t).sin() / (std::f64::consts::PI * t)
                };
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos();
                sinc * w
            })
            .collect();
        let norm: f64 = kernel.iter().sum();
        let n_out = self.samples.len().div_ceil(factor);
        let mut out = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let centre = (o * factor) as isize;
            let mut acc = 0.0;
            for (k, &h) in kernel.iter().enumerate() {
                let idx = centre + k as isize - mid as isize;
                if idx >= 0 && (idx as usize) < self.samples.len() {
                    acc += h * self.samples[idx as usize] as f64;
                }
            }
            out.push((acc / norm) as f32);
        }
        Waveform::new(out, target_rate)
    }
}
