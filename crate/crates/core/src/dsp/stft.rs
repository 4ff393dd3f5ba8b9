use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Matrix, Waveform};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// `0.5 - 0.5 cos(2 pi n / N)`, periodic (DFT-even) form.
    PeriodicHann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::PeriodicHann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
    /// Reflect-pads `n_fft / 2` samples on both sides so frame `t` is
    /// centred on sample `t * hop`.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 256,
            hop: 128,
            window: Window::PeriodicHann,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || self.n_fft % 2 != 0 {
            return Err(Error::InvalidInput(format!("n_fft must be even and >= 2, got {}", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::InvalidInput(format!(
                "hop must be in 1..=n_fft, got {} (n_fft {})",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if self.center {
            len / self.hop + 1
        } else if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }
}

/// Dynamic-range mapping applied to magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Compression {
    Linear,
    /// `(ln(1 + |S|) - min) / (max - min)`, with corpus-level constants.
    Log1p { min: f32, max: f32 },
}

impl Compression {
    /// Fits min-max constants of `ln(1 + |S|)` over a corpus of linear
    /// spectrograms.
    pub fn fit<'a>(spectrograms: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Self> {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for s in spectrograms {
            if s.compression != Compression::Linear {
                return Err(Error::InvalidInput("fit expects linear magnitudes".into()));
            }
            for &m in s.magnitude.data() {
                let v = m.ln_1p();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput("no magnitudes to fit compression".into()));
        }
        if hi - lo < 1e-6 {
            hi = lo + 1.0;
        }
        Ok(Compression::Log1p { min: lo, max: hi })
    }

    pub fn compress(&self, magnitude: f32) -> f32 {
        match *self {
            Compression::Linear => magnitude,
            Compression::Log1p { min, max } => (magnitude.ln_1p() - min) / (max - min),
        }
    }

    pub fn decompress(&self, value: f32) -> f32 {
        match *self {
            Compression::Linear => value,
            Compression::Log1p { min, max } => (value * (max - min) + min).exp_m1().max(0.0),
        }
    }
}

/// Magnitude (and optionally phase) time-frequency representation,
/// `bins x frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    magnitude: Matrix,
    phase: Option<Matrix>,
    config: StftConfig,
    compression: Compression,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(
        magnitude: Matrix,
        phase: Option<Matrix>,
        config: StftConfig,
        compression: Compression,
        sample_rate: u32,
    ) -> Result<Self> {
        if let Some(i) = magnitude.data().iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "magnitude entry {i} is negative or not finite"
            )));
        }
        if let Some(p) = &phase {
            if p.shape() != magnitude.shape() {
                return Err(Error::Shape(format!(
                    "phase {:?} vs magnitude {:?}",
                    p.shape(),
                    magnitude.shape()
                )));
            }
        }
        Ok(Self {
            magnitude,
            phase,
            config,
            compression,
            sample_rate,
        })
    }

    pub fn magnitude(&self) -> &Matrix {
        &self.magnitude
    }

    pub fn phase(&self) -> Option<&Matrix> {
        self.phase.as_ref()
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn compression(&self) -> Compression {
        self.compression
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn bins(&self) -> usize {
        self.magnitude.rows()
    }

    pub fn frames(&self) -> usize {
        self.magnitude.cols()
    }

    pub fn without_phase(mut self) -> Self {
        self.phase = None;
        self
    }

    /// Applies `compression` to linear magnitudes.
    pub fn compressed(&self, compression: Compression) -> Result<Self> {
        if self.compression != Compression::Linear {
            return Err(Error::InvalidInput("spectrogram is already compressed".into()));
        }
        Ok(Self {
            magnitude: self.magnitude.map(|m| compression.compress(m)),
            compression,
            ..self.clone()
        })
    }

    /// Back to linear magnitudes.
    pub fn decompressed(&self) -> Self {
        let c = self.compression;
        Self {
            magnitude: self.magnitude.map(|v| c.decompress(v)),
            compression: Compression::Linear,
            ..self.clone()
        }
    }

    /// Replaces the magnitude values, keeping everything else.
    pub fn with_magnitude(&self, magnitude: Matrix) -> Result<Self> {
        if magnitude.shape() != self.magnitude.shape() {
            return Err(Error::Shape(format!(
                "magnitude {:?} vs {:?}",
                magnitude.shape(),
                self.magnitude.shape()
            )));
        }
        Spectrogram::new(
            magnitude,
            self.phase.clone(),
            self.config,
            self.compression,
            self.sample_rate,
        )
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn padded_signal(samples: &[f32], cfg: &StftConfig) -> Vec<f64> {
    if !cfg.center {
        return samples.iter().map(|&v| v as f64).collect();
    }
    let pad = cfg.n_fft / 2;
    let n = samples.len();
    let reflect = n > pad;
    (0..n + 2 * pad)
        .map(|i| {
            let j = i as isize - pad as isize;
            let src = if j < 0 {
                if reflect { -j } else { return 0.0 }
            } else if j >= n as isize {
                if reflect { 2 * n as isize - 2 - j } else { return 0.0 }
            } else {
                j
            };
            samples[src as usize] as f64
        })
        .collect()
}

/// Short-time Fourier transform: linear magnitude and phase, `bins x frames`.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(Error::InvalidInput("empty waveform".into()));
    }
    let frames = cfg.frame_count(w.len());
    if frames == 0 {
        return Err(Error::InvalidInput(format!(
            "waveform of {} samples is shorter than one frame",
            w.len()
        )));
    }
    let bins = cfg.bins();
    let window = cfg.window.coefficients(cfg.n_fft);
    let signal = padded_signal(w.samples(), cfg);
    let fft = plans(cfg.n_fft).forward;
    let mut magnitude = Matrix::zeros(bins, frames);
    let mut phase = Matrix::zeros(bins, frames);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for t in 0..frames {
        let start = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = signal.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex::new(v * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (f, c) in buf.iter().take(bins).enumerate() {
            magnitude.set(f, t, c.norm() as f32);
            phase.set(f, t, c.arg() as f32);
        }
    }
    Spectrogram::new(
        magnitude,
        Some(phase),
        *cfg,
        Compression::Linear,
        w.sample_rate(),
    )
}

/// Weighted overlap-add inverse of [`stft`]. Compressed magnitudes are
/// decompressed first. Output has `(frames - 1) * hop` samples when centred.
pub fn istft(s: &Spectrogram, cfg: &StftConfig) -> Result<Waveform> {
    cfg.validate()?;
    let phase = s.phase().ok_or(Error::PhaseRequired)?;
    if s.bins() != cfg.bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, config expects {}",
            s.bins(),
            cfg.bins()
        )));
    }
    let linear = s.decompressed();
    let magnitude = linear.magnitude();
    let frames = s.frames();
    let n = cfg.n_fft;
    let window = cfg.window.coefficients(n);
    let total = (frames - 1) * cfg.hop + n;
    let mut out = vec![0.0f64; total];
    let mut envelope = vec![0.0f64; total];
    let ifft = plans(n).inverse;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..frames {
        for f in 0..cfg.bins() {
            let c = Complex::from_polar(magnitude.get(f, t) as f64, phase.get(f, t) as f64);
            buf[f] = c;
            if f > 0 && f < n / 2 {
                buf[n - f] = c.conj();
            }
        }
        // DC and Nyquist bins of a real signal are real.
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            out[start + i] += buf[i].re / n as f64 * window[i];
            envelope[start + i] += window[i] * window[i];
        }
    }
    for (v, &e) in out.iter_mut().zip(&envelope) {
        *v = if e > 1e-10 { *v / e } else { 0.0 };
    }
    let (start, len) = if cfg.center {
        (n / 2, (frames - 1) * cfg.hop)
    } else {
        (0, total)
    };
    let samples = out[start..start + len].iter().map(|&v| v as f32).collect();
    Waveform::new(samples, s.sample_rate())
}

/// Combines a (possibly compressed) simulated magnitude with the phase of
/// the clean source utterance and resynthesises a waveform.
pub fn reconstruct_waveform(simulated_magnitude: &Spectrogram, source_phase: &Spectrogram) -> Result<Waveform> {
    let phase = source_phase.phase().ok_or(Error::PhaseRequired)?;
    if simulated_magnitude.magnitude().shape() != phase.shape() {
        return Err(Error::Shape(format!(
            "simulated magnitude {:?} vs source phase {:?}",
            simulated_magnitude.magnitude().shape(),
            phase.shape()
        )));
    }
    let combined = Spectrogram::new(
        simulated_magnitude.magnitude().clone(),
        Some(phase.clone()),
        *source_phase.config(),
        simulated_magnitude.compression(),
        source_phase.sample_rate(),
    )?;
    istft(&combined, source_phase.config())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize, sr: u32) -> Waveform {
        let s = (0..len)
            .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32)
            .collect();
        Waveform::new(s, sr).unwrap()
    }

    #[test]
    fn silence_gives_zero_magnitude() {
        let s = stft(&Waveform::silence(16000, 16000), &StftConfig::default()).unwrap();
        assert_eq!(s.bins(), 129);
        assert!(s.magnitude().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_follows_centre_padding() {
        let s = stft(&sine(440.0, 2048, 16000), &StftConfig::default()).unwrap();
        assert_eq!(s.frames(), 17);
    }

    #[test]
    fn empty_waveform_is_rejected() {
        let w = Waveform::new(vec![], 16000).unwrap();
        assert!(matches!(stft(&w, &StftConfig::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn istft_requires_phase() {
        let s = stft(&sine(440.0, 2048, 16000), &StftConfig::default()).unwrap();
        let err = istft(&s.without_phase(), &StftConfig::default()).unwrap_err();
        assert!(matches!(err, Error::PhaseRequired));
    }

    #[test]
    fn zero_magnitude_synthesises_silence() {
        let s = stft(&sine(440.0, 4096, 16000), &StftConfig::default()).unwrap();
        let zero = s.with_magnitude(Matrix::zeros(s.bins(), s.frames())).unwrap();
        let w = istft(&zero, &StftConfig::default()).unwrap();
        assert!(w.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn compression_round_trips() {
        let c = Compression::Log1p { min: 0.0, max: 3.0 };
        for m in [0.0f32, 0.1, 1.0, 7.5, 19.0] {
            assert!((c.decompress(c.compress(m)) - m).abs() < 1e-4 * (1.0 + m));
        }
    }

    #[test]
    fn fitted_compression_maps_corpus_into_unit_range() {
        let s = stft(&sine(1000.0, 8000, 16000), &StftConfig::default()).unwrap();
        let c = Compression::fit([&s]).unwrap();
        let comp = s.compressed(c).unwrap();
        let (lo, hi) = comp
            .magnitude()
            .data()
            .iter()
            .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo.abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);
    }
}
