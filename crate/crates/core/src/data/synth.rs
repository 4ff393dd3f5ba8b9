//! Synthetic corpora: harmonic "speech-like" tone sequences and coloured
//! noises, used by the tests, the examples and desk-scale runs.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Domain, Manifest, ManifestEntry};
use crate::dsp::{write_wav, WavFormat, Waveform};
use crate::error::{Error, IoContext, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Hum,
    Band,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Brown,
        NoiseKind::Hum,
        NoiseKind::Band,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Hum => "hum",
            NoiseKind::Band => "band",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown noise kind `{s}`")))
    }
}

/// White noise reshaped to a power spectrum `|f|^-alpha`, restricted to
/// `[lo_hz, hi_hz]`.
fn shaped(len: usize, sr: u32, alpha: f64, lo_hz: f64, hi_hz: f64, r: &mut impl Rng) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(StandardNormal.sample(r), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(len - k);
        let f = bin as f64 * sr as f64 / len as f64;
        *v *= if bin == 0 || f < lo_hz || f > hi_hz {
            0.0
        } else {
            f.powf(-alpha / 2.0)
        };
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

fn unit_rms(mut v: Vec<f64>) -> Vec<f32> {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
    v.into_iter().map(|x| x as f32).collect()
}

/// Unit-RMS noise of the given colour.
pub fn noise(kind: NoiseKind, len: usize, sample_rate: u32, r: &mut impl Rng) -> Waveform {
    let nyq = sample_rate as f64 / 2.0;
    let raw = match kind {
        NoiseKind::White => (0..len).map(|_| StandardNormal.sample(r)).collect(),
        NoiseKind::Pink => shaped(len, sample_rate, 1.0, 20.0, nyq, r),
        NoiseKind::Brown => shaped(len, sample_rate, 2.0, 20.0, nyq, r),
        NoiseKind::Band => shaped(len, sample_rate, 0.0, 2000.0, 4000.0, r),
        NoiseKind::Hum => {
            let f0 = r.random_range(50.0..70.0);
            let phases: Vec<f64> = (0..8).map(|_| r.random_range(0.0..2.0 * PI)).collect();
            (0..len)
                .map(|i| {
                    let t = i as f64 / sample_rate as f64;
                    let tonal: f64 = phases
                        .iter()
                        .enumerate()
                        .map(|(h, p)| (2.0 * PI * f0 * (h + 1) as f64 * t + p).sin() / (h + 1) as f64)
                        .sum();
                    let hiss: f64 = StandardNormal.sample(r);
                    tonal + 0.1 * hiss
                })
                .collect()
        }
    };
    Waveform::new(unit_rms(raw), sample_rate).expect("finite noise")
}

/// Sequence of harmonic notes (100-300 Hz fundamentals) separated by short
/// pauses, over a faint noise floor so that no region is digitally silent.
pub fn tone_utterance(len: usize, sample_rate: u32, r: &mut impl Rng) -> Waveform {
    let sr = sample_rate as f64;
    let mut out = vec![0.0f64; len];
    let mut t = r.random_range(0..len / 8 + 1);
    while t < len {
        let dur = ((r.random_range(0.15..0.35) * sr) as usize).min(len - t);
        let f0 = r.random_range(100.0..300.0);
        let amp = r.random_range(0.15..0.3);
        for i in 0..dur {
            let env = (PI * i as f64 / dur as f64).sin();
            let ph = 2.0 * PI * f0 * i as f64 / sr;
            let v: f64 = (1..8).map(|h| (h as f64 * ph).sin() / h as f64).sum();
            out[t + i] = amp * env * v;
        }
        t += dur + (r.random_range(0.05..0.2) * sr) as usize;
    }
    for v in out.iter_mut() {
        let d: f64 = StandardNormal.sample(r);
        *v += 1e-4 * d;
    }
    Waveform::new(out.into_iter().map(|v| v as f32).collect(), sample_rate).expect("finite tones")
}

/// `clean + g * noise` with `g` chosen so the mixture has exactly `snr_db`.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    if clean.len() != noise.len() {
        return Err(Error::InvalidInput(format!(
            "clean has {} samples, noise {}",
            clean.len(),
            noise.len()
        )));
    }
    let (ec, en) = (clean.energy(), noise.energy());
    if ec == 0.0 || en == 0.0 {
        return Err(Error::InvalidInput("cannot mix silent signals at an SNR".into()));
    }
    let g = (ec / en / 10f64.powf(snr_db / 10.0)).sqrt();
    let mixed = clean
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(&c, &n)| (c as f64 + g * n as f64) as f32)
        .collect();
    Waveform::new(mixed, clean.sample_rate())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyUtterance {
    pub id: String,
    pub clean: Waveform,
    /// `None` for clean-only utterances.
    pub noisy: Option<Waveform>,
    pub noise_kind: Option<NoiseKind>,
    pub snr_db: Option<f64>,
}

/// Recipe for a set of synthetic utterances.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySet {
    pub prefix: String,
    pub count: usize,
    /// Noise colours, cycled over the utterances; empty for clean only.
    pub kinds: Vec<NoiseKind>,
    pub snr_range_db: (f64, f64),
    pub duration_secs: (f64, f64),
    pub sample_rate: u32,
}

impl ToySet {
    pub fn clean(prefix: &str, count: usize) -> Self {
        Self {
            prefix: prefix.into(),
            count,
            kinds: Vec::new(),
            snr_range_db: (0.0, 15.0),
            duration_secs: (1.0, 1.6),
            sample_rate: crate::dsp::SAMPLE_RATE,
        }
    }

    pub fn noisy(prefix: &str, count: usize, kinds: &[NoiseKind]) -> Self {
        Self {
            kinds: kinds.to_vec(),
            ..Self::clean(prefix, count)
        }
    }

    pub fn with_snr_range(mut self, lo: f64, hi: f64) -> Self {
        self.snr_range_db = (lo, hi);
        self
    }

    pub fn with_duration(mut self, lo: f64, hi: f64) -> Self {
        self.duration_secs = (lo, hi);
        self
    }

    /// Utterance `i` depends only on `(seed, prefix, i)`.
    pub fn generate(&self, seed: u64) -> Vec<ToyUtterance> {
        (0..self.count)
            .map(|i| {
                let mut r = rng::stream(seed, &[rng::tag(&self.prefix), i as u64]);
                let (lo, hi) = self.duration_secs;
                let secs = if hi > lo { r.random_range(lo..hi) } else { lo };
                let len = (secs * self.sample_rate as f64) as usize;
                let clean = tone_utterance(len, self.sample_rate, &mut r);
                let kind = (!self.kinds.is_empty()).then(|| self.kinds[i % self.kinds.len()]);
                let (noisy, snr) = match kind {
                    None => (None, None),
                    Some(k) => {
                        let (a, b) = self.snr_range_db;
                        let snr = if b > a { r.random_range(a..b) } else { a };
                        let n = noise(k, len, self.sample_rate, &mut r);
                        (Some(mix_at_snr(&clean, &n, snr).expect("non-silent")), Some(snr))
                    }
                };
                let id = match kind {
                    Some(k) => format!("{}_{}_{i:04}", self.prefix, k),
                    None => format!("{}_{i:04}", self.prefix),
                };
                ToyUtterance {
                    id,
                    clean,
                    noisy,
                    noise_kind: kind,
                    snr_db: snr,
                }
            })
            .collect()
    }
}

/// Writes `clean/<id>.wav` (and `noisy/<id>.wav` for noisy utterances) as
/// float WAV under `dir`, returning a manifest over the written files: noisy
/// utterances are target-domain entries with clean references, the rest are
/// source-domain entries.
pub fn write_toy_set(dir: impl AsRef<Path>, utterances: &[ToyUtterance]) -> Result<Manifest> {
    let dir = dir.as_ref();
    let clean_dir = dir.join("clean");
    let noisy_dir = dir.join("noisy");
    fs::create_dir_all(&clean_dir).at(&clean_dir)?;
    let mut entries = Vec::with_capacity(utterances.len());
    for u in utterances {
        let clean_path = clean_dir.join(format!("{}.wav", u.id));
        write_wav(&clean_path, &u.clean, WavFormat::Float32)?;
        let entry = match &u.noisy {
            None => ManifestEntry::new(&u.id, &clean_path, Domain::SourceClean),
            Some(noisy) => {
                fs::create_dir_all(&noisy_dir).at(&noisy_dir)?;
                let noisy_path = noisy_dir.join(format!("{}.wav", u.id));
                write_wav(&noisy_path, noisy, WavFormat::Float32)?;
                let mut e = ManifestEntry::new(&u.id, &noisy_path, Domain::TargetNoisy).with_clean(&clean_path);
                e.noise_type = u.noise_kind.map(|k| k.name().to_string());
                e.snr_db = u.snr_db;
                e
            }
        };
        entries.push(entry);
    }
    Manifest::new(entries)
}
