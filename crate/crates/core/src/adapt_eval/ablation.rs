use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SegmentPool;
use crate::dsp::{segment, Compression, Spectrogram, SpectrogramSegment, StftConfig, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::models::{encoder_embed, NoiseEmbedding};
use crate::losses::LossReport;
use crate::train::{train_gan, GanBundle, GanTrainConfig, TrainOutputs};

/// Tiled segments of every utterance in a pool.
pub fn pool_segments(pool: &SegmentPool) -> Result<Vec<SpectrogramSegment>> {
    let mut out = Vec::new();
    for (i, id) in pool.ids().iter().enumerate() {
        let spec = Spectrogram::new(
            pool.magnitude(i).clone(),
            None,
            StftConfig::default(),
            Compression::Linear,
            SAMPLE_RATE,
        )?;
        out.extend(segment(&spec, id)?);
    }
    Ok(out)
}

/// Mean value of each frequency bin over the valid frames of `segments`.
pub fn spectral_profile(segments: &[SpectrogramSegment]) -> Vec<f64> {
    let Some(first) = segments.first() else {
        return Vec::new();
    };
    let rows = first.data().rows();
    let mut sum = vec![0.0; rows];
    let mut frames = 0usize;
    for s in segments {
        for (r, acc) in sum.iter_mut().enumerate() {
            *acc += s.data().row(r)[..s.valid_frames()].iter().map(|&v| v as f64).sum::<f64>();
        }
        frames += s.valid_frames();
    }
    sum.into_iter().map(|v| v / frames.max(1) as f64).collect()
}

/// Mean absolute difference between two profiles.
pub fn profile_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Generator outputs for every clean segment, conditioned on target
/// embeddings taken in turn from the segments of `noisy`, clamped to
/// `[0, 1]`.
pub fn generated_segments(bundle: &GanBundle, clean: &SegmentPool, noisy: &SegmentPool) -> Result<Vec<SpectrogramSegment>> {
    let sources = pool_segments(clean)?;
    let embeddings: Vec<NoiseEmbedding> = if bundle.train.use_embeddings {
        pool_segments(noisy)?
            .iter()
            .map(|s| encoder_embed(s, &bundle.encoder))
            .collect::<Result<_>>()?
    } else {
        vec![NoiseEmbedding::zeros(bundle.embed_dim(), "zero")]
    };
    if embeddings.is_empty() {
        return Err(Error::InvalidInput("no target segments to condition on".into()));
    }
    sources
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let e = &embeddings[k % embeddings.len()];
            let out = bundle.generator.generate(s.data(), Some(e.vector()))?.map(|v| v.clamp(0.0, 1.0));
            s.with_data(out)
        })
        .collect()
}

/// Distance between the spectral profile of generated segments and that
/// of the real target segments; the desk-scale proxy for how well the
/// generator reproduces the target noise.
pub fn target_spectral_distance(bundle: &GanBundle, clean: &SegmentPool, noisy: &SegmentPool) -> Result<f64> {
    let generated = spectral_profile(&generated_segments(bundle, clean, noisy)?);
    let target = spectral_profile(&pool_segments(noisy)?);
    Ok(profile_distance(&generated, &target))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    /// Embedding-consistency weight set to zero.
    NoNse,
    /// Every FiLM site sees a fixed zero embedding.
    NoEmbeddings,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 3] = [Self::Full, Self::NoNse, Self::NoEmbeddings];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoNse => "no_nse",
            Self::NoEmbeddings => "no_embeddings",
        }
    }

    pub fn apply(self, mut cfg: GanTrainConfig) -> GanTrainConfig {
        match self {
            Self::Full => {}
            Self::NoNse => cfg.lambda_nse = 0.0,
            Self::NoEmbeddings => cfg.use_embeddings = false,
        }
        cfg
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation `{s}` (expected full, no_nse or no_embeddings)")))
    }
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub variant: AblationVariant,
    pub spectral_distance: f64,
    pub initial_distance: f64,
    pub final_loss: Option<LossReport>,
    pub bundle: GanBundle,
}

/// Trains `base` (an untrained bundle) under `variant` and measures the
/// target spectral distance before and after. The same initial weights
/// and batch order are used for every variant.
pub fn run_ablation(
    variant: AblationVariant,
    base: &GanBundle,
    clean: &SegmentPool,
    noisy: &SegmentPool,
    outputs: &TrainOutputs,
) -> Result<AblationResult> {
    let mut bundle = base.clone();
    bundle.train = variant.apply(base.train);
    bundle.optimizer = None;
    let initial_distance = target_spectral_distance(&bundle, clean, noisy)?;
    let reports = train_gan(&mut bundle, clean, noisy, outputs)?;
    let spectral_distance = target_spectral_distance(&bundle, clean, noisy)?;
    log::info!("{variant}: spectral distance {initial_distance:.4} -> {spectral_distance:.4}");
    Ok(AblationResult {
        variant,
        spectral_distance,
        initial_distance,
        final_loss: reports.last().copied(),
        bundle,
    })
}
