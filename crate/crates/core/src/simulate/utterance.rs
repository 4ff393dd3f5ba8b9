use crate::dsp::{reassemble, reconstruct_waveform, segment, stft, Spectrogram, Waveform};
use crate::error::{Error, Result};
use crate::models::{encoder_embed, NoiseEmbedding};
use crate::rng;
use crate::train::GanBundle;

use super::{perturb_embedding_with, PerturbationConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutput {
    pub waveform: Waveform,
    /// Fraction of generated (unpadded) bins clamped into `[0, 1]`.
    pub clamp_rate: f64,
}

fn compressed(bundle: &GanBundle, w: &Waveform) -> Result<Spectrogram> {
    if w.sample_rate() != crate::dsp::SAMPLE_RATE {
        return Err(Error::InvalidInput(format!(
            "expected {} Hz audio, got {} Hz",
            crate::dsp::SAMPLE_RATE,
            w.sample_rate()
        )));
    }
    stft(w, &bundle.stft)?.compressed(bundle.compression)
}

/// One embedding per segment of `target` (padding ignored).
pub fn embed_utterance(bundle: &GanBundle, target: &Waveform, target_id: &str) -> Result<Vec<NoiseEmbedding>> {
    let spec = compressed(bundle, target)?;
    segment(&spec, target_id)?
        .iter()
        .map(|s| encoder_embed(s, &bundle.encoder))
        .collect()
}

/// Converts `clean` towards the noise of `target`: every clean segment is
/// generated with the next target-segment embedding (cycling), all shifted
/// by one perturbation drawn for this utterance; the clean phase is reused
/// and the result trimmed to the clean length.
pub fn simulate_utterance(
    clean: &Waveform,
    target: &Waveform,
    target_id: &str,
    bundle: &GanBundle,
    cfg: &PerturbationConfig,
) -> Result<SimulationOutput> {
    cfg.validate()?;
    if !bundle.target_ids.is_empty() && !bundle.target_ids.iter().any(|t| t == target_id) {
        log::warn!("target `{target_id}` was not among the training targets of this bundle");
    }
    let clean_spec = compressed(bundle, clean)?;
    let embeddings = if bundle.train.use_embeddings {
        let base = embed_utterance(bundle, target, target_id)?;
        let mut r = rng::stream(cfg.seed, &[rng::tag("perturb")]);
        let zero = NoiseEmbedding::zeros(bundle.embed_dim(), target_id);
        let shift = perturb_embedding_with(&zero, cfg.sigma, &mut r)?;
        base.into_iter()
            .map(|e| {
                let v = e.vector().iter().zip(shift.vector()).map(|(a, b)| a + b).collect();
                e.with_vector(v)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![NoiseEmbedding::zeros(bundle.embed_dim(), target_id)]
    };
    let segments = segment(&clean_spec, "clean")?;
    let mut clamped = 0usize;
    let mut counted = 0usize;
    let mut generated = Vec::with_capacity(segments.len());
    for (k, seg) in segments.iter().enumerate() {
        let e = &embeddings[k % embeddings.len()];
        let mut out = bundle.generator.generate(seg.data(), Some(e.vector()))?;
        let cols = out.cols();
        let valid = seg.valid_frames();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Divergence {
                    component: "generator output".into(),
                    step: bundle.step,
                });
            }
            if i % cols < valid {
                counted += 1;
                if *v < 0.0 || *v > 1.0 {
                    clamped += 1;
                }
            }
            *v = v.clamp(0.0, 1.0);
        }
        generated.push(seg.with_data(out)?);
    }
    let sim = clean_spec.with_magnitude(reassemble(&generated)?)?;
    let waveform = reconstruct_waveform(&sim, &clean_spec)?.fit_length(clean.len());
    let clamp_rate = clamped as f64 / counted.max(1) as f64;
    Ok(SimulationOutput { waveform, clamp_rate })
}
