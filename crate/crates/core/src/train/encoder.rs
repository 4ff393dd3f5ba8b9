use noisesim_autodiff::{Adam, AdamConfig, Graph, Var};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EncoderFinetuneConfig, StageConfig};
use crate::data::{Manifest, SegmentPool};
use crate::dsp::{segment, SpectrogramSegment};
use crate::error::{Error, Result};
use crate::models::{valid_input, ClassifierHead, ConvEncoder, EncoderBackbone};
use crate::rng;

/// Utterances with a class index each.
#[derive(Clone, Debug)]
pub struct LabeledPool {
    pub pool: SegmentPool,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledPool {
    /// Classes are the noise-type labels of `manifest` (looked up by id).
    pub fn by_noise_type(pool: SegmentPool, manifest: &Manifest) -> Result<Self> {
        let class_names = manifest.noise_types();
        let labels = pool
            .ids()
            .iter()
            .map(|id| {
                let ty = manifest
                    .get(id)
                    .and_then(|e| e.noise_type.as_deref())
                    .ok_or_else(|| Error::Config(format!("utterance `{id}` has no noise-type label")))?;
                Ok(class_names.iter().position(|c| c == ty).expect("type listed"))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            pool,
            labels,
            class_names,
        })
    }

    /// One class per utterance.
    pub fn per_utterance(pool: SegmentPool) -> Self {
        Self {
            labels: (0..pool.len()).collect(),
            class_names: pool.ids().to_vec(),
            pool,
        }
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub classes: usize,
    pub epoch_losses: Vec<f64>,
    /// Fraction of training utterances classified correctly.
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub stage1: Option<StageReport>,
    pub stage2: Option<StageReport>,
}

fn embed_batch<'g>(enc: &ConvEncoder<f32>, p: &noisesim_autodiff::Bound<'g, f32>, g: &'g Graph<f32>, segs: &[SpectrogramSegment]) -> Result<Var<'g, f32>> {
    let rows = segs
        .iter()
        .map(|s| enc.embed(p, g.constant(valid_input(s)?)))
        .collect::<Result<Vec<_>>>()?;
    if rows.len() == 1 {
        Ok(rows[0])
    } else {
        Ok(Var::concat_batch(&rows)?)
    }
}

/// Utterance-level accuracy: segment logits are averaged, weighted by
/// their valid frames, before the arg max.
fn accuracy(enc: &ConvEncoder<f32>, head: &ClassifierHead<f32>, data: &LabeledPool) -> Result<f64> {
    let mut hits = 0usize;
    for (i, &label) in data.labels.iter().enumerate() {
        let spec = crate::dsp::Spectrogram::new(
            data.pool.magnitude(i).clone(),
            None,
            crate::dsp::StftConfig::default(),
            crate::dsp::Compression::Linear,
            crate::dsp::SAMPLE_RATE,
        )?;
        let mut score = vec![0.0f64; data.classes()];
        for seg in segment(&spec, &data.pool.ids()[i])? {
            let logits = crate::models::encoder_classify(&seg, enc, Some(head))?;
            for (s, l) in score.iter_mut().zip(logits) {
                *s += seg.valid_frames() as f64 * l as f64;
            }
        }
        let best = score
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        hits += usize::from(best == label);
    }
    Ok(hits as f64 / data.labels.len().max(1) as f64)
}

/// Cross-entropy training of encoder + a fresh head on random crops.
fn run_stage(enc: &mut ConvEncoder<f32>, data: &LabeledPool, cfg: &StageConfig, seed: u64, stage: u64) -> Result<StageReport> {
    if data.pool.is_empty() {
        return Err(Error::InvalidInput("no utterances for encoder fine-tuning".into()));
    }
    let mut r = rng::stream(seed, &[rng::tag("encoder"), stage]);
    let mut head = ClassifierHead::new(enc.embed_dim(), data.classes(), &mut r)?;
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut enc_opt = Adam::new(enc.params(), adam_cfg);
    let mut head_opt = Adam::new(head.params(), adam_cfg);
    let mut order: Vec<usize> = (0..data.pool.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let segs = chunk
                .iter()
                .map(|&i| data.pool.crop(i, &mut r))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let g = Graph::new();
            let ep = enc.params().bind(&g, true);
            let hp = head.params().bind(&g, true);
            let logits = head.logits(&hp, embed_batch(enc, &ep, &g, &segs)?)?;
            let loss = logits.log_softmax_rows()?.select_per_row(&labels)?.mean_all().neg();
            let value = loss.item() as f64;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    component: format!("encoder stage {stage} cross-entropy"),
                    step: epoch as u64,
                });
            }
            let mut grads = g.backward(loss);
            enc_opt.step(enc.params_mut(), &ep.gradients(&mut grads));
            head_opt.step(head.params_mut(), &hp.gradients(&mut grads));
            sum += value;
            batches += 1;
        }
        epoch_losses.push(sum / batches as f64);
    }
    let train_accuracy = accuracy(enc, &head, data)?;
    log::info!(
        "encoder stage {stage}: {} classes, final loss {:.4}, train accuracy {:.3}",
        data.classes(),
        epoch_losses.last().copied().unwrap_or(f64::NAN),
        train_accuracy
    );
    Ok(StageReport {
        classes: data.classes(),
        epoch_losses,
        train_accuracy,
    })
}

/// Two-stage fine-tuning: noise-type classification, then per-utterance
/// classification of the target utterances. Either stage may be skipped;
/// the heads are discarded and only the backbone is kept.
pub fn finetune_encoder(
    encoder: &mut ConvEncoder<f32>,
    stage1: Option<&LabeledPool>,
    stage2: Option<&LabeledPool>,
    cfg: &EncoderFinetuneConfig,
) -> Result<FinetuneReport> {
    let s1 = stage1
        .map(|d| run_stage(encoder, d, &cfg.stage1, cfg.seed, 1))
        .transpose()?;
    let s2 = stage2
        .map(|d| run_stage(encoder, d, &cfg.stage2, cfg.seed, 2))
        .transpose()?;
    Ok(FinetuneReport { stage1: s1, stage2: s2 })
}
