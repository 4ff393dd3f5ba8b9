//! Two-stage encoder fine-tuning on synthetic noise: noise-colour
//! classification, then one class per target utterance.

use std::time::Instant;

use noisesim::adapt_eval::{pool_embeddings, silhouette};
use noisesim::data::synth::{NoiseKind, ToySet};
use noisesim::data::SegmentPool;
use noisesim::dsp::{stft, Compression, StftConfig};
use noisesim::models::{ConvEncoder, EncoderSpec};
use noisesim::train::{finetune_encoder, EncoderFinetuneConfig, LabeledPool, StageConfig};
use rand::SeedableRng;

fn main() -> noisesim::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let kinds = ToySet::noisy("cls", 40, &NoiseKind::ALL).generate(1);
    let target = ToySet::noisy("tgt", 40, &[NoiseKind::Pink]).generate(2);
    let cfg = StftConfig::default();
    let all: Vec<_> = kinds.iter().chain(&target).map(|u| stft(u.noisy.as_ref().unwrap(), &cfg)).collect::<Result<_, _>>()?;
    let compression = Compression::fit(&all)?;
    let pool = |set: &[noisesim::data::synth::ToyUtterance]| {
        SegmentPool::from_waveforms(set.iter().map(|u| (u.id.as_str(), u.noisy.as_ref().unwrap())), &cfg, compression)
    };
    let stage1 = LabeledPool {
        labels: kinds.iter().map(|u| NoiseKind::ALL.iter().position(|k| Some(*k) == u.noise_kind).unwrap()).collect(),
        class_names: NoiseKind::ALL.iter().map(|k| k.to_string()).collect(),
        pool: pool(&kinds)?,
    };
    let stage2 = LabeledPool::per_utterance(pool(&target)?);
    let mut enc = ConvEncoder::new(EncoderSpec::desk(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let stage = |epochs| StageConfig { epochs, lr: 1e-3, batch_size: 8 };
    let ft = EncoderFinetuneConfig { stage1: stage(40), stage2: stage(100), seed: 0 };
    let spread = |enc: &ConvEncoder<f32>| -> noisesim::Result<f64> {
        let points: Vec<Vec<f64>> = pool_embeddings(&stage1.pool, enc)?
            .iter()
            .map(|e| e.vector().iter().map(|&v| v as f64).collect())
            .collect();
        silhouette(&points, &stage1.labels)
    };
    let before = spread(&enc)?;
    let t = Instant::now();
    let report = finetune_encoder(&mut enc, Some(&stage1), Some(&stage2), &ft)?;
    println!("{:.1}s; noise-colour silhouette {before:.3} -> {:.3}", t.elapsed().as_secs_f64(), spread(&enc)?);
    for s in [report.stage1, report.stage2].into_iter().flatten() {
        println!("{} classes: accuracy {:.3}, loss {:?}", s.classes, s.train_accuracy, s.epoch_losses.last());
    }
    Ok(())
}
