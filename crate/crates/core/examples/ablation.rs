//! Trains the full generator and its two ablations on the same toy domain
//! and compares how closely each reproduces the target noise spectrum.
//!
//! `cargo run --release --example ablation -- [epochs]`

use noisesim::adapt_eval::{run_ablation, AblationVariant};
use noisesim::data::synth::{NoiseKind, ToySet};
use noisesim::data::SegmentPool;
use noisesim::dsp::{stft, Compression, StftConfig};
use noisesim::losses::PclConfig;
use noisesim::models::{ConvEncoder, DiscriminatorSpec, EncoderBackbone, EncoderSpec, GeneratorSpec};
use noisesim::train::{finetune_encoder, EncoderFinetuneConfig, GanBundle, GanTrainConfig, LabeledPool, StageConfig, TrainOutputs};
use rand::SeedableRng;

fn main() -> noisesim::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    let source = ToySet::clean("src", 40).generate(10);
    let target = ToySet::noisy("tgt", 40, &[NoiseKind::Pink]).generate(12);

    let cfg = StftConfig::default();
    let mut specs = Vec::new();
    for u in &source {
        specs.push(stft(&u.clean, &cfg)?);
    }
    for u in &target {
        specs.push(stft(u.noisy.as_ref().unwrap(), &cfg)?);
    }
    let compression = Compression::fit(&specs)?;
    let clean = SegmentPool::from_waveforms(source.iter().map(|u| (u.id.as_str(), &u.clean)), &cfg, compression)?;
    let noisy = SegmentPool::from_waveforms(target.iter().map(|u| (u.id.as_str(), u.noisy.as_ref().unwrap())), &cfg, compression)?;

    // Utterance-identity fine-tuning only; enough to make embeddings informative.
    let mut encoder = ConvEncoder::new(EncoderSpec::desk(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let ft = EncoderFinetuneConfig {
        stage2: StageConfig { epochs: 100, lr: 1e-3, batch_size: 8 },
        ..Default::default()
    };
    finetune_encoder(&mut encoder, None, Some(&LabeledPool::per_utterance(noisy.clone())), &ft)?;

    let train = GanTrainConfig {
        epochs,
        checkpoint_every: 0,
        pcl: PclConfig { patches: 64, negatives: 64, proj_dim: 64, ..PclConfig::default() },
        ..GanTrainConfig::default()
    };
    let base = GanBundle::new(
        GeneratorSpec::new(4, encoder.embed_dim()),
        DiscriminatorSpec { base_channels: 8 },
        encoder,
        train,
        compression,
    )?;
    println!("config\tinitial\tfinal");
    for v in AblationVariant::ALL {
        let r = run_ablation(v, &base, &clean, &noisy, &TrainOutputs::default())?;
        println!("{v}\t{:.4}\t{:.4}", r.initial_distance, r.spectral_distance);
    }
    Ok(())
}
