//! End-to-end adaptation on a synthetic domain shift: an enhancer trained
//! on white-noise mixtures is adapted to pink noise using only unpaired
//! pink-noise recordings, via GAN simulation.
//!
//! `cargo run --release --example toy_adaptation -- [gan_epochs] [sigma] [bundle]`
//!
//! With a bundle path, a previously trained bundle is reused (or the new
//! one saved there).

use std::time::Instant;

use noisesim::adapt_eval::{
    evaluate, finetune_se, finetune_se_waveforms, target_spectral_distance, CausalUNet, MetricRegistry, SeBackend,
    SeFinetuneConfig, UNetSpec, DEFAULT_BUCKETS,
};
use noisesim::data::synth::{write_toy_set, NoiseKind, ToySet, ToyUtterance};
use noisesim::data::{Domain, ManifestEntry, SegmentPool};
use noisesim::dsp::{stft, Compression, StftConfig};
use noisesim::losses::PclConfig;
use noisesim::models::{encoder_embed, ConvEncoder, EncoderBackbone, DiscriminatorSpec, EncoderSpec, GeneratorSpec};
use noisesim::simulate::{generate_dataset, DatasetOptions, PerturbationConfig};
use noisesim::train::{
    finetune_encoder, train_gan, EncoderFinetuneConfig, GanBundle, GanTrainConfig, LabeledPool, StageConfig,
    TrainOutputs,
};
use rand::SeedableRng;

fn noisy_of(u: &ToyUtterance) -> (&str, &noisesim::dsp::Waveform) {
    (u.id.as_str(), u.noisy.as_ref().expect("noisy utterance"))
}

/// Scores the mixtures themselves.
struct Unprocessed;

impl SeBackend for Unprocessed {
    fn name(&self) -> &str {
        "unprocessed"
    }
    fn enhance(&self, noisy: &noisesim::dsp::Waveform) -> noisesim::Result<noisesim::dsp::Waveform> {
        Ok(noisy.clone())
    }
    fn train_step(&mut self, _: &noisesim::dsp::Waveform, _: &noisesim::dsp::Waveform) -> noisesim::Result<f64> {
        Ok(0.0)
    }
    fn causal(&self) -> bool {
        true
    }
    fn save(&self, _: &std::path::Path) -> noisesim::Result<()> {
        Ok(())
    }
    fn load(&mut self, _: &std::path::Path) -> noisesim::Result<()> {
        Ok(())
    }
}

fn main() -> noisesim::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let gan_epochs: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let sigma: f64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(2.0);
    let cached = args.get(3).map(std::path::PathBuf::from);
    let work = tempfile::tempdir().expect("temp dir");
    let clock = Instant::now();
    let lap = |what: &str| println!("[{:6.1}s] {what}", clock.elapsed().as_secs_f64());

    let source = ToySet::clean("src", 40).generate(10);
    let vanilla = ToySet::noisy("vanilla", 120, &[NoiseKind::White]).generate(11);
    let target = ToySet::noisy("tgt", 40, &[NoiseKind::Pink]).generate(12);
    let test = ToySet::noisy("test", 20, &[NoiseKind::Pink]).generate(13);
    let classes = ToySet::noisy("cls", 40, &NoiseKind::ALL).generate(14);

    let cfg = StftConfig::default();
    let mut specs = Vec::new();
    for u in &source {
        specs.push(stft(&u.clean, &cfg)?);
    }
    for u in &target {
        specs.push(stft(noisy_of(u).1, &cfg)?);
    }
    let compression = Compression::fit(&specs)?;
    let clean_pool = SegmentPool::from_waveforms(source.iter().map(|u| (u.id.as_str(), &u.clean)), &cfg, compression)?;
    let noisy_pool = SegmentPool::from_waveforms(target.iter().map(noisy_of), &cfg, compression)?;

    // Encoder: noise colour, then target utterance identity.
    let mut encoder = ConvEncoder::new(EncoderSpec::desk(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let stage1 = LabeledPool {
        labels: classes
            .iter()
            .map(|u| NoiseKind::ALL.iter().position(|k| Some(*k) == u.noise_kind).expect("kind"))
            .collect(),
        class_names: NoiseKind::ALL.iter().map(|k| k.to_string()).collect(),
        pool: SegmentPool::from_waveforms(classes.iter().map(noisy_of), &cfg, compression)?,
    };
    let stage2 = LabeledPool::per_utterance(noisy_pool.clone());
    let stage = |epochs| StageConfig {
        epochs,
        lr: 1e-3,
        batch_size: 8,
    };
    let ft = EncoderFinetuneConfig {
        stage1: stage(40),
        stage2: stage(100),
        seed: 0,
    };
    let report = finetune_encoder(&mut encoder, Some(&stage1), Some(&stage2), &ft)?;
    lap(&format!(
        "encoder: stage accuracies {:?}",
        [report.stage1, report.stage2].map(|s| s.map(|s| s.train_accuracy))
    ));
    let norms: Vec<f64> = noisesim::adapt_eval::pool_segments(&noisy_pool)?
        .iter()
        .map(|s| encoder_embed(s, &encoder).map(|e| e.vector().iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt()))
        .collect::<noisesim::Result<_>>()?;
    println!("embedding norm mean {:.3}", norms.iter().sum::<f64>() / norms.len() as f64);

    // GAN.
    let train = GanTrainConfig {
        epochs: gan_epochs,
        checkpoint_every: 0,
        pcl: PclConfig {
            patches: 64,
            negatives: 64,
            proj_dim: 64,
            ..PclConfig::default()
        },
        ..GanTrainConfig::default()
    };
    let mut bundle = GanBundle::new(
        GeneratorSpec::new(4, encoder.embed_dim()),
        DiscriminatorSpec { base_channels: 8 },
        encoder,
        train,
        compression,
    )?;
    let before = target_spectral_distance(&bundle, &clean_pool, &noisy_pool)?;
    match &cached {
        Some(path) if path.exists() => bundle = GanBundle::load(path)?,
        _ => {
            train_gan(&mut bundle, &clean_pool, &noisy_pool, &TrainOutputs::default())?;
            if let Some(path) = &cached {
                bundle.save(path)?;
            }
        }
    }
    let after = target_spectral_distance(&bundle, &clean_pool, &noisy_pool)?;
    lap(&format!("gan: spectral distance {before:.4} -> {after:.4}"));

    // Simulated pairs: every clean utterance of the enhancer's training
    // set is converted, not only the GAN's clean subset.
    let vanilla_manifest = write_toy_set(work.path().join("vanilla"), &vanilla)?;
    let clean_entries: Vec<ManifestEntry> = vanilla_manifest
        .entries()
        .iter()
        .map(|e| ManifestEntry::new(&e.utterance_id, e.clean_path.as_ref().expect("clean reference"), Domain::SourceClean))
        .collect();
    let tgt_manifest = write_toy_set(work.path().join("tgt"), &target)?.filter(|e| e.domain == Domain::TargetNoisy);
    let options = DatasetOptions {
        perturbation: PerturbationConfig { sigma, seed: 3 },
        ..DatasetOptions::default()
    };
    let pairs = generate_dataset(&clean_entries, tgt_manifest.entries(), &bundle, &options, work.path().join("sim"))?;
    let clamp = pairs.iter().map(|p| p.clamp_rate).sum::<f64>() / pairs.len() as f64;
    lap(&format!("simulated {} pairs, mean clamp rate {clamp:.4}", pairs.len()));

    // Vanilla enhancer on white-noise mixtures.
    let mut vanilla_se = CausalUNet::new(UNetSpec::default())?;
    let vanilla_pairs: Vec<_> = vanilla.iter().map(|u| (u.noisy.clone().unwrap(), u.clean.clone())).collect();
    let pre = SeFinetuneConfig {
        epochs: 8,
        seed: 1,
        max_samples: Some(8192),
    };
    finetune_se_waveforms(&mut vanilla_se, &vanilla_pairs, &pre)?;
    lap("vanilla enhancer trained");

    let test_manifest = write_toy_set(work.path().join("test"), &test)?.filter(|e| e.domain == Domain::TargetNoisy);
    let registry = MetricRegistry::default();
    let score = |se: &dyn SeBackend| {
        evaluate(se, &test_manifest, &registry, &["si_snr"], &DEFAULT_BUCKETS).map(|r| r.aggregate["si_snr"])
    };
    let base = score(&Unprocessed)?;
    let vanilla_score = score(&vanilla_se)?;

    let mut adapted = vanilla_se.clone();
    finetune_se(&mut adapted, &pairs, &SeFinetuneConfig::default())?;
    let adapted_score = score(&adapted)?;

    let mut oracle = vanilla_se.clone();
    let oracle_pairs: Vec<_> = target.iter().map(|u| (u.noisy.clone().unwrap(), u.clean.clone())).collect();
    finetune_se_waveforms(&mut oracle, &oracle_pairs, &SeFinetuneConfig::default())?;
    let oracle_score = score(&oracle)?;
    lap("evaluation done");
    println!("SI-SNR (dB): noisy {base:.2}  vanilla {vanilla_score:.2}  adapted {adapted_score:.2}  oracle {oracle_score:.2}");
    Ok(())
}
