//! Simulated pairs from a briefly trained generator, with a sweep over the
//! embedding perturbation scale.
//!
//! `cargo run --release --example simulate_dataset -- [gan_epochs]`

use noisesim::adapt_eval::si_snr;
use noisesim::data::synth::{write_toy_set, NoiseKind, ToySet};
use noisesim::data::{Domain, SegmentPool};
use noisesim::dsp::{read_wav, stft, Compression, StftConfig};
use noisesim::losses::PclConfig;
use noisesim::models::{ConvEncoder, DiscriminatorSpec, EncoderBackbone, EncoderSpec, GeneratorSpec};
use noisesim::simulate::{sigma_sweep, DatasetOptions};
use noisesim::train::{train_gan, GanBundle, GanTrainConfig, TrainOutputs};
use rand::SeedableRng;

fn main() -> noisesim::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let dir = tempfile::tempdir().expect("temp dir");
    let source = ToySet::clean("src", 12).generate(1);
    let target = ToySet::noisy("tgt", 12, &[NoiseKind::Brown]).generate(2);

    let cfg = StftConfig::default();
    let specs = source
        .iter()
        .map(|u| &u.clean)
        .chain(target.iter().filter_map(|u| u.noisy.as_ref()))
        .map(|w| stft(w, &cfg))
        .collect::<noisesim::Result<Vec<_>>>()?;
    let compression = Compression::fit(&specs)?;
    let clean_pool = SegmentPool::from_waveforms(source.iter().map(|u| (u.id.as_str(), &u.clean)), &cfg, compression)?;
    let noisy_pool =
        SegmentPool::from_waveforms(target.iter().map(|u| (u.id.as_str(), u.noisy.as_ref().unwrap())), &cfg, compression)?;

    let encoder = ConvEncoder::new(EncoderSpec::desk(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let train = GanTrainConfig {
        epochs,
        checkpoint_every: 0,
        pcl: PclConfig { patches: 32, negatives: 32, proj_dim: 32, ..PclConfig::default() },
        ..GanTrainConfig::default()
    };
    let mut bundle = GanBundle::new(
        GeneratorSpec::new(4, encoder.embed_dim()),
        DiscriminatorSpec { base_channels: 8 },
        encoder,
        train,
        compression,
    )?;
    train_gan(&mut bundle, &clean_pool, &noisy_pool, &TrainOutputs::default())?;

    let clean = write_toy_set(dir.path().join("src"), &source)?;
    let targets = write_toy_set(dir.path().join("tgt"), &target)?.filter(|e| e.domain == Domain::TargetNoisy);
    let sweep = sigma_sweep(
        clean.entries(),
        targets.entries(),
        &bundle,
        &[0.0, 0.5, 1.0, 2.0, 4.0],
        &DatasetOptions::default(),
        dir.path().join("sim"),
    )?;
    println!("sigma\tpairs\tmean SI-SNR vs clean (dB)\tclamp rate");
    for (sigma, pairs) in sweep {
        let mut total = 0.0;
        for p in &pairs {
            let sim = read_wav(&p.simulated_waveform_path)?;
            let reference = read_wav(&p.clean_waveform_path)?.fit_length(sim.len());
            total += si_snr(sim.samples(), reference.samples())?;
        }
        let clamp = pairs.iter().map(|p| p.clamp_rate).sum::<f64>() / pairs.len() as f64;
        println!("{sigma}\t{}\t{:.2}\t{clamp:.4}", pairs.len(), total / pairs.len() as f64);
    }
    Ok(())
}
