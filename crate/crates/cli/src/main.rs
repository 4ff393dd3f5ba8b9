use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use noisesim::adapt_eval::{
    embedding_projection, evaluate, finetune_se, finetune_se_waveforms, histogram, manifest_snrs, pool_embeddings,
    run_ablation, target_spectral_distance, AblationVariant, Bins, CausalUNet, CommandBackend, MetricRegistry, Pca,
    SeBackend, SeFinetuneConfig, UNetSpec, DEFAULT_BUCKETS,
};
use noisesim::data::synth::{write_toy_set, NoiseKind, ToySet};
use noisesim::data::{
    build_manifest, exclude_from_test, sample_training_subset, Domain, DomainRules, Manifest, SegmentPool,
};
use noisesim::dsp::{read_wav, stft, Compression, StftConfig, Waveform, SAMPLE_RATE};
use noisesim::models::{ConvEncoder, DiscriminatorSpec, EncoderBackbone, EncoderSpec, GeneratorSpec};
use noisesim::rng;
use noisesim::simulate::{
    generate_dataset, sigma_sweep, DatasetOptions, OutputPolicy, PerturbationConfig, SimulatedPair,
};
use noisesim::train::{
    finetune_encoder, train_gan, EncoderFinetuneConfig, GanBundle, GanTrainConfig, LabeledPool, TrainOutputs,
};

const ENCODER_FILE: &str = "encoder.safetensors";
const COMPRESSION_FILE: &str = "compression.json";

#[derive(Parser)]
#[command(name = "noisesim", version, about = "Simulate target-domain noisy speech and adapt enhancers to it")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Corpus manifests and the training-subset protocol.
    #[command(subcommand)]
    Data(DataCmd),
    /// Two-stage noise-encoder fine-tuning.
    FinetuneEncoder(FinetuneEncoderArgs),
    /// Unpaired adversarial training of the clean-to-noisy generator.
    TrainGan(TrainGanArgs),
    /// Convert clean utterances into simulated target-domain pairs.
    Simulate(SimulateArgs),
    /// Fine-tune an enhancer on paired data.
    AdaptSe(AdaptSeArgs),
    /// Score an enhancer on a test manifest, bucketed by SNR.
    Evaluate(EvaluateArgs),
    /// Corpus and embedding analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Train an ablated configuration and report its spectral distance.
    Ablate(AblateArgs),
}

#[derive(Subcommand)]
enum DataCmd {
    /// Scan a directory of WAV files into a manifest.
    BuildManifest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, value_enum)]
        domain: DomainArg,
        /// Take the noise type from the first `_`-separated token of the id.
        #[arg(long)]
        noise_type_prefix: bool,
        /// Take the SNR from a `<value>dB` token of the id.
        #[arg(long)]
        snr_token: bool,
        /// Directory of clean references with matching file names.
        #[arg(long)]
        clean_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the unpaired training subsets and the remaining test set.
    SampleSubset {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long)]
        per_noise_type: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test manifest to drop the used target utterances from.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a synthetic corpus: clean tone utterances, white-noise and
    /// pink-noise mixtures, and a five-colour labelled set.
    Toy {
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    SourceClean,
    TargetNoisy,
}

#[derive(Args)]
struct FinetuneEncoderArgs {
    /// Manifest with noise-type labels (classification stage).
    #[arg(long)]
    stage1: Option<PathBuf>,
    /// Manifest of target utterances (one class each).
    #[arg(long)]
    stage2: Option<PathBuf>,
    /// Start from this encoder instead of a fresh one.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = EncoderSpec::desk().channels)]
    channels: Vec<usize>,
    /// Extra manifests included when fitting magnitude compression
    /// (normally the GAN's source and target subsets).
    #[arg(long)]
    compression_manifest: Vec<PathBuf>,
    #[arg(long)]
    epochs1: Option<usize>,
    #[arg(long)]
    epochs2: Option<usize>,
    #[arg(long)]
    lr1: Option<f64>,
    #[arg(long)]
    lr2: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives the encoder, the compression constants and a report.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct GanArgs {
    /// Output directory of `finetune-encoder`.
    #[arg(long)]
    encoder_dir: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_nse: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    generator_channels: Option<usize>,
    #[arg(long)]
    discriminator_channels: Option<usize>,
}

#[derive(Args)]
struct TrainGanArgs {
    #[command(flatten)]
    gan: GanArgs,
    /// TOML file with a `[train]` table and optional model sizes; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    clean_manifest: PathBuf,
    /// Manifest of target-domain recordings to take noise from.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// Generate one dataset per value under `<out>/sigma_<value>`.
    #[arg(long, value_delimiter = ',')]
    sigma_sweep: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    resume: bool,
    #[arg(long, conflicts_with = "resume")]
    overwrite: bool,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Desk,
    External,
}

#[derive(Args, Clone)]
struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Desk)]
    backend: BackendKind,
    /// External enhancer executable.
    #[arg(long, required_if_eq("backend", "external"))]
    command: Option<PathBuf>,
    /// Leading arguments passed before the verb; repeat for several.
    #[arg(long = "command-arg", allow_hyphen_values = true)]
    command_args: Vec<String>,
    /// The external enhancer sees future samples up to this many.
    #[arg(long, default_value_t = 0)]
    lookahead: usize,
    #[arg(long, default_value = "scratch")]
    scratch: PathBuf,
}

impl BackendArgs {
    fn build(&self, model: Option<&Path>, unet: UNetSpec) -> Result<Box<dyn SeBackend>> {
        let mut backend: Box<dyn SeBackend> = match self.backend {
            BackendKind::Desk => Box::new(CausalUNet::new(unet)?),
            BackendKind::External => {
                let program = self.command.clone().context("--command is required for the external backend")?;
                let mut b = CommandBackend::new(program, self.command_args.clone(), &self.scratch);
                b.lookahead = self.lookahead;
                b.causal = self.lookahead == 0;
                Box::new(b)
            }
        };
        if let Some(m) = model {
            backend.load(m).with_context(|| format!("loading {}", m.display()))?;
        }
        Ok(backend)
    }
}

#[derive(Args)]
struct AdaptSeArgs {
    #[command(flatten)]
    backend: BackendArgs,
    /// `pairs.jsonl` written by `simulate`.
    #[arg(long, conflicts_with = "manifest")]
    pairs: Option<PathBuf>,
    /// Noisy manifest with clean references (pretraining, oracle runs).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_samples: Option<usize>,
    /// Learning rate of a fresh desk model.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "si_snr")]
    metrics: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUCKETS)]
    buckets: Vec<f64>,
    /// TOML naming an external provider per metric.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Bucket table (TSV); printed when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full per-utterance report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// SNR histograms of one or more manifests (`name=path` or `path`).
    SnrHist {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<String>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Fixed bins: lower edge and width (with `--bins` as the count).
        #[arg(long, requires = "width")]
        lo: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        /// Writes `<out>.tsv` and `<out>.svg`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Planar projection and silhouette of utterance embeddings.
    EmbedProj {
        #[arg(long)]
        encoder_dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = LabelBy::NoiseType)]
        label: LabelBy,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelBy {
    NoiseType,
    Utterance,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    gan: GanArgs,
    /// Same format as `train-gan --config`.
    #[arg(long)]
    train_config: Option<PathBuf>,
    /// `full`, `no_nse`, `no_embeddings` or `all`.
    #[arg(long = "config", value_delimiter = ',', default_value = "all")]
    variants: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Data(c) => data(c),
        Cmd::FinetuneEncoder(a) => finetune(a),
        Cmd::TrainGan(a) => train(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::AdaptSe(a) => adapt(a),
        Cmd::Evaluate(a) => eval(a),
        Cmd::Analyze(c) => analyze(c),
        Cmd::Ablate(a) => ablate(a),
    }
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn load_waves(m: &Manifest) -> Result<Vec<(String, Waveform)>> {
    m.entries()
        .iter()
        .map(|e| {
            let w = read_wav(&e.audio_path)
                .and_then(|w| w.resample_to(SAMPLE_RATE))
                .with_context(|| format!("reading {}", e.audio_path.display()))?;
            Ok((e.utterance_id.clone(), w))
        })
        .collect()
}

fn pool(waves: &[(String, Waveform)], compression: Compression) -> Result<SegmentPool> {
    Ok(SegmentPool::from_waveforms(
        waves.iter().map(|(id, w)| (id.as_str(), w)),
        &StftConfig::default(),
        compression,
    )?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn data(cmd: DataCmd) -> Result<()> {
    match cmd {
        DataCmd::BuildManifest {
            root,
            domain,
            noise_type_prefix,
            snr_token,
            clean_dir,
            out,
        } => {
            let mut rules = DomainRules::new(match domain {
                DomainArg::SourceClean => Domain::SourceClean,
                DomainArg::TargetNoisy => Domain::TargetNoisy,
            });
            rules.noise_type_from_prefix = noise_type_prefix;
            rules.snr_from_token = snr_token;
            rules.clean_dir = clean_dir;
            let m = build_manifest(&root, &rules)?;
            m.save(&out)?;
            println!("{} entries -> {}", m.len(), out.display());
        }
        DataCmd::SampleSubset {
            source,
            target,
            n,
            per_noise_type,
            seed,
            test,
            out_dir,
        } => {
            let (src, tgt) = sample_training_subset(&load_manifest(&source)?, &load_manifest(&target)?, n, per_noise_type, seed)?;
            fs::create_dir_all(&out_dir)?;
            src.save(out_dir.join("source_subset.jsonl"))?;
            tgt.save(out_dir.join("target_subset.jsonl"))?;
            println!("source {} / target {}", src.len(), tgt.len());
            if let Some(test) = test {
                let rest = exclude_from_test(&load_manifest(&test)?, &tgt);
                rest.save(out_dir.join("test_remaining.jsonl"))?;
                println!("test {} after exclusion", rest.len());
            }
        }
        DataCmd::Toy { count, seed, out } => {
            let sets = [
                ("source", ToySet::clean("src", count)),
                ("vanilla", ToySet::noisy("van", count, &[NoiseKind::White])),
                ("target", ToySet::noisy("tgt", count, &[NoiseKind::Pink])),
                ("test", ToySet::noisy("test", count, &[NoiseKind::Pink])),
                ("colours", ToySet::noisy("col", count, &NoiseKind::ALL)),
            ];
            for (k, (name, set)) in sets.into_iter().enumerate() {
                let m = write_toy_set(out.join(name), &set.generate(seed + k as u64))?;
                m.save(out.join(format!("{name}.jsonl")))?;
                println!("{name}: {} utterances", m.len());
            }
        }
    }
    Ok(())
}

fn finetune(a: FinetuneEncoderArgs) -> Result<()> {
    if a.stage1.is_none() && a.stage2.is_none() {
        bail!("give --stage1, --stage2 or both");
    }
    let stage1 = a.stage1.as_deref().map(load_manifest).transpose()?;
    let stage2 = a.stage2.as_deref().map(load_manifest).transpose()?;
    let waves1 = stage1.as_ref().map(load_waves).transpose()?;
    let waves2 = stage2.as_ref().map(load_waves).transpose()?;
    let mut fit_waves = Vec::new();
    for m in &a.compression_manifest {
        fit_waves.extend(load_waves(&load_manifest(m)?)?);
    }
    let cfg = StftConfig::default();
    let mut specs = Vec::new();
    for (_, w) in waves1.iter().chain(&waves2).flatten().chain(&fit_waves) {
        specs.push(stft(w, &cfg)?);
    }
    let compression = Compression::fit(&specs)?;

    let labeled1 = match (&stage1, &waves1) {
        (Some(m), Some(w)) => Some(LabeledPool::by_noise_type(pool(w, compression)?, m)?),
        _ => None,
    };
    let labeled2 = waves2.as_ref().map(|w| pool(w, compression).map(LabeledPool::per_utterance)).transpose()?;

    let mut encoder = match &a.init {
        Some(p) => ConvEncoder::load(p)?,
        None => ConvEncoder::new(EncoderSpec { channels: a.channels.clone() }, &mut rng::stream(a.seed, &[rng::tag("encoder")]))?,
    };
    let mut ft = EncoderFinetuneConfig {
        seed: a.seed,
        ..Default::default()
    };
    for (stage, epochs, lr) in [(&mut ft.stage1, a.epochs1, a.lr1), (&mut ft.stage2, a.epochs2, a.lr2)] {
        stage.epochs = epochs.unwrap_or(stage.epochs);
        stage.lr = lr.unwrap_or(stage.lr);
        stage.batch_size = a.batch_size.unwrap_or(stage.batch_size);
    }
    let report = finetune_encoder(&mut encoder, labeled1.as_ref(), labeled2.as_ref(), &ft)?;
    fs::create_dir_all(&a.out_dir)?;
    encoder.save(a.out_dir.join(ENCODER_FILE))?;
    write_json(&a.out_dir.join(COMPRESSION_FILE), &compression)?;
    write_json(&a.out_dir.join("finetune_report.json"), &report)?;
    for (name, s) in [("stage 1", &report.stage1), ("stage 2", &report.stage2)] {
        if let Some(s) = s {
            println!("{name}: {} classes, train accuracy {:.3}", s.classes, s.train_accuracy);
        }
    }
    Ok(())
}

fn load_encoder_dir(dir: &Path) -> Result<(ConvEncoder<f32>, Compression)> {
    let encoder = ConvEncoder::load(dir.join(ENCODER_FILE))?;
    let path = dir.join(COMPRESSION_FILE);
    let compression = serde_json::from_slice(&fs::read(&path).with_context(|| format!("reading {}", path.display()))?)?;
    Ok((encoder, compression))
}

#[derive(Default, Deserialize)]
#[serde(default)]
struct GanFile {
    train: GanTrainConfig,
    generator_channels: Option<usize>,
    discriminator_channels: Option<usize>,
}

struct GanSetup {
    bundle: GanBundle,
    clean: SegmentPool,
    noisy: SegmentPool,
}

fn gan_setup(a: &GanArgs, config: Option<&Path>) -> Result<GanSetup> {
    let file: GanFile = match config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => GanFile::default(),
    };
    let mut train = file.train;
    train.epochs = a.epochs.unwrap_or(train.epochs);
    train.lr = a.lr.unwrap_or(train.lr);
    train.lambda_nse = a.lambda_nse.unwrap_or(train.lambda_nse);
    train.seed = a.seed.unwrap_or(train.seed);
    train.batch_size = a.batch_size.unwrap_or(train.batch_size);
    let (encoder, compression) = load_encoder_dir(&a.encoder_dir)?;
    let clean = pool(&load_waves(&load_manifest(&a.source)?)?, compression)?;
    let noisy = pool(&load_waves(&load_manifest(&a.target)?)?, compression)?;
    let g = a
        .generator_channels
        .or(file.generator_channels)
        .unwrap_or(GeneratorSpec::default().base_channels);
    let d = a
        .discriminator_channels
        .or(file.discriminator_channels)
        .unwrap_or(DiscriminatorSpec::default().base_channels);
    let bundle = GanBundle::new(
        GeneratorSpec::new(g, encoder.embed_dim()),
        DiscriminatorSpec { base_channels: d },
        encoder,
        train,
        compression,
    )?;
    Ok(GanSetup { bundle, clean, noisy })
}

fn train(a: TrainGanArgs) -> Result<()> {
    let mut s = gan_setup(&a.gan, a.config.as_deref())?;
    if let Some(path) = &a.resume {
        s.bundle = GanBundle::load(path)?;
        if let Some(e) = a.gan.epochs {
            s.bundle.train.epochs = e;
        }
    }
    if let Some(c) = a.checkpoint_every {
        s.bundle.train.checkpoint_every = c;
    }
    let out = TrainOutputs {
        log: Some(a.out.join("train_log.jsonl")),
        checkpoint_dir: Some(a.out.join("checkpoints")),
        max_steps: a.max_steps,
    };
    fs::create_dir_all(&a.out)?;
    let before = target_spectral_distance(&s.bundle, &s.clean, &s.noisy)?;
    train_gan(&mut s.bundle, &s.clean, &s.noisy, &out)?;
    let after = target_spectral_distance(&s.bundle, &s.clean, &s.noisy)?;
    s.bundle.save(a.out.join("bundle.safetensors"))?;
    println!("step {}: target spectral distance {before:.4} -> {after:.4}", s.bundle.step);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let bundle = GanBundle::load(&a.bundle)?;
    let clean = load_manifest(&a.clean_manifest)?;
    let targets = load_manifest(&a.targets)?;
    let options = DatasetOptions {
        perturbation: PerturbationConfig { sigma: a.sigma, seed: a.seed },
        policy: if a.resume {
            OutputPolicy::Resume
        } else if a.overwrite {
            OutputPolicy::Overwrite
        } else {
            OutputPolicy::FailIfExists
        },
        limit: a.limit,
    };
    match &a.sigma_sweep {
        Some(sigmas) => {
            for (sigma, pairs) in sigma_sweep(clean.entries(), targets.entries(), &bundle, sigmas, &options, &a.out)? {
                println!("sigma {sigma}: {} pairs", pairs.len());
            }
        }
        None => {
            let pairs = generate_dataset(clean.entries(), targets.entries(), &bundle, &options, &a.out)?;
            println!("{} pairs -> {}", pairs.len(), a.out.display());
        }
    }
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<SimulatedPair>> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn adapt(a: AdaptSeArgs) -> Result<()> {
    let unet = UNetSpec {
        lr: a.lr.unwrap_or(UNetSpec::default().lr),
        seed: a.seed,
        ..UNetSpec::default()
    };
    let mut backend = a.backend.build(a.init.as_deref(), unet)?;
    let cfg = SeFinetuneConfig {
        epochs: a.epochs,
        seed: a.seed,
        max_samples: a.max_samples,
    };
    let report = match (&a.pairs, &a.manifest) {
        (Some(p), _) => finetune_se(backend.as_mut(), &read_pairs(p)?, &cfg)?,
        (None, Some(m)) => {
            let m = load_manifest(m)?;
            let mut pairs = Vec::with_capacity(m.len());
            for e in m.entries() {
                let clean = e
                    .clean_path
                    .as_ref()
                    .with_context(|| format!("`{}` has no clean reference", e.utterance_id))?;
                let noisy = read_wav(&e.audio_path)?.resample_to(SAMPLE_RATE)?;
                let clean = read_wav(clean)?.resample_to(SAMPLE_RATE)?;
                let n = noisy.len().min(clean.len());
                pairs.push((noisy.fit_length(n), clean.fit_length(n)));
            }
            finetune_se_waveforms(backend.as_mut(), &pairs, &cfg)?
        }
        (None, None) => bail!("give --pairs or --manifest"),
    };
    backend.save(&a.out)?;
    if let Some(last) = report.epoch_losses.last() {
        println!("{} epochs, final loss {last:.5} -> {}", report.epoch_losses.len(), a.out.display());
    }
    Ok(())
}

fn eval(a: EvaluateArgs) -> Result<()> {
    let backend = a.backend.build(a.model.as_deref(), UNetSpec::default())?;
    let registry = match &a.registry {
        Some(p) => MetricRegistry::load(p, a.backend.scratch.join("metrics"))?,
        None => MetricRegistry::default(),
    };
    let test = load_manifest(&a.test)?;
    let names: Vec<&str> = a.metrics.iter().map(String::as_str).collect();
    let report = evaluate(backend.as_ref(), &test, &registry, &names, &a.buckets)?;
    let table = report.to_tsv();
    match &a.out {
        Some(p) => fs::write(p, &table)?,
        None => print!("{table}"),
    }
    if let Some(p) = &a.json {
        write_json(p, &report)?;
    }
    if !report.missing_metrics.is_empty() {
        println!("no provider for: {}", report.missing_metrics.join(", "));
    }
    Ok(())
}

fn analyze(cmd: AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::SnrHist {
            manifests,
            bins,
            lo,
            width,
            out,
        } => {
            let mut series = Vec::new();
            for spec in &manifests {
                let (name, path) = match spec.split_once('=') {
                    Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                    None => {
                        let p = PathBuf::from(spec);
                        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        (stem, p)
                    }
                };
                series.push((name, manifest_snrs(&load_manifest(&path)?)?));
            }
            let layout = match (lo, width) {
                (Some(lo), Some(width)) => Bins::Fixed { lo, width, count: bins },
                _ => Bins::Auto(bins),
            };
            let h = histogram(&series, layout)?;
            h.write(&out)?;
            println!("{} series, {} bins -> {}.svg", h.series.len(), h.edges.len() - 1, out.display());
        }
        AnalyzeCmd::EmbedProj {
            encoder_dir,
            manifest,
            label,
            out,
        } => {
            let (encoder, compression) = load_encoder_dir(&encoder_dir)?;
            let m = load_manifest(&manifest)?;
            let p = pool(&load_waves(&m)?, compression)?;
            let embeddings = pool_embeddings(&p, &encoder)?;
            let labels: Vec<String> = p
                .ids()
                .iter()
                .map(|id| match label {
                    LabelBy::Utterance => Ok(id.clone()),
                    LabelBy::NoiseType => m
                        .get(id)
                        .and_then(|e| e.noise_type.clone())
                        .with_context(|| format!("`{id}` has no noise type")),
                })
                .collect::<Result<_>>()?;
            let proj = embedding_projection(&embeddings, &labels, &Pca)?;
            fs::write(&out, proj.to_tsv())?;
            println!("silhouette {:.4} over {} utterances", proj.silhouette, labels.len());
        }
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let variants: Vec<AblationVariant> = if a.variants.iter().any(|v| v == "all") {
        AblationVariant::ALL.to_vec()
    } else {
        a.variants.iter().map(|v| v.parse()).collect::<noisesim::Result<_>>()?
    };
    let s = gan_setup(&a.gan, a.train_config.as_deref())?;
    fs::create_dir_all(&a.out)?;
    let mut table = String::from("config\tinitial_distance\tspectral_distance\n");
    for v in variants {
        let dir = a.out.join(v.name());
        let outputs = TrainOutputs {
            log: Some(dir.join("train_log.jsonl")),
            checkpoint_dir: Some(dir.join("checkpoints")),
            max_steps: None,
        };
        let r = run_ablation(v, &s.bundle, &s.clean, &s.noisy, &outputs)?;
        r.bundle.save(dir.join("bundle.safetensors"))?;
        table.push_str(&format!("{v}\t{:.6}\t{:.6}\n", r.initial_distance, r.spectral_distance));
    }
    fs::write(a.out.join("ablation.tsv"), &table)?;
    print!("{table}");
    Ok(())
}
