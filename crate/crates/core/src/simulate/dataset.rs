use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ManifestEntry;
use crate::dsp::{read_wav, write_wav, WavFormat, Waveform, SAMPLE_RATE};
use crate::error::{Error, IoContext, Result};
use crate::rng;
use crate::train::GanBundle;

use super::{simulate_utterance, PerturbationConfig};

/// Sorted index of all generated pairs inside the output directory.
pub const PAIRS_FILE: &str = "pairs.jsonl";
const WAV_DIR: &str = "noisy";
const SIDECAR_DIR: &str = "done";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPair {
    pub clean_id: String,
    pub target_noise_id: String,
    pub sigma_used: f64,
    pub simulated_waveform_path: PathBuf,
    pub clean_waveform_path: PathBuf,
    pub clamp_rate: f64,
}

/// What to do when the output directory already holds results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputPolicy {
    #[default]
    FailIfExists,
    /// Keep finished pairs and generate only the missing ones.
    Resume,
    Overwrite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetOptions {
    pub perturbation: PerturbationConfig,
    pub policy: OutputPolicy,
    /// Stop after this many newly generated pairs (the index is not written).
    pub limit: Option<usize>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            perturbation: PerturbationConfig::default(),
            policy: OutputPolicy::default(),
            limit: None,
        }
    }
}

fn load_16k(path: &Path) -> Result<Waveform> {
    read_wav(path)?.resample_to(SAMPLE_RATE)
}

fn prepare(out: &Path, policy: OutputPolicy) -> Result<()> {
    let owned = [out.join(PAIRS_FILE), out.join(WAV_DIR), out.join(SIDECAR_DIR)];
    let occupied = owned.iter().any(|p| p.exists());
    match policy {
        OutputPolicy::FailIfExists if occupied => return Err(Error::OutputExists(out.to_path_buf())),
        OutputPolicy::Overwrite => {
            for p in &owned {
                if p.is_dir() {
                    fs::remove_dir_all(p).at(p)?;
                } else if p.exists() {
                    fs::remove_file(p).at(p)?;
                }
            }
        }
        _ => {}
    }
    for d in [WAV_DIR, SIDECAR_DIR] {
        fs::create_dir_all(out.join(d)).at(out.join(d))?;
    }
    Ok(())
}

fn finished(sidecar: &Path, sigma: f64) -> Option<SimulatedPair> {
    let pair: SimulatedPair = serde_json::from_slice(&fs::read(sidecar).ok()?).ok()?;
    (pair.sigma_used == sigma && pair.simulated_waveform_path.is_file()).then_some(pair)
}

/// Generates one simulated noisy utterance per clean entry. Each clean
/// utterance draws its target and perturbation from streams keyed by its
/// id, so results do not depend on processing order and an interrupted
/// run resumes to identical output. Returns pairs sorted by clean id.
pub fn generate_dataset(
    clean: &[ManifestEntry],
    targets: &[ManifestEntry],
    bundle: &GanBundle,
    options: &DatasetOptions,
    out: impl AsRef<Path>,
) -> Result<Vec<SimulatedPair>> {
    let out = out.as_ref();
    options.perturbation.validate()?;
    if targets.is_empty() {
        return Err(Error::InvalidInput("no target utterances to sample noise from".into()));
    }
    let mut clean: Vec<&ManifestEntry> = clean.iter().collect();
    clean.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let mut seen = BTreeSet::new();
    if let Some(dup) = clean.iter().find(|e| !seen.insert(e.utterance_id.as_str())) {
        return Err(Error::DuplicateId(dup.utterance_id.clone()));
    }
    prepare(out, options.policy)?;
    let sigma = options.perturbation.sigma;
    let mut target_audio: Vec<Option<Waveform>> = vec![None; targets.len()];
    let mut pairs = Vec::with_capacity(clean.len());
    let mut fresh = 0usize;
    let mut clamp_sum = 0.0;
    for entry in clean {
        let id = &entry.utterance_id;
        let sidecar = out.join(SIDECAR_DIR).join(format!("{id}.json"));
        if options.policy == OutputPolicy::Resume {
            if let Some(pair) = finished(&sidecar, sigma) {
                pairs.push(pair);
                continue;
            }
        }
        if options.limit.is_some_and(|l| fresh >= l) {
            log::info!("stopping after {fresh} new pairs");
            return Ok(pairs);
        }
        let key = rng::tag(id);
        let t = rng::stream(options.perturbation.seed, &[rng::tag("assign"), key]).random_range(0..targets.len());
        if target_audio[t].is_none() {
            target_audio[t] = Some(load_16k(&targets[t].audio_path)?);
        }
        let target = target_audio[t].as_ref().expect("loaded above");
        let source = load_16k(&entry.audio_path)?;
        let cfg = PerturbationConfig {
            sigma,
            seed: rng::derive_seed(options.perturbation.seed, &[key]),
        };
        let sim = simulate_utterance(&source, target, &targets[t].utterance_id, bundle, &cfg)?;
        if sim.waveform.peak() > 1.0 {
            log::warn!("{id}: simulated peak {:.2} clipped on write", sim.waveform.peak());
        }
        let wav = out.join(WAV_DIR).join(format!("{id}.wav"));
        let tmp = wav.with_extension("wav.partial");
        write_wav(&tmp, &sim.waveform, WavFormat::Pcm16)?;
        fs::rename(&tmp, &wav).at(&wav)?;
        let pair = SimulatedPair {
            clean_id: id.clone(),
            target_noise_id: targets[t].utterance_id.clone(),
            sigma_used: sigma,
            simulated_waveform_path: wav,
            clean_waveform_path: entry.audio_path.clone(),
            clamp_rate: sim.clamp_rate,
        };
        let tmp = sidecar.with_extension("json.partial");
        fs::write(&tmp, serde_json::to_vec_pretty(&pair)?).at(&tmp)?;
        fs::rename(&tmp, &sidecar).at(&sidecar)?;
        clamp_sum += sim.clamp_rate;
        fresh += 1;
        pairs.push(pair);
    }
    if fresh > 0 {
        log::info!(
            "generated {fresh} pairs (sigma {sigma}), mean clamp rate {:.4}",
            clamp_sum / fresh as f64
        );
    }
    let mut index = String::new();
    for p in &pairs {
        index.push_str(&serde_json::to_string(p)?);
        index.push('\n');
    }
    let path = out.join(PAIRS_FILE);
    fs::write(&path, index).at(&path)?;
    Ok(pairs)
}

/// Runs [`generate_dataset`] once per sigma into `out/sigma_<value>`.
pub fn sigma_sweep(
    clean: &[ManifestEntry],
    targets: &[ManifestEntry],
    bundle: &GanBundle,
    sigmas: &[f64],
    options: &DatasetOptions,
    out: impl AsRef<Path>,
) -> Result<Vec<(f64, Vec<SimulatedPair>)>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let opts = DatasetOptions {
                perturbation: PerturbationConfig { sigma, ..options.perturbation },
                ..options.clone()
            };
            let dir = out.as_ref().join(format!("sigma_{sigma}"));
            Ok((sigma, generate_dataset(clean, targets, bundle, &opts, dir)?))
        })
        .collect()
}
