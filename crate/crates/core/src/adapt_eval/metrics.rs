use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::dsp::{estimate_snr, read_wav, write_wav, WavFormat, Waveform, SAMPLE_RATE};
use crate::error::{Error, IoContext, Result};

use super::SeBackend;

/// Report ceiling for SI-SNR; a perfect estimate maps here.
pub const SI_SNR_CEILING_DB: f64 = 60.0;
/// Default SNR bucket centres in dB.
pub const DEFAULT_BUCKETS: [f64; 4] = [2.5, 7.5, 12.5, 17.5];

/// Scale-invariant SNR in dB after removing the means, capped at
/// [`SI_SNR_CEILING_DB`].
pub fn si_snr(estimate: &[f32], reference: &[f32]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let mean = |v: &[f32]| v.iter().map(|&x| x as f64).sum::<f64>() / v.len().max(1) as f64;
    let (me, mr) = (mean(estimate), mean(reference));
    let e: Vec<f64> = estimate.iter().map(|&x| x as f64 - me).collect();
    let r: Vec<f64> = reference.iter().map(|&x| x as f64 - mr).collect();
    let rr: f64 = r.iter().map(|x| x * x).sum();
    if rr == 0.0 {
        return Err(Error::InvalidInput("reference has no energy".into()));
    }
    let alpha = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let noise: f64 = e.iter().zip(&r).map(|(a, b)| (a - alpha * b).powi(2)).sum();
    if noise == 0.0 {
        return Ok(SI_SNR_CEILING_DB);
    }
    Ok((10.0 * (target / noise).log10()).min(SI_SNR_CEILING_DB))
}

/// A quality score of an enhanced signal against its clean reference.
pub trait Metric {
    fn name(&self) -> &str;
    fn compute(&self, enhanced: &Waveform, clean: &Waveform) -> Result<f64>;
}

pub struct SiSnr;

impl Metric for SiSnr {
    fn name(&self) -> &str {
        "si_snr"
    }

    fn compute(&self, enhanced: &Waveform, clean: &Waveform) -> Result<f64> {
        si_snr(enhanced.samples(), clean.samples())
    }
}

/// A metric computed by another program, called as
/// `<command> <args..> <clean.wav> <enhanced.wav>` and printing one number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetric {
    #[serde(skip)]
    pub name: String,
    pub command: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(skip)]
    scratch: PathBuf,
}

impl ExternalMetric {
    fn available(&self) -> bool {
        if self.command.components().count() > 1 {
            return self.command.is_file();
        }
        std::env::var_os("PATH")
            .is_some_and(|paths| std::env::split_paths(&paths).any(|d| d.join(&self.command).is_file()))
    }
}

impl Metric for ExternalMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn compute(&self, enhanced: &Waveform, clean: &Waveform) -> Result<f64> {
        std::fs::create_dir_all(&self.scratch).at(&self.scratch)?;
        let c = self.scratch.join(format!("{}_clean.wav", self.name));
        let e = self.scratch.join(format!("{}_enhanced.wav", self.name));
        write_wav(&c, clean, WavFormat::Pcm16)?;
        write_wav(&e, enhanced, WavFormat::Pcm16)?;
        let out = Command::new(&self.command).args(&self.args).arg(&c).arg(&e).output().at(&self.command)?;
        let text = String::from_utf8_lossy(&out.stdout);
        if !out.status.success() {
            return Err(Error::Unsupported(format!("{} exited with {}", self.name, out.status)));
        }
        text.trim()
            .parse()
            .map_err(|_| Error::Unsupported(format!("{} printed `{}`, expected a number", self.name, text.trim())))
    }
}

#[derive(Debug, Default, Deserialize)]
struct RegistryFile {
    #[serde(default)]
    metrics: BTreeMap<String, ExternalMetric>,
}

/// Named metrics: SI-SNR natively, anything else through providers
/// declared in a TOML file:
///
/// ```toml
/// [metrics.pesq]
/// command = "/opt/pesq/bin/pesq-score"
/// args = ["--mode", "wb"]
/// ```
pub struct MetricRegistry {
    metrics: BTreeMap<String, Box<dyn Metric>>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut metrics: BTreeMap<String, Box<dyn Metric>> = BTreeMap::new();
        metrics.insert("si_snr".into(), Box::new(SiSnr));
        Self { metrics }
    }
}

impl MetricRegistry {
    /// Built-ins plus the providers of `config` whose executables exist;
    /// missing ones are skipped with a warning.
    pub fn from_toml(config: &str, scratch: impl AsRef<Path>) -> Result<Self> {
        let file: RegistryFile = toml::from_str(config).map_err(|e| Error::Config(e.to_string()))?;
        let mut reg = Self::default();
        for (name, mut m) in file.metrics {
            m.name = name.clone();
            m.scratch = scratch.as_ref().to_path_buf();
            if m.available() {
                reg.register(m);
            } else {
                log::warn!("metric `{name}`: provider {} not found, skipped", m.command.display());
            }
        }
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>, scratch: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).at(path.as_ref())?;
        Self::from_toml(&text, scratch)
    }

    pub fn register(&mut self, metric: impl Metric + 'static) {
        self.metrics.insert(metric.name().to_string(), Box::new(metric));
    }

    pub fn names(&self) -> Vec<&str> {
        self.metrics.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn Metric> {
        self.metrics.get(name).map(|m| m.as_ref())
    }
}

/// Nearest bucket centre; ties go to the higher bucket.
pub fn bucket_of(snr_db: f64, centres: &[f64]) -> Option<f64> {
    centres
        .iter()
        .copied()
        .min_by(|a, b| {
            let (da, db) = ((snr_db - a).abs(), (snr_db - b).abs());
            da.total_cmp(&db).then(b.total_cmp(a))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub utterance_id: String,
    pub snr_db: f64,
    pub bucket: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub centre_db: f64,
    pub count: usize,
    pub means: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub utterances: Vec<UtteranceScore>,
    /// Mean of each metric over all scored utterances.
    pub aggregate: BTreeMap<String, f64>,
    pub buckets: Vec<BucketSummary>,
    /// Requested metrics with no provider.
    pub missing_metrics: Vec<String>,
    /// Utterances dropped because enhancement or scoring failed.
    pub excluded: Vec<String>,
}

impl MetricReport {
    /// Aggregates per-utterance scores into overall and per-bucket means.
    pub fn from_scores(mut utterances: Vec<UtteranceScore>, centres: &[f64]) -> Self {
        utterances.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        let means = |items: &[&UtteranceScore]| {
            let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for u in items {
                for (k, v) in &u.metrics {
                    let e = sums.entry(k.clone()).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
            }
            sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect::<BTreeMap<_, _>>()
        };
        let all: Vec<&UtteranceScore> = utterances.iter().collect();
        let aggregate = means(&all);
        let buckets = centres
            .iter()
            .map(|&c| {
                let members: Vec<&UtteranceScore> = utterances.iter().filter(|u| u.bucket == c).collect();
                BucketSummary {
                    centre_db: c,
                    count: members.len(),
                    means: means(&members),
                }
            })
            .collect();
        Self {
            utterances,
            aggregate,
            buckets,
            missing_metrics: Vec::new(),
            excluded: Vec::new(),
        }
    }

    /// Tab-separated table: one row per bucket plus an `all` row.
    pub fn to_tsv(&self) -> String {
        let names: Vec<&String> = self.aggregate.keys().collect();
        let mut out = String::from("bucket_db\tcount");
        for n in &names {
            out.push_str(&format!("\t{n}"));
        }
        out.push('\n');
        let row = |label: String, count: usize, m: &BTreeMap<String, f64>| {
            let mut line = format!("{label}\t{count}");
            for n in &names {
                match m.get(*n) {
                    Some(v) => line.push_str(&format!("\t{v:.4}")),
                    None => line.push_str("\t-"),
                }
            }
            line + "\n"
        };
        for b in &self.buckets {
            out.push_str(&row(b.centre_db.to_string(), b.count, &b.means));
        }
        out.push_str(&row("all".into(), self.utterances.len(), &self.aggregate));
        out
    }
}

/// Enhances every test utterance and scores it against its clean
/// reference. Bucket assignment uses the manifest SNR label, or the SNR
/// measured against the reference when the label is absent.
pub fn evaluate(
    backend: &dyn SeBackend,
    test: &Manifest,
    registry: &MetricRegistry,
    metrics: &[&str],
    centres: &[f64],
) -> Result<MetricReport> {
    if centres.is_empty() {
        return Err(Error::Config("at least one SNR bucket is required".into()));
    }
    let missing: Vec<String> = metrics
        .iter()
        .filter(|m| registry.get(m).is_none())
        .map(|m| {
            log::warn!("metric `{m}` has no provider; reported as absent");
            m.to_string()
        })
        .collect();
    let active: Vec<&dyn Metric> = metrics.iter().filter_map(|m| registry.get(m)).collect();
    let mut scores = Vec::with_capacity(test.len());
    let mut excluded = Vec::new();
    for entry in test.entries() {
        let clean_path = entry.clean_path.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("test utterance `{}` has no clean reference", entry.utterance_id))
        })?;
        let noisy = read_wav(&entry.audio_path)?.resample_to(SAMPLE_RATE)?;
        let clean = read_wav(clean_path)?.resample_to(SAMPLE_RATE)?;
        let scored = (|| -> Result<UtteranceScore> {
            let enhanced = backend.enhance(&noisy)?;
            if enhanced.len() != clean.len() {
                return Err(Error::Shape(format!(
                    "enhanced {} samples, reference {}",
                    enhanced.len(),
                    clean.len()
                )));
            }
            let snr_db = match entry.snr_db {
                Some(s) => s,
                None => estimate_snr(&noisy, &clean)?,
            };
            let mut values = BTreeMap::new();
            for m in &active {
                values.insert(m.name().to_string(), m.compute(&enhanced, &clean)?);
            }
            Ok(UtteranceScore {
                utterance_id: entry.utterance_id.clone(),
                snr_db,
                bucket: bucket_of(snr_db, centres).expect("non-empty centres"),
                metrics: values,
            })
        })();
        match scored {
            Ok(s) => scores.push(s),
            Err(e) => {
                log::warn!("excluding `{}`: {e}", entry.utterance_id);
                excluded.push(entry.utterance_id.clone());
            }
        }
    }
    let mut report = MetricReport::from_scores(scores, centres);
    report.missing_metrics = missing;
    report.excluded = excluded;
    Ok(report)
}
