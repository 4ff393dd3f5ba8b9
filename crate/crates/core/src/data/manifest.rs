use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::read_wav;
use crate::error::{Error, IoContext, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    SourceClean,
    TargetNoisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub audio_path: PathBuf,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// Paired clean reference, when the corpus has one (test sets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_path: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn new(utterance_id: impl Into<String>, audio_path: impl Into<PathBuf>, domain: Domain) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            audio_path: audio_path.into(),
            domain,
            noise_type: None,
            snr_db: None,
            clean_path: None,
        }
    }

    pub fn with_noise_type(mut self, noise_type: impl Into<String>) -> Self {
        self.noise_type = Some(noise_type.into());
        self
    }

    pub fn with_snr(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    pub fn with_clean(mut self, clean_path: impl Into<PathBuf>) -> Self {
        self.clean_path = Some(clean_path.into());
        self
    }
}

/// Utterance list with unique ids, kept sorted by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(mut entries: Vec<ManifestEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].utterance_id == w[1].utterance_id) {
            return Err(Error::DuplicateId(w[0].utterance_id.clone()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.utterance_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.utterance_id.as_str())
    }

    /// Distinct noise-type labels, sorted.
    pub fn noise_types(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter_map(|e| e.noise_type.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn filter(&self, keep: impl Fn(&ManifestEntry) -> bool) -> Manifest {
        Manifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    /// One JSON object per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(fs::File::create(path).at(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n").at(path)?;
        }
        out.flush().at(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(fs::File::open(path).at(path)?);
        let mut entries = Vec::new();
        for line in reader.lines() {
            let line = line.at(path)?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line)?);
        }
        Manifest::new(entries)
    }
}

/// How `build_manifest` labels the files it finds.
///
/// File stems are split on `separator`. With `noise_type_from_prefix` the
/// first token is the noise type (`babble_p232_001` is `babble`); a token
/// such as `5dB` or `-2.5dB` sets the SNR label.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainRules {
    pub domain: Domain,
    pub separator: char,
    pub noise_type_from_prefix: bool,
    pub snr_from_token: bool,
    /// Directory holding clean references under the same file names.
    pub clean_dir: Option<PathBuf>,
}

impl DomainRules {
    pub fn new(domain: Domain) -> Self {
        Self {
            domain,
            separator: '_',
            noise_type_from_prefix: false,
            snr_from_token: false,
            clean_dir: None,
        }
    }

    pub fn with_noise_type_prefix(mut self) -> Self {
        self.noise_type_from_prefix = true;
        self
    }

    pub fn with_snr_token(mut self) -> Self {
        self.snr_from_token = true;
        self
    }

    pub fn with_clean_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.clean_dir = Some(dir.into());
        self
    }

    fn label(&self, mut entry: ManifestEntry) -> ManifestEntry {
        let id = entry.utterance_id.clone();
        let tokens: Vec<&str> = id.split(self.separator).collect();
        if self.noise_type_from_prefix && tokens.len() > 1 {
            entry.noise_type = Some(tokens[0].to_string());
        }
        if self.snr_from_token {
            entry.snr_db = tokens
                .iter()
                .find_map(|t| t.strip_suffix("dB").and_then(|v| v.parse::<f64>().ok()));
        }
        entry
    }
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for item in fs::read_dir(dir).at(dir)? {
        let path = item.at(dir)?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Scans `root` recursively for WAV files. Files that fail to decode are
/// skipped with a warning; ids are file stems.
pub fn build_manifest(root: impl AsRef<Path>, rules: &DomainRules) -> Result<Manifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::InvalidInput(format!("{} is not a directory", root.display())));
    }
    let mut files = Vec::new();
    collect_wavs(root, &mut files)?;
    files.sort();
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for path in files {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        if let Err(e) = read_wav(&path) {
            log::warn!("skipping {}: {e}", path.display());
            continue;
        }
        let mut entry = rules.label(ManifestEntry::new(id, &path, rules.domain));
        if let Some(clean_dir) = &rules.clean_dir {
            let clean = clean_dir.join(path.file_name().expect("file has a name"));
            if !clean.is_file() {
                log::warn!("skipping {}: no clean reference at {}", path.display(), clean.display());
                continue;
            }
            entry.clean_path = Some(clean);
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    Manifest::new(entries)
}
