use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result};
use crate::losses::LossReport;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: u64,
    pub adv_d: f64,
    pub adv_g: f64,
    pub pcl_src: f64,
    pub pcl_tgt: f64,
    pub nse: f64,
    pub total: f64,
}

impl LogRecord {
    pub fn new(step: u64, epoch: u64, r: &LossReport) -> Self {
        Self {
            step,
            epoch,
            adv_d: r.adv_d,
            adv_g: r.adv_g,
            pcl_src: r.pcl_src,
            pcl_tgt: r.pcl_tgt,
            nse: r.nse,
            total: r.total,
        }
    }
}

/// Append-only JSONL loss log.
#[derive(Debug)]
pub struct LossLog {
    path: PathBuf,
}

impl LossLog {
    /// Opens `path` for a run resuming after `step` records; entries past
    /// it (written after the last checkpoint of an interrupted run) are
    /// dropped so steps stay strictly increasing.
    pub fn resume(path: impl Into<PathBuf>, step: u64) -> Result<Self> {
        let path = path.into();
        if path.exists() {
            let kept: Vec<LogRecord> = read_log(&path)?.into_iter().filter(|r| r.step < step).collect();
            let mut text = String::new();
            for r in &kept {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            fs::write(&path, text).at(&path)?;
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).at(dir)?;
        }
        Ok(Self { path })
    }

    pub fn append(&mut self, r: &LogRecord) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).at(&self.path)?;
        let line = serde_json::to_string(r)?;
        writeln!(f, "{line}").at(&self.path)
    }
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    let path = path.as_ref();
    let f = fs::File::open(path).at(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.at(path)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
