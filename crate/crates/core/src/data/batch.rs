use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dsp::{stft, Compression, Matrix, SpectrogramSegment, StftConfig, Waveform, SEGMENT_BINS, SEGMENT_FRAMES};
use crate::error::{Error, Result};
use crate::rng;

/// Compressed magnitudes of whole utterances, ready for random cropping.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPool {
    ids: Vec<String>,
    magnitudes: Vec<Matrix>,
}

impl SegmentPool {
    pub fn new(items: Vec<(String, Matrix)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, m) in &items {
            if m.rows() != SEGMENT_BINS || m.cols() == 0 {
                return Err(Error::Shape(format!("utterance `{id}` has shape {:?}", m.shape())));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let (ids, magnitudes) = items.into_iter().unzip();
        Ok(Self { ids, magnitudes })
    }

    /// Analyses and compresses each waveform.
    pub fn from_waveforms<'a>(
        items: impl IntoIterator<Item = (&'a str, &'a Waveform)>,
        cfg: &StftConfig,
        compression: Compression,
    ) -> Result<Self> {
        let mut out = Vec::new();
        for (id, w) in items {
            let s = stft(w, cfg)?.without_phase().compressed(compression)?;
            out.push((id.to_string(), s.magnitude().clone()));
        }
        Self::new(out)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn magnitude(&self, i: usize) -> &Matrix {
        &self.magnitudes[i]
    }

    /// Segment of utterance `i` starting at a random frame (any offset that
    /// keeps a full segment when the utterance is long enough).
    pub fn crop(&self, i: usize, rng: &mut impl Rng) -> Result<SpectrogramSegment> {
        let m = &self.magnitudes[i];
        let max_offset = m.cols().saturating_sub(SEGMENT_FRAMES);
        let offset = rng.random_range(0..=max_offset);
        SpectrogramSegment::cut(m, &self.ids[i], offset)
    }
}

/// One training step's worth of unrelated clean and noisy segments.
#[derive(Clone, Debug, PartialEq)]
pub struct UnpairedBatch {
    pub clean: Vec<SpectrogramSegment>,
    pub noisy: Vec<SpectrogramSegment>,
    pub noisy_utterance_ids: Vec<String>,
}

impl UnpairedBatch {
    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

/// Number of batches in an epoch: enough for every utterance of the larger
/// pool to be drawn once.
pub fn batches_per_epoch(clean: &SegmentPool, noisy: &SegmentPool, batch_size: usize) -> usize {
    clean.len().max(noisy.len()).div_ceil(batch_size.max(1))
}

const CLEAN: u64 = 0xC1EA;
const NOISY: u64 = 0x0015;

fn draw(pool: &SegmentPool, tag: u64, seed: u64, epoch: u64, slot: usize) -> Result<SpectrogramSegment> {
    let m = pool.len();
    let cycle = (slot / m) as u64;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(seed, &[epoch, tag, 0, cycle]));
    let mut crop_rng = rng::stream(seed, &[epoch, tag, 1, slot as u64]);
    pool.crop(order[slot % m], &mut crop_rng)
}

/// Batch `index` of `epoch`. Each pool is walked in its own seeded
/// permutation, so within an epoch every utterance is drawn once before any
/// repeats; the stream depends only on `(pools, seed, epoch)`.
pub fn next_batch(
    clean: &SegmentPool,
    noisy: &SegmentPool,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    index: usize,
) -> Result<UnpairedBatch> {
    if clean.is_empty() || noisy.is_empty() {
        return Err(Error::InvalidInput("both pools need at least one utterance".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let noisy_ids: HashSet<&str> = noisy.ids().iter().map(String::as_str).collect();
    if let Some(id) = clean.ids().iter().find(|id| noisy_ids.contains(id.as_str())) {
        return Err(Error::InvalidInput(format!("utterance `{id}` appears in both pools")));
    }
    let mut batch = UnpairedBatch {
        clean: Vec::with_capacity(batch_size),
        noisy: Vec::with_capacity(batch_size),
        noisy_utterance_ids: Vec::with_capacity(batch_size),
    };
    for b in 0..batch_size {
        let slot = index * batch_size + b;
        batch.clean.push(draw(clean, CLEAN, seed, epoch, slot)?);
        let n = draw(noisy, NOISY, seed, epoch, slot)?;
        batch.noisy_utterance_ids.push(n.utterance_id().to_string());
        batch.noisy.push(n);
    }
    Ok(batch)
}

/// All batches of one epoch, in order.
pub fn epoch_batches(
    clean: &SegmentPool,
    noisy: &SegmentPool,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<UnpairedBatch>> {
    (0..batches_per_epoch(clean, noisy, batch_size))
        .map(|i| next_batch(clean, noisy, batch_size, seed, epoch, i))
        .collect()
}
