use super::{Matrix, Spectrogram};
use crate::error::{Error, Result};

/// Frequency bins of every training unit (`n_fft = 256`).
pub const SEGMENT_BINS: usize = 129;
/// Frames of every training unit.
pub const SEGMENT_FRAMES: usize = 128;

/// Fixed `129 x 128` slice of a spectrogram.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrogramSegment {
    data: Matrix,
    utterance_id: String,
    frame_offset: usize,
    valid_frames: usize,
}

impl SpectrogramSegment {
    pub fn new(data: Matrix, utterance_id: impl Into<String>, frame_offset: usize, valid_frames: usize) -> Result<Self> {
        if data.shape() != (SEGMENT_BINS, SEGMENT_FRAMES) {
            return Err(Error::Shape(format!(
                "segment must be {SEGMENT_BINS}x{SEGMENT_FRAMES}, got {:?}",
                data.shape()
            )));
        }
        if valid_frames == 0 || valid_frames > SEGMENT_FRAMES {
            return Err(Error::InvalidInput(format!("valid frame count {valid_frames}")));
        }
        Ok(Self {
            data,
            utterance_id: utterance_id.into(),
            frame_offset,
            valid_frames,
        })
    }

    /// Cuts `SEGMENT_FRAMES` columns starting at `frame_offset`, zero-padding
    /// past the end of the spectrogram.
    pub fn cut(s: &Matrix, utterance_id: &str, frame_offset: usize) -> Result<Self> {
        if s.rows() != SEGMENT_BINS {
            return Err(Error::Shape(format!(
                "expected {SEGMENT_BINS} bins, got {}",
                s.rows()
            )));
        }
        if frame_offset >= s.cols() {
            return Err(Error::InvalidInput(format!(
                "offset {frame_offset} outside {} frames",
                s.cols()
            )));
        }
        let valid = (s.cols() - frame_offset).min(SEGMENT_FRAMES);
        Self::new(s.columns(frame_offset, SEGMENT_FRAMES), utterance_id, frame_offset, valid)
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn frame_offset(&self) -> usize {
        self.frame_offset
    }

    /// Frames holding real content; the rest is zero padding.
    pub fn valid_frames(&self) -> usize {
        self.valid_frames
    }

    pub fn is_padded(&self) -> bool {
        self.valid_frames < SEGMENT_FRAMES
    }

    pub fn with_data(&self, data: Matrix) -> Result<Self> {
        Self::new(data, self.utterance_id.clone(), self.frame_offset, self.valid_frames)
    }
}

/// Splits the magnitude into consecutive non-overlapping segments. The tail
/// is zero-padded and flagged through [`SpectrogramSegment::valid_frames`].
pub fn segment(s: &Spectrogram, utterance_id: &str) -> Result<Vec<SpectrogramSegment>> {
    let m = s.magnitude();
    if m.rows() != SEGMENT_BINS {
        return Err(Error::Shape(format!(
            "expected {SEGMENT_BINS} bins, got {}",
            m.rows()
        )));
    }
    (0..m.cols())
        .step_by(SEGMENT_FRAMES)
        .map(|offset| SpectrogramSegment::cut(m, utterance_id, offset))
        .collect()
}

/// Inverse of [`segment`]: concatenates the un-padded part of each segment.
pub fn reassemble(segments: &[SpectrogramSegment]) -> Result<Matrix> {
    let frames: usize = segments.iter().map(|s| s.valid_frames).sum();
    let mut out = Matrix::zeros(SEGMENT_BINS, frames);
    let mut col = 0;
    for seg in segments {
        if seg.frame_offset != col {
            return Err(Error::InvalidInput(format!(
                "segment at offset {} does not continue at frame {col}",
                seg.frame_offset
            )));
        }
        for r in 0..SEGMENT_BINS {
            for c in 0..seg.valid_frames {
                out.set(r, col + c, seg.data.get(r, c));
            }
        }
        col += seg.valid_frames;
    }
    Ok(out)
}
