use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::dsp::{estimate_snr, read_wav, SAMPLE_RATE};
use crate::error::{Error, IoContext, Result};

/// Bin layout of a histogram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Bins {
    /// `count` equal bins spanning the pooled data; one bin when all
    /// values coincide.
    Auto(usize),
    Fixed { lo: f64, width: f64, count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSeries {
    pub name: String,
    /// Fraction of the series in each bin (sums to one when non-empty).
    pub fractions: Vec<f64>,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `count + 1` bin edges.
    pub edges: Vec<f64>,
    pub series: Vec<HistogramSeries>,
}

/// Per-series normalised histograms over shared bins. Values outside a
/// fixed range land in the nearest end bin.
pub fn histogram(series: &[(String, Vec<f64>)], bins: Bins) -> Result<Histogram> {
    let edges = match bins {
        Bins::Fixed { lo, width, count } => {
            if count == 0 || !(width > 0.0) {
                return Err(Error::Config("histogram needs positive bin width and count".into()));
            }
            (0..=count).map(|i| lo + width * i as f64).collect::<Vec<_>>()
        }
        Bins::Auto(count) => {
            if count == 0 {
                return Err(Error::Config("histogram needs at least one bin".into()));
            }
            let all = series.iter().flat_map(|(_, v)| v.iter().copied());
            let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                vec![0.0, 1.0]
            } else if hi - lo <= 0.0 {
                vec![lo - 0.5, lo + 0.5]
            } else {
                let w = (hi - lo) / count as f64;
                (0..=count).map(|i| lo + w * i as f64).collect()
            }
        }
    };
    let count = edges.len() - 1;
    let (lo, width) = (edges[0], edges[1] - edges[0]);
    let series = series
        .iter()
        .map(|(name, values)| {
            let mut hits = vec![0usize; count];
            for v in values {
                let i = ((v - lo) / width).floor();
                hits[(i.max(0.0) as usize).min(count - 1)] += 1;
            }
            let total = values.len();
            HistogramSeries {
                name: name.clone(),
                fractions: hits.iter().map(|&h| h as f64 / total.max(1) as f64).collect(),
                total,
            }
        })
        .collect();
    Ok(Histogram { edges, series })
}

/// SNR of every entry: the manifest label, else measured against the
/// clean reference. Entries with neither are skipped with a warning.
pub fn manifest_snrs(manifest: &Manifest) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(manifest.len());
    for e in manifest.entries() {
        if let Some(s) = e.snr_db {
            out.push(s);
            continue;
        }
        let Some(clean) = &e.clean_path else {
            log::warn!("`{}` has neither an SNR label nor a clean reference", e.utterance_id);
            continue;
        };
        let noisy = read_wav(&e.audio_path)?.resample_to(SAMPLE_RATE)?;
        let clean = read_wav(clean)?.resample_to(SAMPLE_RATE)?;
        let n = noisy.len().min(clean.len());
        out.push(estimate_snr(&noisy.fit_length(n), &clean.fit_length(n))?);
    }
    Ok(out)
}

impl Histogram {
    /// One row per bin: `lo  hi  <series...>`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("bin_lo\tbin_hi");
        for s in &self.series {
            out.push('\t');
            out.push_str(&s.name);
        }
        out.push('\n');
        for b in 0..self.edges.len() - 1 {
            let _ = write!(out, "{:.3}\t{:.3}", self.edges[b], self.edges[b + 1]);
            for s in &self.series {
                let _ = write!(out, "\t{:.6}", s.fractions[b]);
            }
            out.push('\n');
        }
        out
    }

    /// Grouped bar chart.
    pub fn to_svg(&self) -> String {
        const COLOURS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
        let (w, h, margin) = (640.0, 360.0, 48.0);
        let bins = self.edges.len() - 1;
        let peak = self
            .series
            .iter()
            .flat_map(|s| s.fractions.iter().copied())
            .fold(0.0f64, f64::max)
            .max(1e-9);
        let slot = (w - 2.0 * margin) / bins as f64;
        let bar = slot * 0.8 / self.series.len().max(1) as f64;
        let mut svg = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = write!(
            svg,
            r#"<line x1="{margin}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
            y = h - margin,
            x2 = w - margin
        );
        for (k, s) in self.series.iter().enumerate() {
            let colour = COLOURS[k % COLOURS.len()];
            for (b, &f) in s.fractions.iter().enumerate() {
                let bh = f / peak * (h - 2.0 * margin);
                let x = margin + b as f64 * slot + slot * 0.1 + k as f64 * bar;
                let _ = write!(
                    svg,
                    r#"<rect x="{x:.1}" y="{:.1}" width="{bar:.1}" height="{bh:.1}" fill="{colour}"/>"#,
                    h - margin - bh
                );
            }
            let _ = write!(
                svg,
                r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
                w - margin - 120.0,
                margin + 14.0 * k as f64,
                s.name
            );
        }
        for (b, e) in self.edges.iter().enumerate() {
            let _ = write!(
                svg,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{e:.1}</text>"#,
                margin + b as f64 * slot,
                h - margin + 16.0
            );
        }
        let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="middle">SNR (dB)</text>"#, w / 2.0, h - 8.0);
        svg.push_str("</svg>\n");
        svg
    }

    /// Writes `<stem>.tsv` and `<stem>.svg`.
    pub fn write(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let tsv = stem.with_extension("tsv");
        let svg = stem.with_extension("svg");
        std::fs::write(&tsv, self.to_tsv()).at(&tsv)?;
        std::fs::write(&svg, self.to_svg()).at(&svg)?;
        Ok(())
    }
}
