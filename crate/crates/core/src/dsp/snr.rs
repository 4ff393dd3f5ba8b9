use super::{stft, StftConfig, Waveform};
use crate::error::{Error, Result};

/// `10 log10(|clean|^2 / |noisy - clean|^2)` for aligned signals.
///
/// Returns `f64::INFINITY` when the residual vanishes.
pub fn estimate_snr(noisy: &Waveform, clean: &Waveform) -> Result<f64> {
    if noisy.len() != clean.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: noisy {} vs clean {}",
            noisy.len(),
            clean.len()
        )));
    }
    let signal = clean.energy();
    if signal == 0.0 {
        return Err(Error::InvalidInput("clean reference has zero energy".into()));
    }
    let residual: f64 = noisy
        .samples()
        .iter()
        .zip(clean.samples())
        .map(|(&n, &c)| (n as f64 - c as f64).powi(2))
        .sum();
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / residual).log10())
}

/// Settings of the reference-free estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlindSnrConfig {
    pub stft: StftConfig,
    /// Quantile of per-bin power over frames taken as the noise floor.
    pub quantile: f64,
    /// Lower clamp of the reported value.
    pub floor_db: f64,
}

impl Default for BlindSnrConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            quantile: 0.1,
            floor_db: -30.0,
        }
    }
}

/// SNR without a clean reference: the noise power in each bin is tracked as
/// a low quantile of that bin's power over time, rescaled by the quantile of
/// an exponential distribution (power of a stationary Gaussian noise bin).
pub fn estimate_snr_blind(noisy: &Waveform, cfg: &BlindSnrConfig) -> Result<f64> {
    if !(0.0..1.0).contains(&cfg.quantile) || cfg.quantile == 0.0 {
        return Err(Error::InvalidInput(format!("quantile {} not in (0, 1)", cfg.quantile)));
    }
    let s = stft(noisy, &cfg.stft)?;
    let m = s.magnitude();
    let correction = -(1.0 - cfg.quantile).ln();
    let mut total = 0.0f64;
    let mut noise = 0.0f64;
    let mut powers = Vec::with_capacity(m.cols());
    for f in 0..m.rows() {
        powers.clear();
        powers.extend(m.row(f).iter().map(|&v| (v as f64).powi(2)));
        total += powers.iter().sum::<f64>();
        powers.sort_by(f64::total_cmp);
        let idx = ((powers.len() - 1) as f64 * cfg.quantile).round() as usize;
        noise += powers[idx] / correction * powers.len() as f64;
    }
    if total == 0.0 {
        return Err(Error::InvalidInput("signal has zero energy".into()));
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    let signal = total - noise;
    if signal <= 0.0 {
        return Ok(cfg.floor_db);
    }
    Ok((10.0 * (signal / noise).log10()).max(cfg.floor_db))
}
