use noisesim_autodiff::{Bound, Real, Var};

use crate::error::{Error, Result};
use crate::models::EncoderBackbone;

/// Mean absolute difference of two `[N, D]` embedding batches.
pub fn nse_loss<'g, T: Real>(target: &Var<'g, T>, reconstructed: &Var<'g, T>) -> Result<Var<'g, T>> {
    if target.shape() != reconstructed.shape() {
        return Err(Error::Shape(format!(
            "embedding {:?} vs re-embedded output {:?}",
            target.shape(),
            reconstructed.shape()
        )));
    }
    Ok(target.sub(reconstructed)?.abs().mean_all())
}

/// Re-embeds generator outputs `[N, 1, H, W]` through the encoder (bound
/// as constants, so only the outputs receive gradient), using the first
/// `valid_frames[n]` frames of item `n`, and compares with `target`.
pub fn nse_loss_from_output<'g, T: Real, B: EncoderBackbone<T>>(
    target: &Var<'g, T>,
    output: &Var<'g, T>,
    valid_frames: &[usize],
    backbone: &B,
    frozen: &Bound<'g, T>,
) -> Result<Var<'g, T>> {
    let (n, _, h, w) = output.value().dims4()?;
    if valid_frames.len() != n {
        return Err(Error::Shape(format!("{} valid-frame counts for batch {n}", valid_frames.len())));
    }
    if target.shape() != [n, backbone.embed_dim()] {
        return Err(Error::Shape(format!(
            "target embedding {:?}, encoder dimension {}",
            target.shape(),
            backbone.embed_dim()
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, &v) in valid_frames.iter().enumerate() {
        let item = if n == 1 { *output } else { output.narrow_batch(i, 1)? };
        let item = if v < w { item.crop2d(0, h, 0, v)? } else { item };
        rows.push(backbone.embed(frozen, item)?);
    }
    let emb = if n == 1 { rows[0] } else { Var::concat_batch(&rows)? };
    nse_loss(target, &emb)
}
