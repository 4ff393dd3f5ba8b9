use noisesim_autodiff::{Bound, ParamId, ParamStore, Real, Var};

use crate::error::{Error, Result};

/// Number of modulated feature maps: the encoder output plus every
/// residual block output.
pub const FILM_SITES: usize = 10;

/// `F'[n, c] = W[n, c] * F[n, c] + b[n, c]` over the spatial axes.
pub fn film_apply<'g, T: Real>(features: &Var<'g, T>, scale: &Var<'g, T>, shift: &Var<'g, T>) -> Result<Var<'g, T>> {
    Ok(features.channel_affine(scale, shift)?)
}

/// Parameter ids of the two linear maps of one site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct FilmSite {
    pub scale_w: ParamId,
    pub scale_b: ParamId,
    pub shift_w: ParamId,
    pub shift_b: ParamId,
}

impl FilmSite {
    /// Zero weights with scale bias one: every site starts as the identity
    /// whatever the embedding.
    pub fn register<T: Real>(store: &mut ParamStore<T>, site: usize, channels: usize, embed_dim: usize) -> Self {
        use noisesim_autodiff::Tensor;
        Self {
            scale_w: store.add(format!("film{site}.scale.w"), Tensor::zeros(&[channels, embed_dim])),
            scale_b: store.add(format!("film{site}.scale.b"), Tensor::ones(&[channels])),
            shift_w: store.add(format!("film{site}.shift.w"), Tensor::zeros(&[channels, embed_dim])),
            shift_b: store.add(format!("film{site}.shift.b"), Tensor::zeros(&[channels])),
        }
    }

    pub fn params<'g, T: Real>(&self, p: &Bound<'g, T>, embedding: &Var<'g, T>) -> Result<(Var<'g, T>, Var<'g, T>)> {
        let scale = embedding.linear(&p[self.scale_w], Some(&p[self.scale_b]))?;
        let shift = embedding.linear(&p[self.shift_w], Some(&p[self.shift_b]))?;
        Ok((scale, shift))
    }
}

pub(crate) fn check_site(site: usize) -> Result<()> {
    if site >= FILM_SITES {
        return Err(Error::InvalidInput(format!("FiLM site {site} not in 0..{FILM_SITES}")));
    }
    Ok(())
}

/// Conditioning applied to the generator.
#[derive(Clone, Copy, Debug)]
pub enum FilmInput<'a, 'g, T> {
    /// `[N, D]` embeddings mapped through the per-site linear layers.
    Embedding(Var<'g, T>),
    /// Per-site `(scale, shift)` pairs, each `[N, C]`.
    Explicit(&'a [(Var<'g, T>, Var<'g, T>)]),
    /// No modulation at all.
    Off,
}
