use std::path::Path;

use noisesim_autodiff::{Bound, ConvParams, Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init, NoiseEmbedding};
use crate::dsp::SpectrogramSegment;
use crate::error::{Error, Result};

/// A network that maps `[N, 1, H, W]` magnitudes to `[N, D]` embeddings.
pub trait EncoderBackbone<T: Real> {
    fn embed_dim(&self) -> usize;
    fn params(&self) -> &ParamStore<T>;
    /// Penultimate features, pooled to `[N, D]`.
    fn embed<'g>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    /// Output channels of the stride-2 convolution blocks; the last one is
    /// the embedding dimension.
    pub channels: Vec<usize>,
}

impl EncoderSpec {
    pub fn desk() -> Self {
        Self {
            channels: vec![16, 32, 64, 128],
        }
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self::desk()
    }
}

/// Stack of `conv 3x3 / stride 2 / ReLU` blocks followed by a global mean
/// over frequency and time. No normalisation, so absolute level survives
/// into the embedding.
#[derive(Clone, Debug)]
pub struct ConvEncoder<T> {
    spec: EncoderSpec,
    params: ParamStore<T>,
    layers: Vec<(ParamId, ParamId)>,
}

impl<T: Real> ConvEncoder<T> {
    pub fn new(spec: EncoderSpec, r: &mut impl Rng) -> Result<Self> {
        if spec.channels.is_empty() || spec.channels.contains(&0) {
            return Err(Error::Config(format!("bad encoder widths {:?}", spec.channels)));
        }
        let mut params = ParamStore::new();
        let mut cin = 1;
        let mut layers = Vec::new();
        for (l, &c) in spec.channels.iter().enumerate() {
            let w = params.add(format!("block{l}.w"), init::he(&[c, cin, 3, 3], r));
            let b = params.add(format!("block{l}.b"), Tensor::zeros(&[c]));
            layers.push((w, b));
            cin = c;
        }
        Ok(Self { spec, params, layers })
    }

    /// Rebuilds an encoder from named tensors `block{l}.w` / `block{l}.b`,
    /// inferring the widths (this is how an external checkpoint with a
    /// different embedding size is loaded).
    pub fn from_params(params: ParamStore<T>) -> Result<Self> {
        let mut channels = Vec::new();
        while let Some(id) = params.id(&format!("block{}.w", channels.len())) {
            channels.push(params.get(id).shape()[0]);
        }
        let mut enc = Self::new(EncoderSpec { channels }, &mut crate::rng::stream(0, &[]))?;
        if params.len() != enc.params.len() {
            return Err(Error::Corrupt(format!(
                "encoder has {} tensors, expected {}",
                params.len(),
                enc.params.len()
            )));
        }
        for (name, t) in params.iter() {
            enc.params.set(name, t.clone())?;
        }
        Ok(enc)
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }
}

impl ConvEncoder<f32> {
    /// Loads a backbone from a safetensors file of `block{l}.{w,b}` tensors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_params(crate::checkpoint::read_param_file(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::checkpoint::write_param_file(path.as_ref(), &self.params)
    }
}

impl<T: Real> EncoderBackbone<T> for ConvEncoder<T> {
    fn embed_dim(&self) -> usize {
        *self.spec.channels.last().expect("non-empty")
    }

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn embed<'g>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = x;
        for &(w, b) in &self.layers {
            h = h.conv2d(&p[w], Some(&p[b]), ConvParams::new(2, 1))?.relu();
        }
        Ok(h.mean_hw()?)
    }
}

/// Linear classifier over embeddings.
#[derive(Clone, Debug)]
pub struct ClassifierHead<T> {
    params: ParamStore<T>,
    w: ParamId,
    b: ParamId,
}

impl<T: Real> ClassifierHead<T> {
    pub fn new(embed_dim: usize, classes: usize, r: &mut impl Rng) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("classifier needs at least one class".into()));
        }
        let mut params = ParamStore::new();
        let w = params.add("head.w", init::uniform(&[classes, embed_dim], embed_dim, r));
        let b = params.add("head.b", Tensor::zeros(&[classes]));
        Ok(Self { params, w, b })
    }

    pub fn classes(&self) -> usize {
        self.params.get(self.w).shape()[0]
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// `[N, D] -> [N, K]` logits.
    pub fn logits<'g>(&self, p: &Bound<'g, T>, embedding: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(embedding.linear(&p[self.w], Some(&p[self.b]))?)
    }
}

/// Frames fed to the encoder: the valid (unpadded) part of the segment.
pub(crate) fn valid_input<T: Real>(x: &SpectrogramSegment) -> Result<Tensor<T>> {
    let m = x.data();
    let v = x.valid_frames();
    let data = (0..m.rows())
        .flat_map(|r| m.row(r)[..v].iter().map(|&a| T::from_f64_lossy(a as f64)))
        .collect();
    Ok(Tensor::new(&[1, 1, m.rows(), v], data)?)
}

/// Embedding of one segment, ignoring padded frames.
pub fn encoder_embed(x: &SpectrogramSegment, backbone: &impl EncoderBackbone<f32>) -> Result<NoiseEmbedding> {
    let g = Graph::new();
    let p = backbone.params().bind(&g, false);
    let e = backbone.embed(&p, g.constant(valid_input(x)?))?;
    NoiseEmbedding::new(e.value().data().to_vec(), x.utterance_id())
}

/// Mean of the segment embeddings of one utterance, weighted by valid
/// frames.
pub fn utterance_embedding(segments: &[SpectrogramSegment], backbone: &impl EncoderBackbone<f32>) -> Result<NoiseEmbedding> {
    let first = segments
        .first()
        .ok_or_else(|| Error::InvalidInput("no segments to embed".into()))?;
    let mut sum = vec![0.0f64; backbone.embed_dim()];
    let mut frames = 0usize;
    for s in segments {
        let e = encoder_embed(s, backbone)?;
        let w = s.valid_frames();
        for (acc, &v) in sum.iter_mut().zip(e.vector()) {
            *acc += w as f64 * v as f64;
        }
        frames += w;
    }
    let v = sum.into_iter().map(|x| (x / frames.max(1) as f64) as f32).collect();
    NoiseEmbedding::new(v, first.utterance_id())
}

/// Class logits of one segment; a missing head is a configuration error.
pub fn encoder_classify(
    x: &SpectrogramSegment,
    backbone: &impl EncoderBackbone<f32>,
    head: Option<&ClassifierHead<f32>>,
) -> Result<Vec<f32>> {
    let head = head.ok_or_else(|| Error::Config("no classification head attached".into()))?;
    let g = Graph::new();
    let p = backbone.params().bind(&g, false);
    let hp = head.params().bind(&g, false);
    let e = backbone.embed(&p, g.constant(valid_input(x)?))?;
    Ok(head.logits(&hp, e)?.value().data().to_vec())
}
