use noisesim_autodiff::{Bound, ConvParams, Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::film::{check_site, FilmInput, FilmSite, FILM_SITES};
use super::init;
use crate::dsp::{Matrix, SEGMENT_BINS, SEGMENT_FRAMES};
use crate::error::{Error, Result};

pub const RES_BLOCKS: usize = 9;
/// Residual blocks (0-based) whose outputs feed the contrastive loss.
pub const PCL_RES_TAPS: [usize; 2] = [3, 7];
pub const PCL_LAYERS: usize = 5;
const IN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub base_channels: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl GeneratorSpec {
    pub fn new(base_channels: usize, embed_dim: usize) -> Self {
        Self {
            base_channels,
            embed_dim,
            dropout: 0.5,
        }
    }

    /// Channel count of each FiLM site.
    pub fn site_channels(&self) -> usize {
        2 * self.base_channels
    }

    /// Channel counts of the five contrastive feature layers.
    pub fn pcl_channels(&self) -> [usize; PCL_LAYERS] {
        let c = self.base_channels;
        [1, c, 2 * c, 2 * c, 2 * c]
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.embed_dim == 0 {
            return Err(Error::Config("generator widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self::new(64, 128)
    }
}

#[derive(Clone, Copy, Debug)]
struct ResIds {
    conv1: ParamId,
    conv2: ParamId,
}

/// Outputs of a generator pass.
pub struct GenOutput<'g, T> {
    /// `[N, 1, 129, 128]`.
    pub output: Var<'g, T>,
    /// The five contrastive feature layers, shallow to deep.
    pub features: Vec<Var<'g, T>>,
}

/// Residual encoder-decoder mapping a clean magnitude segment to a noisy
/// one. The output head is `input + decoder(...)` with the last transposed
/// convolution zero-initialised, so a fresh generator is the identity.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    spec: GeneratorSpec,
    params: ParamStore<T>,
    down1: ParamId,
    down2: ParamId,
    res: Vec<ResIds>,
    up1: ParamId,
    up2_w: ParamId,
    up2_b: ParamId,
    film: Vec<FilmSite>,
}

impl<T: Real> Generator<T> {
    pub fn new(spec: GeneratorSpec, r: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let c = spec.base_channels;
        let mut p = ParamStore::new();
        let down1 = p.add("down1.w", init::normal(&[c, 1, 3, 3], 0.02, r));
        let down2 = p.add("down2.w", init::normal(&[2 * c, c, 3, 3], 0.02, r));
        let res = (0..RES_BLOCKS)
            .map(|b| ResIds {
                conv1: p.add(format!("res{b}.conv1.w"), init::normal(&[2 * c, 2 * c, 3, 3], 0.02, r)),
                conv2: p.add(format!("res{b}.conv2.w"), init::normal(&[2 * c, 2 * c, 3, 3], 0.02, r)),
            })
            .collect();
        let up1 = p.add("up1.w", init::normal(&[2 * c, c, 3, 3], 0.02, r));
        let up2_w = p.add("up2.w", Tensor::zeros(&[c, 1, 3, 3]));
        let up2_b = p.add("up2.b", Tensor::zeros(&[1]));
        let film = (0..FILM_SITES)
            .map(|s| FilmSite::register(&mut p, s, spec.site_channels(), spec.embed_dim))
            .collect();
        Ok(Self {
            spec,
            params: p,
            down1,
            down2,
            res,
            up1,
            up2_w,
            up2_b,
            film,
        })
    }

    /// Rebuilds a generator around loaded parameters (names and shapes must
    /// match a fresh one).
    pub fn from_params(spec: GeneratorSpec, params: ParamStore<T>) -> Result<Self> {
        let mut g = Self::new(spec, &mut crate::rng::stream(0, &[]))?;
        for (name, t) in params.iter() {
            g.params.set(name, t.clone())?;
        }
        if params.len() != g.params.len() {
            return Err(Error::Corrupt(format!(
                "generator has {} tensors, expected {}",
                params.len(),
                g.params.len()
            )));
        }
        Ok(g)
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Generator<U> {
        Generator {
            spec: self.spec,
            params: self.params.cast(),
            down1: self.down1,
            down2: self.down2,
            res: self.res.clone(),
            up1: self.up1,
            up2_w: self.up2_w,
            up2_b: self.up2_b,
            film: self.film.clone(),
        }
    }

    /// `(W, b)` of FiLM site `site` for `[N, D]` embeddings.
    pub fn film_params<'g>(
        &self,
        p: &Bound<'g, T>,
        embedding: &Var<'g, T>,
        site: usize,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        check_site(site)?;
        let d = embedding.shape();
        if d.len() != 2 || d[1] != self.spec.embed_dim {
            return Err(Error::Shape(format!(
                "embedding {:?} does not match dimension {}",
                d, self.spec.embed_dim
            )));
        }
        self.film[site].params(p, embedding)
    }

    fn modulate<'g>(&self, p: &Bound<'g, T>, h: Var<'g, T>, film: &FilmInput<'_, 'g, T>, site: usize) -> Result<Var<'g, T>> {
        match film {
            FilmInput::Off => Ok(h),
            FilmInput::Embedding(e) => {
                let (s, b) = self.film_params(p, e, site)?;
                Ok(h.channel_affine(&s, &b)?)
            }
            FilmInput::Explicit(pairs) => {
                if pairs.len() != FILM_SITES {
                    return Err(Error::Shape(format!("{} FiLM pairs, expected {FILM_SITES}", pairs.len())));
                }
                let (s, b) = &pairs[site];
                Ok(h.channel_affine(s, b)?)
            }
        }
    }

    fn conv_in_relu<'g>(x: Var<'g, T>, w: &Var<'g, T>, stride: usize) -> Result<Var<'g, T>> {
        let eps = T::from_f64_lossy(IN_EPS);
        Ok(x.reflect_pad2d(1)?
            .conv2d(w, None, ConvParams::new(stride, 0))?
            .instance_norm(eps)?
            .relu())
    }

    fn dropout<'g>(&self, h: Var<'g, T>, rng: &mut Option<&mut dyn RngCore>) -> Result<Var<'g, T>> {
        let Some(r) = rng.as_mut() else {
            return Ok(h);
        };
        if self.spec.dropout == 0.0 {
            return Ok(h);
        }
        let keep = 1.0 - self.spec.dropout;
        let inv = T::from_f64_lossy(1.0 / keep);
        let shape = h.shape();
        let mask = Tensor::from_fn(&shape, |_| if r.random_bool(keep) { inv } else { T::zero() });
        Ok(h.mul_const(&mask)?)
    }

    fn res_block<'g>(&self, p: &Bound<'g, T>, h: Var<'g, T>, b: usize, rng: &mut Option<&mut dyn RngCore>) -> Result<Var<'g, T>> {
        let eps = T::from_f64_lossy(IN_EPS);
        let ids = self.res[b];
        let y = Self::conv_in_relu(h, &p[ids.conv1], 1)?;
        let y = self.dropout(y, rng)?;
        let y = y
            .reflect_pad2d(1)?
            .conv2d(&p[ids.conv2], None, ConvParams::new(1, 0))?
            .instance_norm(eps)?;
        Ok(h.add(&y)?)
    }

    /// Runs the encoder and residual trunk. Stops after the last
    /// contrastive tap when `features_only`.
    fn trunk<'g>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        film: &FilmInput<'_, 'g, T>,
        rng: &mut Option<&mut dyn RngCore>,
        features_only: bool,
    ) -> Result<(Var<'g, T>, Vec<Var<'g, T>>)> {
        let (_, c, h, w) = x.value().dims4()?;
        if c != 1 || h != SEGMENT_BINS || w != SEGMENT_FRAMES {
            return Err(Error::Shape(format!(
                "generator input must be [N, 1, {SEGMENT_BINS}, {SEGMENT_FRAMES}], got {:?}",
                x.shape()
            )));
        }
        let mut feats = vec![x];
        let h1 = Self::conv_in_relu(x, &p[self.down1], 2)?;
        feats.push(h1);
        let h2 = Self::conv_in_relu(h1, &p[self.down2], 2)?;
        let mut h = self.modulate(p, h2, film, 0)?;
        feats.push(h);
        let last = *PCL_RES_TAPS.last().expect("taps");
        for b in 0..RES_BLOCKS {
            h = self.res_block(p, h, b, rng)?;
            h = self.modulate(p, h, film, b + 1)?;
            if PCL_RES_TAPS.contains(&b) {
                feats.push(h);
            }
            if features_only && b == last {
                break;
            }
        }
        Ok((h, feats))
    }

    /// Full pass. `dropout_rng` enables training-mode dropout.
    pub fn forward<'g>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        film: &FilmInput<'_, 'g, T>,
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<GenOutput<'g, T>> {
        let (h, features) = self.trunk(p, x, film, &mut dropout_rng, false)?;
        let eps = T::from_f64_lossy(IN_EPS);
        let u1 = h
            .conv_transpose2d(&p[self.up1], None, ConvParams::new(2, 1), (0, 1))?
            .instance_norm(eps)?
            .relu();
        let u2 = u1.conv_transpose2d(&p[self.up2_w], Some(&p[self.up2_b]), ConvParams::new(2, 1), (0, 1))?;
        Ok(GenOutput {
            output: x.add(&u2)?,
            features,
        })
    }

    /// The five contrastive feature layers only.
    pub fn features<'g>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        film: &FilmInput<'_, 'g, T>,
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<Vec<Var<'g, T>>> {
        Ok(self.trunk(p, x, film, &mut dropout_rng, true)?.1)
    }
}

impl Generator<f32> {
    /// Inference on one segment with one embedding (or none), dropout off.
    pub fn generate(&self, segment: &Matrix, embedding: Option<&[f32]>) -> Result<Matrix> {
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let x = g.constant(Tensor::new(&[1, 1, segment.rows(), segment.cols()], segment.data().to_vec())?);
        let e;
        let film = match embedding {
            Some(v) => {
                e = g.constant(Tensor::new(&[1, v.len()], v.to_vec())?);
                FilmInput::Embedding(e)
            }
            None => FilmInput::Off,
        };
        let out = self.forward(&p, x, &film, None)?.output.value();
        Matrix::from_vec(segment.rows(), segment.cols(), out.data().to_vec())
    }
}
