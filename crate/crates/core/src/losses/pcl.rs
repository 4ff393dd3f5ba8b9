use noisesim_autodiff::{Bound, ParamId, ParamStore, Real, Tensor, Var};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::init_uniform;

/// Where the negatives of each query come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSource {
    /// Other locations of the input-side features.
    #[default]
    Input,
    /// Other locations of the output-side features.
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PclConfig {
    pub layers: usize,
    pub negatives: usize,
    pub patches: usize,
    pub temperature: f64,
    pub proj_dim: usize,
    pub negative_source: NegativeSource,
}

impl Default for PclConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            negatives: 256,
            patches: 256,
            temperature: 0.07,
            proj_dim: 256,
            negative_source: NegativeSource::Input,
        }
    }
}

impl PclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if self.layers == 0 || self.patches == 0 || self.negatives == 0 || self.proj_dim == 0 {
            return Err(Error::Config("contrastive sizes must be positive".into()));
        }
        Ok(())
    }

    /// Sampled locations per layer: every query's own location plus at
    /// least `negatives` others.
    pub fn positions_per_layer(&self) -> usize {
        self.patches.max(self.negatives + 1)
    }
}

/// Two-layer MLP per feature layer (`C -> proj -> proj`, ReLU between),
/// followed by L2 normalisation.
#[derive(Clone, Debug)]
pub struct PatchProjector<T> {
    params: ParamStore<T>,
    layers: Vec<[ParamId; 4]>,
}

impl<T: Real> PatchProjector<T> {
    pub fn new(channels: &[usize], proj_dim: usize, r: &mut impl Rng) -> Self {
        let mut params = ParamStore::new();
        let layers = channels
            .iter()
            .enumerate()
            .map(|(l, &c)| {
                [
                    params.add(format!("proj{l}.fc1.w"), init_uniform(&[proj_dim, c], c, r)),
                    params.add(format!("proj{l}.fc1.b"), Tensor::zeros(&[proj_dim])),
                    params.add(format!("proj{l}.fc2.w"), init_uniform(&[proj_dim, proj_dim], proj_dim, r)),
                    params.add(format!("proj{l}.fc2.b"), Tensor::zeros(&[proj_dim])),
                ]
            })
            .collect();
        Self { params, layers }
    }

    pub fn from_params(channels: &[usize], proj_dim: usize, params: ParamStore<T>) -> Result<Self> {
        let mut p = Self::new(channels, proj_dim, &mut crate::rng::stream(0, &[]));
        if params.len() != p.params.len() {
            return Err(Error::Corrupt(format!(
                "projector has {} tensors, expected {}",
                params.len(),
                p.params.len()
            )));
        }
        for (name, t) in params.iter() {
            p.params.set(name, t.clone())?;
        }
        Ok(p)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// `[P, C] -> [P, proj]`, unit rows.
    pub fn project<'g>(&self, p: &Bound<'g, T>, layer: usize, patches: Var<'g, T>) -> Result<Var<'g, T>> {
        let ids = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::InvalidInput(format!("no projection for layer {layer}")))?;
        let h = patches.linear(&p[ids[0]], Some(&p[ids[1]]))?.relu();
        let z = h.linear(&p[ids[2]], Some(&p[ids[3]]))?;
        Ok(z.l2_normalize_rows(T::from_f64_lossy(1e-12))?)
    }
}

/// Draws the sampled locations for every (layer, batch item). Layers with
/// fewer locations than needed are sampled with replacement.
pub fn sample_positions<T: Real>(
    features: &[Var<'_, T>],
    cfg: &PclConfig,
    r: &mut impl Rng,
) -> Result<Vec<Vec<Vec<usize>>>> {
    let need = cfg.positions_per_layer();
    features
        .iter()
        .map(|f| {
            let (n, _, h, w) = f.value().dims4()?;
            let hw = h * w;
            Ok((0..n)
                .map(|_| {
                    if hw >= need {
                        index::sample(r, hw, need).into_vec()
                    } else {
                        log::warn!("only {hw} locations for {need} patches; sampling with replacement");
                        (0..need).map(|_| r.random_range(0..hw)).collect()
                    }
                })
                .collect())
        })
        .collect()
}

/// Patch-wise contrastive loss with explicit locations:
/// `positions[l][n]` lists the locations for layer `l`, batch item `n`; the
/// first `patches` are queries. Query `i` is scored against its own
/// location and the `negatives` locations following it cyclically. Mean
/// over queries and batch, sum over layers.
pub fn pcl_loss_with_positions<'g, T: Real>(
    feats_input: &[Var<'g, T>],
    feats_output: &[Var<'g, T>],
    cfg: &PclConfig,
    projector: &PatchProjector<T>,
    p: &Bound<'g, T>,
    positions: &[Vec<Vec<usize>>],
) -> Result<Var<'g, T>> {
    cfg.validate()?;
    if feats_input.len() != feats_output.len() || feats_input.len() != positions.len() {
        return Err(Error::Shape(format!(
            "{} input layers, {} output layers, {} position sets",
            feats_input.len(),
            feats_output.len(),
            positions.len()
        )));
    }
    let inv_tau = T::from_f64_lossy(1.0 / cfg.temperature);
    let (i_q, j) = (cfg.patches, cfg.negatives);
    let mut terms = Vec::new();
    for (l, ((fin, fout), pos)) in feats_input.iter().zip(feats_output).zip(positions).enumerate() {
        if fin.shape() != fout.shape() {
            return Err(Error::Shape(format!(
                "layer {l}: input {:?} vs output {:?}",
                fin.shape(),
                fout.shape()
            )));
        }
        let n = fin.shape()[0];
        if pos.len() != n {
            return Err(Error::Shape(format!("layer {l}: {} position lists for batch {n}", pos.len())));
        }
        let mut per_item = Vec::with_capacity(n);
        for (b, locs) in pos.iter().enumerate() {
            let np = locs.len();
            if np < i_q || np < j + 1 {
                return Err(Error::Shape(format!(
                    "layer {l}: {np} locations for {i_q} queries and {j} negatives"
                )));
            }
            let keys_in = projector.project(p, l, fin.gather_positions(b, locs)?)?;
            let queries = projector.project(p, l, fout.gather_positions(b, &locs[..i_q])?)?;
            let (keys, offset) = match cfg.negative_source {
                NegativeSource::Input => (keys_in, 0),
                NegativeSource::Output => {
                    let keys_out = projector.project(p, l, fout.gather_positions(b, locs)?)?;
                    (keys_in.concat_rows(&keys_out)?, np)
                }
            };
            let logits = queries.matmul_nt(&keys)?.scale(inv_tau);
            let cols: Vec<usize> = (0..i_q)
                .flat_map(|i| {
                    std::iter::once(i).chain((1..=j).map(move |k| offset + (i + k) % np))
                })
                .collect();
            let picked = logits.gather_cols(&cols, j + 1)?;
            let ce = picked
                .log_softmax_rows()?
                .select_per_row(&vec![0; i_q])?
                .mean_all()
                .neg();
            per_item.push(ce);
        }
        let layer_term = Var::sum_scalars(&per_item)?.scale(T::one() / T::from_f64_lossy(n as f64));
        terms.push(layer_term);
    }
    Ok(Var::sum_scalars(&terms)?)
}

/// Contrastive loss with freshly sampled locations.
pub fn pcl_loss<'g, T: Real>(
    feats_input: &[Var<'g, T>],
    feats_output: &[Var<'g, T>],
    cfg: &PclConfig,
    projector: &PatchProjector<T>,
    p: &Bound<'g, T>,
    r: &mut impl Rng,
) -> Result<Var<'g, T>> {
    let positions = sample_positions(feats_input, cfg, r)?;
    pcl_loss_with_positions(feats_input, feats_output, cfg, projector, p, &positions)
}
