use noisesim_autodiff::{conv_out_size, Bound, ConvParams, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init;
use crate::error::{Error, Result};

pub const DISC_STRIDES: [usize; 5] = [2, 2, 2, 1, 1];
const KERNEL: usize = 4;
const PAD: usize = 1;
const SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub base_channels: usize,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self { base_channels: 64 }
    }
}

impl DiscriminatorSpec {
    fn widths(&self) -> [usize; 6] {
        let c = self.base_channels;
        [1, c, 2 * c, 4 * c, 8 * c, 1]
    }

    /// Score-map size for an `h x w` input.
    pub fn output_size(h: usize, w: usize) -> Option<(usize, usize)> {
        DISC_STRIDES.iter().try_fold((h, w), |(h, w), &s| {
            Some((conv_out_size(h, KERNEL, s, PAD)?, conv_out_size(w, KERNEL, s, PAD)?))
        })
    }
}

/// Five-layer patch classifier; the last layer emits one logit per patch.
#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    spec: DiscriminatorSpec,
    params: ParamStore<T>,
    layers: Vec<(ParamId, ParamId)>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(spec: DiscriminatorSpec, r: &mut impl Rng) -> Result<Self> {
        if spec.base_channels == 0 {
            return Err(Error::Config("discriminator width must be positive".into()));
        }
        let widths = spec.widths();
        let mut params = ParamStore::new();
        let layers = (0..DISC_STRIDES.len())
            .map(|l| {
                let w = params.add(
                    format!("layer{l}.w"),
                    init::normal(&[widths[l + 1], widths[l], KERNEL, KERNEL], 0.02, r),
                );
                let b = params.add(format!("layer{l}.b"), Tensor::zeros(&[widths[l + 1]]));
                (w, b)
            })
            .collect();
        Ok(Self { spec, params, layers })
    }

    pub fn from_params(spec: DiscriminatorSpec, params: ParamStore<T>) -> Result<Self> {
        let mut d = Self::new(spec, &mut crate::rng::stream(0, &[]))?;
        if params.len() != d.params.len() {
            return Err(Error::Corrupt(format!(
                "discriminator has {} tensors, expected {}",
                params.len(),
                d.params.len()
            )));
        }
        for (name, t) in params.iter() {
            d.params.set(name, t.clone())?;
        }
        Ok(d)
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Patch scores in `(0, 1)`: `[N, 1, 129, 128] -> [N, 1, 14, 14]`.
    pub fn forward<'g>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (l, (&(w, b), &s)) in self.layers.iter().zip(&DISC_STRIDES).enumerate() {
            h = h.conv2d(&p[w], Some(&p[b]), ConvParams::new(s, PAD))?;
            if l == last {
                break;
            }
            if l > 0 {
                h = h.instance_norm(T::from_f64_lossy(1e-5))?;
            }
            h = h.leaky_relu(T::from_f64_lossy(SLOPE));
        }
        Ok(h.sigmoid())
    }
}
