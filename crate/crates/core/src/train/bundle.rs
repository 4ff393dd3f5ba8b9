use std::collections::HashMap;
use std::path::Path;

use noisesim_autodiff::{Adam, AdamConfig, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use super::GanTrainConfig;
use crate::checkpoint::{read_tensors, store_from, store_into, write_tensors, Tensors};
use crate::dsp::{Compression, StftConfig};
use crate::error::{Error, Result};
use crate::losses::PatchProjector;
use crate::models::{
    ConvEncoder, Discriminator, DiscriminatorSpec, EncoderBackbone, EncoderSpec, Generator, GeneratorSpec,
};
use crate::rng;

const FORMAT: &str = "noisesim-gan-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Optimiser moments for the three trained parameter groups.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub generator: Adam<f32>,
    pub projector: Adam<f32>,
    pub discriminator: Adam<f32>,
}

impl OptimState {
    /// Zero moments for the bundle's current networks.
    pub fn new(bundle: &GanBundle) -> Self {
        let c = bundle.adam_config();
        Self {
            generator: Adam::new(bundle.generator.params(), c),
            projector: Adam::new(bundle.projector.params(), c),
            discriminator: Adam::new(bundle.discriminator.params(), c),
        }
    }
}

/// Structured header stored next to the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    generator: GeneratorSpec,
    discriminator: DiscriminatorSpec,
    encoder: EncoderSpec,
    embed_dim: usize,
    train: GanTrainConfig,
    compression: Compression,
    stft: StftConfig,
    step: u64,
    has_optimizer: bool,
    #[serde(default)]
    target_ids: Vec<String>,
}

/// Everything a GAN run needs to continue or to simulate: the networks,
/// the configuration, the front-end constants and the step counter. All
/// training randomness is derived from `(train.seed, step)`, so the step
/// counter is the full random state.
#[derive(Clone, Debug)]
pub struct GanBundle {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub encoder: ConvEncoder<f32>,
    pub projector: PatchProjector<f32>,
    pub train: GanTrainConfig,
    pub compression: Compression,
    pub stft: StftConfig,
    pub step: u64,
    /// Target utterances seen in training (empty before training).
    pub target_ids: Vec<String>,
    pub optimizer: Option<OptimState>,
}

impl GanBundle {
    /// Fresh networks around a (fine-tuned) encoder. Initial weights are
    /// drawn from `train.seed`.
    pub fn new(
        generator: GeneratorSpec,
        discriminator: DiscriminatorSpec,
        encoder: ConvEncoder<f32>,
        train: GanTrainConfig,
        compression: Compression,
    ) -> Result<Self> {
        train.validate()?;
        if generator.embed_dim != encoder.embed_dim() {
            return Err(Error::Shape(format!(
                "generator expects {}-dimensional embeddings, encoder gives {}",
                generator.embed_dim,
                encoder.embed_dim()
            )));
        }
        let mut r = rng::stream(train.seed, &[rng::tag("init")]);
        let g = Generator::new(generator, &mut r)?;
        let d = Discriminator::new(discriminator, &mut r)?;
        let projector = PatchProjector::new(&generator.pcl_channels()[..train.pcl.layers.min(5)], train.pcl.proj_dim, &mut r);
        Ok(Self {
            generator: g,
            discriminator: d,
            encoder,
            projector,
            train,
            compression,
            stft: StftConfig::default(),
            step: 0,
            target_ids: Vec::new(),
            optimizer: None,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.embed_dim()
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            eps: 1e-8,
        }
    }

    pub(crate) fn optimizer_or_init(&mut self) -> OptimState {
        match self.optimizer.take() {
            Some(o) => o,
            None => OptimState::new(self),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut t = Tensors::new();
        store_into("generator/", self.generator.params(), &mut t);
        store_into("discriminator/", self.discriminator.params(), &mut t);
        store_into("encoder/", self.encoder.params(), &mut t);
        store_into("projector/", self.projector.params(), &mut t);
        if let Some(o) = &self.optimizer {
            let groups: [(&str, &Adam<f32>, &ParamStore<f32>); 3] = [
                ("generator", &o.generator, self.generator.params()),
                ("projector", &o.projector, self.projector.params()),
                ("discriminator", &o.discriminator, self.discriminator.params()),
            ];
            for (net, adam, store) in groups {
                for (((name, _), m), v) in store.iter().zip(adam.first_moments()).zip(adam.second_moments()) {
                    t.insert(format!("adam/{net}/m/{name}"), m.clone());
                    t.insert(format!("adam/{net}/v/{name}"), v.clone());
                }
                t.insert(format!("adam/{net}/step"), Tensor::scalar(adam.step_count() as f32));
            }
        }
        let header = Header {
            version: BUNDLE_VERSION,
            generator: *self.generator.spec(),
            discriminator: *self.discriminator.spec(),
            encoder: self.encoder.spec().clone(),
            embed_dim: self.embed_dim(),
            train: self.train,
            compression: self.compression,
            stft: self.stft,
            step: self.step,
            has_optimizer: self.optimizer.is_some(),
            target_ids: self.target_ids.clone(),
        };
        let meta = HashMap::from([
            ("format".to_string(), FORMAT.to_string()),
            ("header".to_string(), serde_json::to_string(&header)?),
        ]);
        write_tensors(path.as_ref(), &t, meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (t, meta) = read_tensors(path.as_ref())?;
        if meta.get("format").map(String::as_str) != Some(FORMAT) {
            return Err(Error::Corrupt(format!("{} is not a GAN bundle", path.as_ref().display())));
        }
        let raw = meta
            .get("header")
            .ok_or_else(|| Error::Corrupt("bundle header missing".into()))?;
        let version = serde_json::from_str::<serde_json::Value>(raw)?
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Corrupt("bundle header has no version".into()))?;
        if version != BUNDLE_VERSION as u64 {
            return Err(Error::Version {
                found: version.to_string(),
                expected: BUNDLE_VERSION.to_string(),
            });
        }
        let h: Header = serde_json::from_str(raw)?;
        let generator = Generator::from_params(h.generator, store_from("generator/", &t))?;
        let discriminator = Discriminator::from_params(h.discriminator, store_from("discriminator/", &t))?;
        let encoder = ConvEncoder::from_params(store_from("encoder/", &t))?;
        if encoder.spec() != &h.encoder || encoder.embed_dim() != h.embed_dim {
            return Err(Error::Corrupt("encoder tensors disagree with the header".into()));
        }
        if h.generator.embed_dim != h.embed_dim {
            return Err(Error::Shape(format!(
                "bundle mixes embedding sizes {} and {}",
                h.generator.embed_dim, h.embed_dim
            )));
        }
        let layers = h.train.pcl.layers.min(5);
        let projector = PatchProjector::from_params(
            &h.generator.pcl_channels()[..layers],
            h.train.pcl.proj_dim,
            store_from("projector/", &t),
        )?;
        let mut bundle = Self {
            generator,
            discriminator,
            encoder,
            projector,
            train: h.train,
            compression: h.compression,
            stft: h.stft,
            step: h.step,
            target_ids: h.target_ids,
            optimizer: None,
        };
        if h.has_optimizer {
            let c = bundle.adam_config();
            let adam = |net: &str, store: &ParamStore<f32>| -> Result<Adam<f32>> {
                let fetch = |k: String| t.get(&k).cloned().ok_or_else(|| Error::Corrupt(format!("missing `{k}`")));
                let mut m = Vec::new();
                let mut v = Vec::new();
                for (name, _) in store.iter() {
                    m.push(fetch(format!("adam/{net}/m/{name}"))?);
                    v.push(fetch(format!("adam/{net}/v/{name}"))?);
                }
                let step = fetch(format!("adam/{net}/step"))?.item() as u64;
                Ok(Adam::from_state(c, step, m, v))
            };
            bundle.optimizer = Some(OptimState {
                generator: adam("generator", bundle.generator.params())?,
                projector: adam("projector", bundle.projector.params())?,
                discriminator: adam("discriminator", bundle.discriminator.params())?,
            });
        }
        Ok(bundle)
    }
}
