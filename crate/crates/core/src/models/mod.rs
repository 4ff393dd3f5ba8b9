//! The three networks: FiLM-conditioned generator, patch discriminator and
//! noise encoder. All are generic over the scalar type so gradient checks
//! can run in `f64`; training uses `f32`.

mod discriminator;
mod embedding;
mod encoder;
mod film;
mod generator;
mod init;

pub(crate) use init::uniform as init_uniform;

pub use discriminator::{Discriminator, DiscriminatorSpec, DISC_STRIDES};
pub use embedding::NoiseEmbedding;
pub(crate) use encoder::valid_input;
pub use encoder::{encoder_classify, encoder_embed, utterance_embedding, ClassifierHead, ConvEncoder, EncoderBackbone, EncoderSpec};
pub use film::{film_apply, FilmInput, FILM_SITES};
pub use generator::{GenOutput, Generator, GeneratorSpec, PCL_LAYERS, PCL_RES_TAPS, RES_BLOCKS};

use noisesim_autodiff::Tensor;

use crate::dsp::SpectrogramSegment;
use crate::error::Result;

/// Stacks segments into a `[N, 1, 129, 128]` tensor.
pub fn segments_tensor(segments: &[SpectrogramSegment]) -> Result<Tensor<f32>> {
    let (h, w) = segments
        .first()
        .map(|s| s.data().shape())
        .unwrap_or((crate::dsp::SEGMENT_BINS, crate::dsp::SEGMENT_FRAMES));
    let data = segments.iter().flat_map(|s| s.data().data().iter().copied()).collect();
    Ok(Tensor::new(&[segments.len(), 1, h, w], data)?)
}
