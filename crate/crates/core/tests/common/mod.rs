#![allow(dead_code)]

use noisesim_autodiff::{Graph, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Replaces every parameter with small random values, so zero-initialised
/// layers stop hiding gradient paths.
pub fn randomize<T: noisesim_autodiff::Real>(store: &mut noisesim_autodiff::ParamStore<T>, r: &mut ChaCha8Rng, scale: f64) {
    let names: Vec<(String, Vec<usize>)> = store.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
    for (n, shape) in names {
        let t = Tensor::from_fn(&shape, |_| T::from_f64_lossy(r.random_range(-scale..scale)));
        store.set(&n, t).unwrap();
    }
}

/// Largest norm-wise relative error between the tape gradient of the
/// scalar `f` and central differences, over all inputs.
pub fn fd_error<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: for<'g> Fn(&[Var<'g, f64>]) -> Var<'g, f64>,
{
    fd_error_step(inputs, 1e-6, f)
}

/// [`fd_error`] with step `h`. Deep ReLU stacks need a small step so the
/// stencil rarely straddles a kink.
pub fn fd_error_step<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> f64
where
    F: for<'g> Fn(&[Var<'g, f64>]) -> Var<'g, f64>,
{
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&vars);
    let mut grads = g.backward(out);
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let eval = |inp: &[Tensor<f64>]| {
        let g = Graph::new();
        let vars: Vec<_> = inp.iter().map(|t| g.constant(t.clone())).collect();
        f(&vars).item()
    };
    let mut worst = 0.0f64;
    for (k, t) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; t.numel()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= h;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let a = analytic[k].data();
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nn);
        if scale > 1e-12 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

/// Projects a tensor output to a scalar with fixed pseudo-random weights so
/// every output element contributes to the checked gradient.
pub fn project<'g>(y: Var<'g, f64>) -> Var<'g, f64> {
    let n = y.value().numel();
    let w = Tensor::from_fn(&y.shape(), |i| ((i * 7919 % 13) as f64 - 6.0) / 6.0 + 1.0 / (n as f64));
    y.mul_const(&w).unwrap().sum_all()
}

use noisesim::data::synth::{NoiseKind, ToySet, ToyUtterance};
use noisesim::data::SegmentPool;
use noisesim::dsp::{stft, Compression, StftConfig, Waveform};
use noisesim::losses::PclConfig;
use noisesim::models::{ConvEncoder, DiscriminatorSpec, EncoderSpec, GeneratorSpec};
use noisesim::train::{GanBundle, GanTrainConfig};
use rand::SeedableRng as _;

/// A small clean/noisy toy domain with matching pools and an untrained
/// bundle around an 8-dimensional encoder.
pub struct Toy {
    pub clean: Vec<ToyUtterance>,
    pub noisy: Vec<ToyUtterance>,
    pub clean_pool: SegmentPool,
    pub noisy_pool: SegmentPool,
    pub bundle: GanBundle,
}

pub fn small_train_config() -> GanTrainConfig {
    GanTrainConfig {
        epochs: 2,
        batch_size: 2,
        checkpoint_every: 1,
        seed: 11,
        pcl: PclConfig {
            patches: 16,
            negatives: 16,
            proj_dim: 16,
            ..PclConfig::default()
        },
        ..GanTrainConfig::default()
    }
}

pub fn toy(train: GanTrainConfig) -> Toy {
    let clean = ToySet::clean("c", 4).with_duration(1.0, 1.3).generate(1);
    let noisy = ToySet::noisy("n", 4, &[NoiseKind::Pink]).with_duration(1.0, 1.3).generate(2);
    let waves: Vec<(&str, &Waveform)> = clean
        .iter()
        .map(|u| (u.id.as_str(), &u.clean))
        .chain(noisy.iter().map(|u| (u.id.as_str(), u.noisy.as_ref().unwrap())))
        .collect();
    let cfg = StftConfig::default();
    let specs: Vec<_> = waves.iter().map(|(_, w)| stft(w, &cfg).unwrap()).collect();
    let compression = Compression::fit(&specs).unwrap();
    let clean_pool = SegmentPool::from_waveforms(waves[..4].iter().copied(), &cfg, compression).unwrap();
    let noisy_pool = SegmentPool::from_waveforms(waves[4..].iter().copied(), &cfg, compression).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let encoder = ConvEncoder::new(EncoderSpec { channels: vec![4, 8] }, &mut r).unwrap();
    let bundle = GanBundle::new(
        GeneratorSpec::new(4, 8),
        DiscriminatorSpec { base_channels: 8 },
        encoder,
        train,
        compression,
    )
    .unwrap();
    Toy {
        clean,
        noisy,
        clean_pool,
        noisy_pool,
        bundle,
    }
}

// Brute-force patch contrastive loss.

use noisesim::losses::{NegativeSource, PatchProjector};
use noisesim_autodiff::ParamStore;

fn mlp(store: &ParamStore<f64>, layer: usize, x: &[f64]) -> Vec<f64> {
    let get = |n: &str| store.get(store.id(&format!("proj{layer}.{n}")).unwrap()).clone();
    let affine = |w: &Tensor<f64>, b: &Tensor<f64>, x: &[f64]| -> Vec<f64> {
        let (o, i) = w.dims2().unwrap();
        (0..o)
            .map(|r| (0..i).map(|c| w.data()[r * i + c] * x[c]).sum::<f64>() + b.data()[r])
            .collect()
    };
    let h: Vec<f64> = affine(&get("fc1.w"), &get("fc1.b"), x).into_iter().map(|v| v.max(0.0)).collect();
    let z = affine(&get("fc2.w"), &get("fc2.b"), &h);
    let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.into_iter().map(|v| v / n).collect()
}

fn patch(t: &Tensor<f64>, pos: usize) -> Vec<f64> {
    let (_, c, h, w) = t.dims4().unwrap();
    (0..c).map(|ch| t.data()[ch * h * w + pos]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct summation over every query term.
pub fn pcl_oracle(fin: &Tensor<f64>, fout: &Tensor<f64>, cfg: &PclConfig, proj: &PatchProjector<f64>, locs: &[usize]) -> f64 {
    let np = locs.len();
    let mut total = 0.0;
    for i in 0..cfg.patches {
        let q = mlp(proj.params(), 0, &patch(fout, locs[i]));
        let key = |p: usize| match cfg.negative_source {
            NegativeSource::Input => mlp(proj.params(), 0, &patch(fin, p)),
            NegativeSource::Output => mlp(proj.params(), 0, &patch(fout, p)),
        };
        let pos = (dot(&q, &mlp(proj.params(), 0, &patch(fin, locs[i]))) / cfg.temperature).exp();
        let neg: f64 = (1..=cfg.negatives)
            .map(|k| (dot(&q, &key(locs[(i + k) % np])) / cfg.temperature).exp())
            .sum();
        total += -(pos / (pos + neg)).ln();
    }
    total / cfg.patches as f64
}

pub fn small_pcl_config(source: NegativeSource) -> PclConfig {
    PclConfig {
        layers: 1,
        negatives: 3,
        patches: 2,
        temperature: 0.07,
        proj_dim: 8,
        negative_source: source,
    }
}

