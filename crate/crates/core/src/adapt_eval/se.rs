use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;

use noisesim_autodiff::{Adam, AdamConfig, ConvParams, Graph, ParamId, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_tensors, store_from, store_into, write_tensors, Tensors};
use crate::dsp::{read_wav, write_wav, WavFormat, Waveform, SAMPLE_RATE};
use crate::error::{Error, IoContext, Result};
use crate::models::init_uniform;
use crate::rng;
use crate::simulate::SimulatedPair;

/// A speech enhancer that can be adapted one pair at a time.
pub trait SeBackend {
    fn name(&self) -> &str;
    fn enhance(&self, noisy: &Waveform) -> Result<Waveform>;
    /// One supervised update; returns the training loss.
    fn train_step(&mut self, noisy: &Waveform, clean: &Waveform) -> Result<f64>;
    fn causal(&self) -> bool;
    /// Samples of future input an output sample may depend on.
    fn lookahead(&self) -> usize {
        0
    }
    fn save(&self, path: &Path) -> Result<()>;
    fn load(&mut self, path: &Path) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetSpec {
    pub hidden: usize,
    pub depth: usize,
    pub kernel: usize,
    pub stride: usize,
    pub lr: f64,
    /// Weight of the STFT magnitude term next to the L1 waveform term.
    pub stft_weight: f64,
    pub stft_size: usize,
    pub stft_hop: usize,
    pub seed: u64,
}

impl Default for UNetSpec {
    fn default() -> Self {
        Self {
            hidden: 16,
            depth: 4,
            kernel: 8,
            stride: 4,
            lr: 3e-3,
            stft_weight: 0.01,
            stft_size: 512,
            stft_hop: 128,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Level {
    down_w: ParamId,
    down_b: ParamId,
    enc_mix_w: ParamId,
    enc_mix_b: ParamId,
    dec_mix_w: ParamId,
    dec_mix_b: ParamId,
    up_w: ParamId,
    up_b: ParamId,
}

/// Small causal waveform U-Net. Strided convolutions see only past
/// samples (left padding of `kernel - 1`) and transposed convolutions are
/// cropped on the right, so no output depends on later input. The output
/// is the decoder's estimate itself, not a residual on the input, so a
/// fresh model must be pretrained before it is useful.
#[derive(Clone, Debug)]
pub struct CausalUNet {
    spec: UNetSpec,
    params: ParamStore<f32>,
    levels: Vec<Level>,
    opt: Adam<f32>,
    window: Vec<f64>,
}

impl CausalUNet {
    pub fn new(spec: UNetSpec) -> Result<Self> {
        if spec.depth == 0 || spec.hidden == 0 || spec.stride == 0 || spec.kernel < spec.stride {
            return Err(Error::Config(format!("invalid U-Net shape {spec:?}")));
        }
        if spec.stft_hop == 0 || spec.stft_size < 2 {
            return Err(Error::Config("STFT loss needs a positive size and hop".into()));
        }
        let mut r = rng::stream(spec.seed, &[rng::tag("se-init")]);
        let mut params = ParamStore::new();
        let mut levels = Vec::with_capacity(spec.depth);
        let k = spec.kernel;
        for l in 0..spec.depth {
            let cin = if l == 0 { 1 } else { spec.hidden << (l - 1) };
            let cout = spec.hidden << l;
            let mut add = |name: String, shape: &[usize], fan_in: usize, r: &mut _| {
                params.add(name, init_uniform(shape, fan_in, r))
            };
            let up_fan = cout * k;
            levels.push(Level {
                down_w: add(format!("enc{l}.down.w"), &[cout, cin, 1, k], cin * k, &mut r),
                down_b: add(format!("enc{l}.down.b"), &[cout], cin * k, &mut r),
                enc_mix_w: add(format!("enc{l}.mix.w"), &[cout, cout, 1, 1], cout, &mut r),
                enc_mix_b: add(format!("enc{l}.mix.b"), &[cout], cout, &mut r),
                dec_mix_w: add(format!("dec{l}.mix.w"), &[cout, cout, 1, 1], cout, &mut r),
                dec_mix_b: add(format!("dec{l}.mix.b"), &[cout], cout, &mut r),
                up_w: add(format!("dec{l}.up.w"), &[cout, cin, 1, k], up_fan, &mut r),
                up_b: add(format!("dec{l}.up.b"), &[cin], up_fan, &mut r),
            });
        }
        let opt = Adam::new(
            &params,
            AdamConfig {
                lr: spec.lr,
                ..AdamConfig::default()
            },
        );
        let n = spec.stft_size;
        let window = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
        Ok(Self {
            spec,
            params,
            levels,
            opt,
            window,
        })
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    fn block(&self) -> usize {
        self.spec.stride.pow(self.spec.depth as u32)
    }

    fn forward<'g>(&self, g: &'g Graph<f32>, p: &noisesim_autodiff::Bound<'g, f32>, x: &[f32]) -> Result<Var<'g, f32>> {
        let len = x.len();
        let padded = len.div_ceil(self.block()).max(1) * self.block();
        let mut data = x.to_vec();
        data.resize(padded, 0.0);
        let input = g.constant(Tensor::new(&[1, 1, 1, padded], data)?);
        let s = self.spec.stride;
        let strided = ConvParams {
            stride: (1, s),
            pad: (0, 0),
        };
        let point = ConvParams::new(1, 0);
        let mut h = input;
        let mut skips = Vec::with_capacity(self.levels.len());
        for lv in &self.levels {
            h = h
                .pad2d((0, 0, self.spec.kernel - 1, 0))?
                .conv2d(&p[lv.down_w], Some(&p[lv.down_b]), strided)?
                .relu();
            h = h.conv2d(&p[lv.enc_mix_w], Some(&p[lv.enc_mix_b]), point)?.relu();
            skips.push(h);
        }
        for (l, lv) in self.levels.iter().enumerate().rev() {
            h = h.add(&skips[l])?;
            h = h.conv2d(&p[lv.dec_mix_w], Some(&p[lv.dec_mix_b]), point)?.relu();
            let t = h.shape()[3];
            h = h
                .conv_transpose2d(&p[lv.up_w], Some(&p[lv.up_b]), strided, (0, 0))?
                .crop2d(0, 1, 0, t * s)?;
            if l > 0 {
                h = h.relu();
            }
        }
        Ok(h.crop2d(0, 1, 0, len)?)
    }

    /// Windowed DFT magnitude `[frames, bins]` of a `[.., len]` signal.
    fn magnitude<'g>(&self, g: &'g Graph<f32>, y: Var<'g, f32>, len: usize) -> Result<Var<'g, f32>> {
        let n = self.spec.stft_size;
        let bins = n / 2 + 1;
        let count = (len - n) / self.spec.stft_hop + 1;
        let basis = |f: fn(f64) -> f64| {
            let w = &self.window;
            Tensor::from_fn(&[bins, n], |i| {
                let (k, t) = (i / n, i % n);
                (w[t] * f(2.0 * PI * (k * t) as f64 / n as f64)) as f32
            })
        };
        let frames = y.frames(n, self.spec.stft_hop, count)?;
        let re = frames.matmul_nt(&g.constant(basis(f64::cos)))?;
        let im = frames.matmul_nt(&g.constant(basis(f64::sin)))?;
        Ok(re.square().add(&im.square())?.add_scalar(1e-7).sqrt())
    }

    fn loss<'g>(&self, g: &'g Graph<f32>, est: Var<'g, f32>, clean: &[f32]) -> Result<Var<'g, f32>> {
        let len = clean.len();
        let target = g.constant(Tensor::new(&[1, 1, 1, len], clean.to_vec())?);
        let l1 = est.sub(&target)?.abs().mean_all();
        if self.spec.stft_weight == 0.0 || len < self.spec.stft_size {
            return Ok(l1);
        }
        let se = self.magnitude(g, est, len)?;
        let sc = self.magnitude(g, target, len)?.value();
        let norm = sc.data().iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt().max(1e-8);
        let scv = g.constant((*sc).clone());
        let convergence = se.sub(&scv)?.square().sum_all().add_scalar(1e-12).sqrt().scale((1.0 / norm) as f32);
        // Linear rather than log magnitudes: the near-silent gaps of the
        // clean reference would otherwise dominate.
        let mag = se.sub(&scv)?.abs().mean_all();
        let w = self.spec.stft_weight as f32;
        Ok(Var::sum_scalars(&[l1, convergence.scale(w), mag.scale(w)])?)
    }
}

impl SeBackend for CausalUNet {
    fn name(&self) -> &str {
        "desk"
    }

    fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let y = self.forward(&g, &p, noisy.samples())?;
        Waveform::new(y.value().data().to_vec(), noisy.sample_rate())
    }

    fn train_step(&mut self, noisy: &Waveform, clean: &Waveform) -> Result<f64> {
        if noisy.len() != clean.len() {
            return Err(Error::Shape(format!("noisy {} vs clean {} samples", noisy.len(), clean.len())));
        }
        let g = Graph::new();
        let p = self.params.bind(&g, true);
        let est = self.forward(&g, &p, noisy.samples())?;
        let loss = self.loss(&g, est, clean.samples())?;
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(Error::Divergence {
                component: "enhancement loss".into(),
                step: self.opt.step_count(),
            });
        }
        let mut grads = g.backward(loss);
        let gs = p.gradients(&mut grads);
        drop(p);
        self.opt.step(&mut self.params, &gs);
        Ok(value)
    }

    fn causal(&self) -> bool {
        true
    }

    fn save(&self, path: &Path) -> Result<()> {
        let mut t = Tensors::new();
        store_into("", &self.params, &mut t);
        let meta = [("unet".to_string(), serde_json::to_string(&self.spec)?)].into();
        write_tensors(path, &t, meta)
    }

    fn load(&mut self, path: &Path) -> Result<()> {
        let (t, meta) = read_tensors(path)?;
        let store = store_from("", &t);
        let spec: UNetSpec = match meta.get("unet") {
            Some(s) => serde_json::from_str(s)?,
            None => return Err(Error::Corrupt(format!("{} has no U-Net header", path.display()))),
        };
        let mut fresh = CausalUNet::new(spec)?;
        for (name, t) in store.iter() {
            fresh.params.set(name, t.clone())?;
        }
        *self = fresh;
        Ok(())
    }
}

/// An enhancer living in another program (e.g. a full-size pretrained
/// model). The program is invoked as
/// `<program> <args..> enhance <noisy.wav> <out.wav>`,
/// `<program> <args..> train-step <noisy.wav> <clean.wav>` (printing the
/// loss), `save <path>` and `load <path>`.
#[derive(Clone, Debug)]
pub struct CommandBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub causal: bool,
    pub lookahead: usize,
    scratch: PathBuf,
}

impl CommandBackend {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>, scratch: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args,
            causal: true,
            lookahead: 0,
            scratch: scratch.into(),
        }
    }

    fn run(&self, verb: &str, files: &[&Path]) -> Result<String> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(verb)
            .args(files)
            .output()
            .at(&self.program)?;
        if !out.status.success() {
            return Err(Error::Unsupported(format!(
                "{} {verb} failed: {}",
                self.program.display(),
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    fn scratch_file(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.scratch).at(&self.scratch)?;
        Ok(self.scratch.join(name))
    }
}

impl SeBackend for CommandBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        let input = self.scratch_file("in.wav")?;
        let output = self.scratch_file("out.wav")?;
        write_wav(&input, noisy, WavFormat::Float32)?;
        self.run("enhance", &[&input, &output])?;
        read_wav(&output)
    }

    fn train_step(&mut self, noisy: &Waveform, clean: &Waveform) -> Result<f64> {
        let n = self.scratch_file("noisy.wav")?;
        let c = self.scratch_file("clean.wav")?;
        write_wav(&n, noisy, WavFormat::Float32)?;
        write_wav(&c, clean, WavFormat::Float32)?;
        let out = self.run("train-step", &[&n, &c])?;
        out.trim()
            .parse()
            .map_err(|_| Error::Unsupported(format!("train-step printed `{}`, expected a loss", out.trim())))
    }

    fn causal(&self) -> bool {
        self.causal
    }

    fn lookahead(&self) -> usize {
        self.lookahead
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.run("save", &[path]).map(|_| ())
    }

    fn load(&mut self, path: &Path) -> Result<()> {
        self.run("load", &[path]).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeFinetuneConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Train on a random aligned window of at most this many samples.
    pub max_samples: Option<usize>,
}

impl Default for SeFinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            seed: 0,
            max_samples: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeTrainReport {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Supervised updates at batch one over `(noisy, clean)` pairs: every
/// epoch visits each pair once in a seeded order.
pub fn finetune_se_waveforms(
    backend: &mut dyn SeBackend,
    pairs: &[(Waveform, Waveform)],
    cfg: &SeFinetuneConfig,
) -> Result<SeTrainReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs to fine-tune on".into()));
    }
    let mut report = SeTrainReport::default();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut r = rng::stream(cfg.seed, &[rng::tag("se-epoch"), epoch as u64]);
        order.shuffle(&mut r);
        let mut sum = 0.0;
        for &i in &order {
            let (noisy, clean) = &pairs[i];
            let loss = match cfg.max_samples {
                Some(m) if noisy.len() > m => {
                    let start = r.random_range(0..=noisy.len() - m);
                    backend.train_step(&noisy.slice(start, start + m), &clean.slice(start, start + m))?
                }
                _ => backend.train_step(noisy, clean)?,
            };
            report.step_losses.push(loss);
            sum += loss;
        }
        let mean = sum / pairs.len() as f64;
        log::info!("{} epoch {}/{}: loss {mean:.4}", backend.name(), epoch + 1, cfg.epochs);
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Loads every simulated pair and fine-tunes on it.
pub fn finetune_se(backend: &mut dyn SeBackend, pairs: &[SimulatedPair], cfg: &SeFinetuneConfig) -> Result<SeTrainReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no simulated pairs to fine-tune on".into()));
    }
    let loaded = pairs
        .iter()
        .map(|p| {
            let noisy = read_wav(&p.simulated_waveform_path)?.resample_to(SAMPLE_RATE)?;
            let clean = read_wav(&p.clean_waveform_path)?.resample_to(SAMPLE_RATE)?;
            let n = noisy.len().min(clean.len());
            Ok((noisy.fit_length(n), clean.fit_length(n)))
        })
        .collect::<Result<Vec<_>>>()?;
    finetune_se_waveforms(backend, &loaded, cfg)
}

/// Clean utterances mixed with real target-domain noise at the given SNRs
/// (cycled), each noise excerpt taken at a seeded offset and looped when
/// shorter than the utterance.
pub fn oracle_mixtures(clean: &[Waveform], noise: &[Waveform], snrs_db: &[f64], seed: u64) -> Result<Vec<(Waveform, Waveform)>> {
    if noise.is_empty() || snrs_db.is_empty() {
        return Err(Error::InvalidInput("oracle mixtures need noise recordings and SNRs".into()));
    }
    clean
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut r = rng::stream(seed, &[rng::tag("oracle"), i as u64]);
            let n = &noise[r.random_range(0..noise.len())];
            if n.is_empty() {
                return Err(Error::InvalidInput("empty noise recording".into()));
            }
            let offset = r.random_range(0..n.len());
            let excerpt: Vec<f32> = (0..c.len()).map(|t| n.samples()[(offset + t) % n.len()]).collect();
            let excerpt = Waveform::new(excerpt, c.sample_rate())?;
            let mixed = crate::data::synth::mix_at_snr(c, &excerpt, snrs_db[i % snrs_db.len()])?;
            Ok((mixed, c.clone()))
        })
        .collect()
}
