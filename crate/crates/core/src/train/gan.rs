use std::path::{Path, PathBuf};

use noisesim_autodiff::{Graph, Tensor, Var};
use rand::RngCore;

use super::{GanBundle, LogRecord, LossLog, OptimState};
use crate::data::{batches_per_epoch, next_batch, SegmentPool, UnpairedBatch};
use crate::error::{Error, IoContext, Result};
use crate::losses::{
    adv_d_loss, adv_g_loss, nse_loss_from_output, pcl_loss, total_loss, LossParts, LossReport,
};
use crate::models::{segments_tensor, valid_input, EncoderBackbone, FilmInput};
use crate::rng;

/// Where a run writes its side outputs.
#[derive(Clone, Debug, Default)]
pub struct TrainOutputs {
    /// JSONL loss log.
    pub log: Option<PathBuf>,
    /// Directory for periodic and final checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop after this many global steps (for interrupted or partial runs).
    pub max_steps: Option<u64>,
}

/// Embeddings of the noisy half of a batch through the frozen encoder,
/// `[N, D]`, or zeros when conditioning is disabled.
pub fn batch_embeddings(bundle: &GanBundle, batch: &UnpairedBatch) -> Result<Tensor<f32>> {
    let d = bundle.embed_dim();
    let n = batch.noisy.len();
    if !bundle.train.use_embeddings {
        return Ok(Tensor::zeros(&[n, d]));
    }
    let g = Graph::new();
    let p = bundle.encoder.params().bind(&g, false);
    let mut out = Vec::with_capacity(n * d);
    for seg in &batch.noisy {
        let e = bundle.encoder.embed(&p, g.constant(valid_input(seg)?))?;
        out.extend_from_slice(e.value().data());
    }
    Ok(Tensor::new(&[n, d], out)?)
}

fn scalar(v: &Var<'_, f32>, name: &str, step: u64) -> Result<f64> {
    let x = v.item() as f64;
    if !x.is_finite() {
        return Err(Error::Divergence {
            component: name.to_string(),
            step,
        });
    }
    Ok(x)
}

/// One discriminator update followed by one generator/projector update.
pub fn train_step(bundle: &mut GanBundle, opt: &mut OptimState, batch: &UnpairedBatch, step: u64) -> Result<LossReport> {
    let cfg = bundle.train;
    let mut r = rng::stream(cfg.seed, &[rng::tag("step"), step]);
    let emb = batch_embeddings(bundle, batch)?;
    let valid: Vec<usize> = batch.clean.iter().map(|s| s.valid_frames()).collect();

    let g = Graph::new();
    let gp = bundle.generator.params().bind(&g, true);
    let pp = bundle.projector.params().bind(&g, true);
    let ep = bundle.encoder.params().bind(&g, false);
    let y = g.constant(segments_tensor(&batch.clean)?);
    let x_t = g.constant(segments_tensor(&batch.noisy)?);
    let n = g.constant(emb);
    let film = FilmInput::Embedding(n);
    let layers = cfg.pcl.layers.min(5);

    let fake = bundle.generator.forward(&gp, y, &film, Some(&mut r as &mut dyn RngCore))?;

    // Discriminator: real target segments against detached fakes.
    let adv_d = {
        let dp = bundle.discriminator.params().bind(&g, true);
        let d_real = bundle.discriminator.forward(&dp, x_t)?;
        let d_fake = bundle.discriminator.forward(&dp, fake.output.detach())?;
        let loss = adv_d_loss(&d_real, &d_fake)?;
        let value = scalar(&loss, "adv_d", step)?;
        let mut grads = g.backward(loss);
        opt.discriminator
            .step(bundle.discriminator.params_mut(), &dp.gradients(&mut grads));
        value
    };

    // Generator side, scored by the updated discriminator held fixed.
    let dp = bundle.discriminator.params().bind(&g, false);
    let adv_g = adv_g_loss(&bundle.discriminator.forward(&dp, fake.output)?, cfg.adv_form)?;
    let feats_fake = bundle
        .generator
        .features(&gp, fake.output, &film, Some(&mut r as &mut dyn RngCore))?;
    let pcl_src = pcl_loss(
        &fake.features[..layers],
        &feats_fake[..layers],
        &cfg.pcl,
        &bundle.projector,
        &pp,
        &mut r,
    )?;
    let idt = bundle.generator.forward(&gp, x_t, &film, Some(&mut r as &mut dyn RngCore))?;
    let feats_idt = bundle
        .generator
        .features(&gp, idt.output, &film, Some(&mut r as &mut dyn RngCore))?;
    let pcl_tgt = pcl_loss(
        &idt.features[..layers],
        &feats_idt[..layers],
        &cfg.pcl,
        &bundle.projector,
        &pp,
        &mut r,
    )?;
    let nse = nse_loss_from_output(&n, &fake.output, &valid, &bundle.encoder, &ep)?;

    let parts = LossParts {
        adv_d,
        adv_g: scalar(&adv_g, "adv_g", step)?,
        pcl_src: scalar(&pcl_src, "pcl_src", step)?,
        pcl_tgt: scalar(&pcl_tgt, "pcl_tgt", step)?,
        nse: scalar(&nse, "nse", step)?,
    };
    let report = total_loss(parts, cfg.lambda_nse, step)?;
    let total = Var::sum_scalars(&[adv_g, pcl_src, pcl_tgt, nse.scale(cfg.lambda_nse as f32)])?;
    let mut grads = g.backward(total);
    opt.generator.step(bundle.generator.params_mut(), &gp.gradients(&mut grads));
    opt.projector.step(bundle.projector.params_mut(), &pp.gradients(&mut grads));
    Ok(report)
}

fn checkpoint(bundle: &GanBundle, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    bundle.save(dir.join(name))
}

/// Runs (or continues) adversarial training up to `bundle.train.epochs`.
/// The batch order is a function of `(seed, epoch)` and every step's
/// randomness of `(seed, step)`, so a run resumed from any saved bundle
/// continues exactly as the uninterrupted run would have.
pub fn train_gan(
    bundle: &mut GanBundle,
    clean: &SegmentPool,
    noisy: &SegmentPool,
    out: &TrainOutputs,
) -> Result<Vec<LossReport>> {
    let cfg = bundle.train;
    cfg.validate()?;
    let per_epoch = batches_per_epoch(clean, noisy, cfg.batch_size) as u64;
    let total_steps = per_epoch * cfg.epochs as u64;
    let stop = out.max_steps.map_or(total_steps, |m| m.min(total_steps));
    let mut log = match &out.log {
        Some(p) => Some(LossLog::resume(p, bundle.step)?),
        None => None,
    };
    for id in noisy.ids() {
        if !bundle.target_ids.contains(id) {
            bundle.target_ids.push(id.clone());
        }
    }
    let mut opt = bundle.optimizer_or_init();
    let mut reports = Vec::new();
    let result = (|| -> Result<()> {
        while bundle.step < stop {
            let step = bundle.step;
            let epoch = step / per_epoch;
            let batch = next_batch(clean, noisy, cfg.batch_size, cfg.seed, epoch, (step % per_epoch) as usize)?;
            let report = train_step(bundle, &mut opt, &batch, step)?;
            if let Some(l) = log.as_mut() {
                l.append(&LogRecord::new(step, epoch, &report))?;
            }
            reports.push(report);
            bundle.step += 1;
            if bundle.step % per_epoch == 0 {
                let done = bundle.step / per_epoch;
                log::info!(
                    "epoch {done}/{}: total {:.4} adv_d {:.4} nse {:.4}",
                    cfg.epochs,
                    report.total,
                    report.adv_d,
                    report.nse
                );
                if let Some(dir) = &out.checkpoint_dir {
                    if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every as u64 == 0 {
                        bundle.optimizer = Some(opt.clone());
                        checkpoint(bundle, dir, &format!("epoch_{done:04}.safetensors"))?;
                    }
                }
            }
        }
        Ok(())
    })();
    bundle.optimizer = Some(opt);
    result?;
    if let Some(dir) = &out.checkpoint_dir {
        checkpoint(bundle, dir, "final.safetensors")?;
    }
    Ok(reports)
}
