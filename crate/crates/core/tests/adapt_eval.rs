mod common;

use std::cell::Cell;
use std::path::Path;

use common::{randomize, small_train_config, toy};
use noisesim::adapt_eval::{
    bucket_of, embedding_projection, evaluate, finetune_se_waveforms, generated_segments, histogram, manifest_snrs,
    oracle_mixtures, pool_segments, si_snr, silhouette, AblationVariant, Bins, CausalUNet, MetricRegistry,
    MetricReport, Pca, SeBackend, SeFinetuneConfig, UNetSpec, UtteranceScore, DEFAULT_BUCKETS, SI_SNR_CEILING_DB,
};
use noisesim::data::synth::{mix_at_snr, noise, tone_utterance, write_toy_set, NoiseKind, ToySet};
use noisesim::dsp::Waveform;
use noisesim::models::NoiseEmbedding;
use noisesim::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SR: u32 = 16_000;

fn seeded(s: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(s)
}

/// Returns its input and counts updates.
#[derive(Default)]
struct Passthrough {
    steps: Cell<usize>,
}

impl SeBackend for Passthrough {
    fn name(&self) -> &str {
        "passthrough"
    }
    fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        Ok(noisy.clone())
    }
    fn train_step(&mut self, _: &Waveform, _: &Waveform) -> Result<f64> {
        self.steps.set(self.steps.get() + 1);
        Ok(1.0)
    }
    fn causal(&self) -> bool {
        true
    }
    fn save(&self, _: &Path) -> Result<()> {
        Ok(())
    }
    fn load(&mut self, _: &Path) -> Result<()> {
        Ok(())
    }
}

#[test]
fn unet_output_depends_only_on_past_input() {
    let net = CausalUNet::new(UNetSpec::default()).unwrap();
    let mut r = seeded(1);
    let x: Vec<f32> = (0..3000).map(|_| r.random_range(-0.5..0.5)).collect();
    let full = net.enhance(&Waveform::new(x.clone(), SR).unwrap()).unwrap();
    assert_eq!(full.len(), x.len());
    for cut in [1, 255, 256, 1000, 2049] {
        let part = net.enhance(&Waveform::new(x[..cut].to_vec(), SR).unwrap()).unwrap();
        assert_eq!(part.len(), cut);
        let worst = part
            .samples()
            .iter()
            .zip(full.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 1e-5, "prefix {cut}: {worst}");
    }
    assert!(net.causal());
    assert_eq!(net.lookahead(), 0);
}

#[test]
fn unet_learns_and_round_trips_through_disk() {
    let mut r = seeded(2);
    let clean = tone_utterance(4096, SR, &mut r);
    let noisy = mix_at_snr(&clean, &noise(NoiseKind::White, 4096, SR, &mut r), 5.0).unwrap();
    let mut net = CausalUNet::new(UNetSpec::default()).unwrap();
    let first = net.train_step(&noisy, &clean).unwrap();
    let mut last = first;
    for _ in 0..60 {
        last = net.train_step(&noisy, &clean).unwrap();
    }
    assert!(last < first * 0.5, "{first} -> {last}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("se.safetensors");
    net.save(&path).unwrap();
    let mut other = CausalUNet::new(UNetSpec { seed: 9, ..UNetSpec::default() }).unwrap();
    other.load(&path).unwrap();
    assert_eq!(net.enhance(&noisy).unwrap(), other.enhance(&noisy).unwrap());
}

#[test]
fn si_snr_reference_values() {
    let mut r = seeded(3);
    let clean = tone_utterance(32_000, SR, &mut r);
    let n = noise(NoiseKind::White, 32_000, SR, &mut r);
    let noisy = mix_at_snr(&clean, &n, 10.0).unwrap();
    let v = si_snr(noisy.samples(), clean.samples()).unwrap();
    assert!((v - 10.0).abs() < 0.1, "{v}");
    assert_eq!(si_snr(clean.samples(), clean.samples()).unwrap(), SI_SNR_CEILING_DB);
    let scaled: Vec<f32> = noisy.samples().iter().map(|v| v * 3.7).collect();
    assert!((si_snr(&scaled, clean.samples()).unwrap() - v).abs() < 1e-6);
    assert!(matches!(si_snr(&scaled[1..], clean.samples()), Err(Error::Shape(_))));
}

#[test]
fn buckets_partition_the_scores() {
    assert_eq!(bucket_of(0.0, &DEFAULT_BUCKETS), Some(2.5));
    assert_eq!(bucket_of(5.0, &DEFAULT_BUCKETS), Some(7.5));
    assert_eq!(bucket_of(30.0, &DEFAULT_BUCKETS), Some(17.5));
    assert_eq!(bucket_of(1.0, &[]), None);
    let mut r = seeded(4);
    let scores: Vec<UtteranceScore> = (0..50)
        .map(|i| {
            let snr = r.random_range(-5.0..25.0);
            UtteranceScore {
                utterance_id: format!("u{i:02}"),
                snr_db: snr,
                bucket: bucket_of(snr, &DEFAULT_BUCKETS).unwrap(),
                metrics: [("si_snr".to_string(), snr + 1.0)].into(),
            }
        })
        .collect();
    let report = MetricReport::from_scores(scores.clone(), &DEFAULT_BUCKETS);
    assert_eq!(report.buckets.iter().map(|b| b.count).sum::<usize>(), 50);
    for b in &report.buckets {
        let members: Vec<f64> = scores.iter().filter(|s| s.bucket == b.centre_db).map(|s| s.snr_db + 1.0).collect();
        if let Some(m) = b.means.get("si_snr") {
            assert!((m - members.iter().sum::<f64>() / members.len() as f64).abs() < 1e-9);
        }
    }
    let tsv = report.to_tsv();
    assert_eq!(tsv.lines().count(), 1 + DEFAULT_BUCKETS.len() + 1);
}

#[test]
fn evaluation_scores_a_manifest_and_reports_missing_providers() {
    let dir = tempfile::tempdir().unwrap();
    let set = ToySet::noisy("t", 8, &[NoiseKind::Pink]).with_snr_range(0.0, 20.0).with_duration(0.3, 0.4).generate(5);
    let manifest = write_toy_set(dir.path(), &set).unwrap();
    let config = r#"
        [metrics.constant]
        command = "sh"
        args = ["-c", "echo 1.5"]

        [metrics.absent]
        command = "/nonexistent/scorer"
    "#;
    let registry = MetricRegistry::from_toml(config, dir.path().join("scratch")).unwrap();
    assert_eq!(registry.names(), vec!["constant", "si_snr"]);
    let report = evaluate(
        &Passthrough::default(),
        &manifest,
        &registry,
        &["si_snr", "constant", "absent"],
        &DEFAULT_BUCKETS,
    )
    .unwrap();
    assert_eq!(report.utterances.len(), 8);
    assert_eq!(report.missing_metrics, vec!["absent".to_string()]);
    assert_eq!(report.aggregate["constant"], 1.5);
    for u in &report.utterances {
        // Passthrough output is the mixture, so SI-SNR tracks the label.
        assert!((u.metrics["si_snr"] - u.snr_db).abs() < 0.5, "{u:?}");
    }
}

#[test]
fn histograms_keep_empty_bins_and_show_both_modes() {
    let mut r = seeded(6);
    let values: Vec<f64> = (0..400)
        .map(|i| if i % 2 == 0 { 0.0 } else { 15.0 } + r.random_range(-1.0..1.0))
        .collect();
    let h = histogram(&[("mix".into(), values)], Bins::Fixed { lo: -5.0, width: 2.5, count: 10 }).unwrap();
    let f = &h.series[0].fractions;
    assert_eq!(f.len(), 10);
    assert_eq!(h.edges.len(), 11);
    assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let low: f64 = f[1..=2].iter().sum();
    let high: f64 = f[7..=8].iter().sum();
    assert!((low - 0.5).abs() < 1e-12 && (high - 0.5).abs() < 1e-12, "{f:?}");
    assert_eq!(f[4], 0.0);

    let single = histogram(&[("one".into(), vec![7.0])], Bins::Auto(20)).unwrap();
    assert_eq!(single.series[0].fractions, vec![1.0]);

    let dir = tempfile::tempdir().unwrap();
    h.write(dir.path().join("snr")).unwrap();
    assert!(dir.path().join("snr.tsv").is_file());
    assert!(std::fs::read_to_string(dir.path().join("snr.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn manifest_snrs_prefer_labels() {
    let dir = tempfile::tempdir().unwrap();
    let set = ToySet::noisy("t", 4, &[NoiseKind::White]).with_duration(0.2, 0.3).generate(8);
    let m = write_toy_set(dir.path(), &set).unwrap();
    let snrs = manifest_snrs(&m).unwrap();
    for (s, e) in snrs.iter().zip(m.entries()) {
        assert_eq!(*s, e.snr_db.unwrap());
    }
}

fn gaussian_clusters(r: &mut ChaCha8Rng, k: usize, per: usize, spacing: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for c in 0..k {
        for _ in 0..per {
            let p: Vec<f64> = (0..6)
                .map(|d| {
                    let n: f64 = StandardNormal.sample(r);
                    n + if d == c % 6 { spacing } else { 0.0 }
                })
                .collect();
            points.push(p);
            labels.push(c);
        }
    }
    (points, labels)
}

#[test]
fn silhouette_separates_distant_clusters_and_not_random_labels() {
    let mut r = seeded(7);
    let (points, labels) = gaussian_clusters(&mut r, 3, 20, 20.0);
    assert!(silhouette(&points, &labels).unwrap() > 0.8);

    let (points, mut labels) = gaussian_clusters(&mut r, 3, 30, 0.0);
    let mut mean = 0.0;
    for _ in 0..20 {
        labels.shuffle(&mut r);
        mean += silhouette(&points, &labels).unwrap() / 20.0;
    }
    assert!(mean.abs() < 0.1, "{mean}");

    assert!(matches!(silhouette(&points, &vec![0; points.len()]), Err(Error::SilhouetteUndefined(_))));
    let same = vec![vec![1.0, 2.0]; 6];
    assert!(matches!(silhouette(&same, &[0, 0, 0, 1, 1, 1]), Err(Error::SilhouetteUndefined(_))));
}

#[test]
fn projection_keeps_labels_and_checks_class_sizes() {
    let mut r = seeded(8);
    let (points, labels) = gaussian_clusters(&mut r, 2, 5, 8.0);
    let embs: Vec<NoiseEmbedding> = points
        .iter()
        .map(|p| NoiseEmbedding::new(p.iter().map(|&v| v as f32).collect(), "x").unwrap())
        .collect();
    let names: Vec<String> = labels.iter().map(|l| format!("c{l}")).collect();
    let proj = embedding_projection(&embs, &names, &Pca).unwrap();
    assert_eq!(proj.coords.len(), 10);
    assert!(proj.silhouette > 0.5);
    assert_eq!(proj.to_tsv().lines().count(), 11);
    assert!(embedding_projection(&embs[..4], &names[..4], &Pca).is_err());
}

#[test]
fn fine_tuning_runs_one_step_per_pair_per_epoch() {
    let mut r = seeded(9);
    let pairs: Vec<(Waveform, Waveform)> = (0..5)
        .map(|_| {
            let c = tone_utterance(2000, SR, &mut r);
            (c.clone(), c)
        })
        .collect();
    let mut backend = Passthrough::default();
    let report = finetune_se_waveforms(&mut backend, &pairs, &SeFinetuneConfig::default()).unwrap();
    assert_eq!(backend.steps.get(), 10);
    assert_eq!(report.step_losses.len(), 10);
    assert_eq!(report.epoch_losses.len(), 2);
    assert!(matches!(
        finetune_se_waveforms(&mut backend, &[], &SeFinetuneConfig::default()),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn oracle_mixtures_hit_the_requested_snrs() {
    let mut r = seeded(10);
    let clean: Vec<Waveform> = (0..4).map(|_| tone_utterance(3000, SR, &mut r)).collect();
    let noises = vec![noise(NoiseKind::Pink, 1000, SR, &mut r)];
    let mixed = oracle_mixtures(&clean, &noises, &[0.0, 10.0], 3).unwrap();
    for (i, (m, c)) in mixed.iter().enumerate() {
        let snr = noisesim::dsp::estimate_snr(m, c).unwrap();
        assert!((snr - [0.0, 10.0][i % 2]).abs() < 1e-3);
    }
    assert!(oracle_mixtures(&clean, &[], &[0.0], 0).is_err());
}

#[test]
fn ablation_names_parse_and_unknown_names_fail() {
    for v in AblationVariant::ALL {
        assert_eq!(v.name().parse::<AblationVariant>().unwrap(), v);
    }
    assert!(matches!("no_pcl".parse::<AblationVariant>(), Err(Error::Config(_))));
    let base = small_train_config();
    assert_eq!(AblationVariant::NoNse.apply(base).lambda_nse, 0.0);
    assert!(!AblationVariant::NoEmbeddings.apply(base).use_embeddings);
    assert_eq!(AblationVariant::Full.apply(base), base);
}

#[test]
fn without_embeddings_the_generator_sees_the_learned_constant_modulation() {
    let mut t = toy(small_train_config());
    randomize(t.bundle.generator.params_mut(), &mut seeded(11), 0.1);
    t.bundle.train = AblationVariant::NoEmbeddings.apply(t.bundle.train);
    let zeros = vec![0.0f32; t.bundle.embed_dim()];
    let clean = pool_segments(&t.clean_pool).unwrap();
    let got = generated_segments(&t.bundle, &t.clean_pool, &t.noisy_pool).unwrap();
    // The noisy pool is ignored: swapping it for the clean one changes nothing.
    let swapped = generated_segments(&t.bundle, &t.clean_pool, &t.clean_pool).unwrap();
    assert_eq!(got, swapped);
    for (g, c) in got.iter().zip(&clean) {
        let mut expected = t.bundle.generator.generate(c.data(), Some(&zeros)).unwrap();
        expected.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        assert_eq!(g.data(), &expected);
    }
}
