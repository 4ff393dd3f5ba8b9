use noisesim::data::synth::{mix_at_snr, noise, tone_utterance, NoiseKind};
use noisesim::dsp::{
    estimate_snr, istft, reassemble, reconstruct_waveform, segment, stft, Compression, Matrix, StftConfig, Waveform,
    SEGMENT_FRAMES,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SR: u32 = 16_000;

fn relative_l2(a: &[f32], b: &[f32]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    let den: f64 = b.iter().map(|&y| (y as f64).powi(2)).sum();
    (num / den).sqrt()
}

fn speechlike(seed: u64, len: usize) -> Waveform {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let tones = tone_utterance(len, SR, &mut r);
    let n = noise(NoiseKind::Pink, len, SR, &mut r);
    mix_at_snr(&tones, &n, 10.0).unwrap()
}

#[test]
fn stft_round_trip_is_near_lossless_in_the_interior() {
    let cfg = StftConfig::default();
    for seed in 0..5 {
        let w = speechlike(seed, 20_000 + 777 * seed as usize);
        let back = istft(&stft(&w, &cfg).unwrap(), &cfg).unwrap();
        assert!(w.len() - back.len() < cfg.hop, "{} vs {}", back.len(), w.len());
        let back = back.fit_length(w.len());
        let edge = cfg.n_fft;
        let err = relative_l2(&back.samples()[edge..w.len() - edge], &w.samples()[edge..w.len() - edge]);
        assert!(err < 1e-3, "seed {seed}: relative error {err}");
    }
}

#[test]
fn compressed_magnitude_with_source_phase_reconstructs_the_source() {
    let cfg = StftConfig::default();
    let w = speechlike(9, 16_000);
    let spec = stft(&w, &cfg).unwrap();
    let comp = Compression::fit([&spec]).unwrap();
    let compressed = spec.compressed(comp).unwrap();
    let back = reconstruct_waveform(&compressed, &compressed).unwrap().fit_length(w.len());
    let err = relative_l2(&back.samples()[256..15_744], &w.samples()[256..15_744]);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn estimate_snr_is_exact_on_constructed_mixtures() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let clean = tone_utterance(24_000, SR, &mut r);
    let n = noise(NoiseKind::White, 24_000, SR, &mut r);
    for snr in [0.0, 5.0, 10.0, 15.0] {
        let mix = mix_at_snr(&clean, &n, snr).unwrap();
        let got = estimate_snr(&mix, &clean).unwrap();
        assert!((got - snr).abs() < 1e-4, "{snr} dB measured as {got}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn segmentation_is_lossless(frames in 1usize..600, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix::from_fn(129, frames, |_, _| rand::Rng::random::<f32>(&mut r));
        let spec = noisesim::dsp::Spectrogram::new(
            m.clone(), None, StftConfig::default(), Compression::Linear, SR,
        ).unwrap();
        let segs = segment(&spec, "u").unwrap();
        prop_assert_eq!(segs.len(), frames.div_ceil(SEGMENT_FRAMES));
        prop_assert!(segs.iter().all(|s| s.data().cols() == SEGMENT_FRAMES));
        prop_assert_eq!(reassemble(&segs).unwrap(), m);
    }
}
