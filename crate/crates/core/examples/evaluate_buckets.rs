//! SNR-bucketed evaluation and corpus SNR histograms. The enhancer here is
//! an untrained desk model, so the numbers only illustrate the report shape.

use noisesim::adapt_eval::{evaluate, histogram, manifest_snrs, Bins, CausalUNet, MetricRegistry, UNetSpec, DEFAULT_BUCKETS};
use noisesim::data::synth::{write_toy_set, NoiseKind, ToySet};

fn main() -> noisesim::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let test = write_toy_set(
        dir.path().join("test"),
        &ToySet::noisy("t", 24, &[NoiseKind::Pink, NoiseKind::Hum]).with_snr_range(0.0, 20.0).generate(3),
    )?;
    let quiet = write_toy_set(
        dir.path().join("quiet"),
        &ToySet::noisy("q", 24, &[NoiseKind::Pink]).with_snr_range(10.0, 20.0).generate(4),
    )?;

    // A provider for any further metric is declared in TOML; this one is
    // only a constant to keep the example self-contained.
    let registry = MetricRegistry::from_toml(
        "[metrics.constant]\ncommand = \"sh\"\nargs = [\"-c\", \"echo 1.0\"]\n",
        dir.path().join("scratch"),
    )?;
    let se = CausalUNet::new(UNetSpec::default())?;
    let report = evaluate(&se, &test, &registry, &["si_snr", "constant", "pesq"], &DEFAULT_BUCKETS)?;
    print!("{}", report.to_tsv());
    println!("unavailable: {:?}", report.missing_metrics);

    let h = histogram(
        &[("test".into(), manifest_snrs(&test)?), ("quiet".into(), manifest_snrs(&quiet)?)],
        Bins::Fixed { lo: 0.0, width: 2.5, count: 8 },
    )?;
    print!("{}", h.to_tsv());
    Ok(())
}
