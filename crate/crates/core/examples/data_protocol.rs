//! Manifests and the unpaired training-subset protocol on a written toy
//! corpus: scan directories, stratify the target subset by noise type and
//! drop it from the test set.

use noisesim::data::synth::{write_toy_set, NoiseKind, ToySet};
use noisesim::data::{build_manifest, exclude_from_test, sample_training_subset, Domain, DomainRules, Manifest};

fn main() -> noisesim::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let root = dir.path();
    write_toy_set(root.join("src"), &ToySet::clean("spk", 60).with_duration(0.3, 0.5).generate(1))?;
    let test_set = ToySet::noisy("rec", 100, &NoiseKind::ALL).with_duration(0.3, 0.5).generate(2);
    let written = write_toy_set(root.join("test"), &test_set)?;

    // Scanning recovers file layout and clean pairing; labels come from
    // whatever the file names encode, so here they are copied over.
    let source = build_manifest(root.join("src/clean"), &DomainRules::new(Domain::SourceClean))?;
    let rules = DomainRules::new(Domain::TargetNoisy).with_clean_dir(root.join("test/clean"));
    let scanned = build_manifest(root.join("test/noisy"), &rules)?;
    let test = Manifest::new(
        scanned
            .entries()
            .iter()
            .map(|e| {
                let w = written.get(&e.utterance_id).expect("written entry");
                let mut e = e.clone();
                e.noise_type = w.noise_type.clone();
                e.snr_db = w.snr_db;
                e
            })
            .collect(),
    )?;
    println!("source {} utterances, test {} across {:?}", source.len(), test.len(), test.noise_types());

    let (src, tgt) = sample_training_subset(&source, &test, 20, Some(4), 7)?;
    let remaining = exclude_from_test(&test, &tgt);
    println!("subset: {} clean + {} noisy; {} test utterances remain", src.len(), tgt.len(), remaining.len());
    for kind in NoiseKind::ALL {
        let n = tgt.entries().iter().filter(|e| e.noise_type.as_deref() == Some(kind.name())).count();
        println!("  {kind}: {n}");
    }
    tgt.save(root.join("target_subset.jsonl"))?;
    Ok(())
}
