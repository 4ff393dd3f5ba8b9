use std::fs;
use std::path::Path;
use std::process::Command;

fn run(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_noisesim"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn noisesim");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "noisesim {}\n{stdout}\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

#[test]
fn every_subcommand_runs_on_a_toy_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, &["data", "toy", "--count", "15", "--out", "toy"]);
    run(d, &["data", "build-manifest", "--root", "toy/target/noisy", "--domain", "target-noisy", "--clean-dir", "toy/target/clean", "--out", "scanned.jsonl"]);
    assert_eq!(fs::read_to_string(d.join("scanned.jsonl")).unwrap().lines().count(), 15);
    let out = run(d, &[
        "data", "sample-subset", "--source", "toy/source.jsonl", "--target", "toy/colours.jsonl", "--n", "15",
        "--per-noise-type", "3", "--seed", "3", "--test", "toy/colours.jsonl", "--out-dir", "subset",
    ]);
    assert!(out.contains("test 0 after exclusion"), "{out}");

    run(d, &[
        "finetune-encoder", "--stage1", "toy/colours.jsonl", "--stage2", "toy/target.jsonl", "--channels", "4,8",
        "--epochs1", "1", "--epochs2", "1", "--compression-manifest", "toy/source.jsonl", "--out-dir", "enc",
    ]);
    fs::write(
        d.join("gan.toml"),
        "generator_channels = 4\ndiscriminator_channels = 8\n[train]\ncheckpoint_every = 1\n[train.pcl]\npatches = 8\nnegatives = 8\nproj_dim = 8\n",
    )
    .unwrap();
    let gan = ["--encoder-dir", "enc", "--source", "toy/source.jsonl", "--target", "toy/target.jsonl", "--epochs", "1", "--lr", "1e-4", "--lambda-nse", "5", "--seed", "2"];
    let mut args = vec!["train-gan", "--config", "gan.toml", "--out", "gan"];
    args.extend(gan);
    assert!(run(d, &args).contains("step 15"));
    assert!(d.join("gan/checkpoints/epoch_0001.safetensors").is_file());
    assert_eq!(fs::read_to_string(d.join("gan/train_log.jsonl")).unwrap().lines().count(), 15);

    let sim = ["simulate", "--bundle", "gan/bundle.safetensors", "--clean-manifest", "toy/source.jsonl", "--targets", "toy/target.jsonl", "--seed", "1"];
    let mut args = sim.to_vec();
    args.extend(["--sigma", "2.0", "--out", "sim"]);
    assert!(run(d, &args).contains("15 pairs"));
    let mut args = sim.to_vec();
    args.extend(["--sigma-sweep", "0,0.5,1,2,4", "--limit", "2", "--out", "sweep"]);
    assert_eq!(run(d, &args).lines().count(), 5);

    run(d, &["adapt-se", "--backend", "desk", "--manifest", "toy/vanilla.jsonl", "--epochs", "1", "--max-samples", "4096", "--out", "vanilla.safetensors"]);
    run(d, &["adapt-se", "--backend", "desk", "--pairs", "sim/pairs.jsonl", "--init", "vanilla.safetensors", "--epochs", "2", "--out", "adapted.safetensors"]);
    // A stand-in external enhancer: identity, constant loss.
    fs::write(
        d.join("fake_se.sh"),
        "case \"$1\" in\n  enhance) cp \"$2\" \"$3\" ;;\n  train-step) echo 0.25 ;;\n  save) echo model > \"$2\" ;;\nesac\n",
    )
    .unwrap();
    let out = run(d, &[
        "adapt-se", "--backend", "external", "--command", "sh", "--command-arg", "fake_se.sh", "--pairs", "sim/pairs.jsonl",
        "--out", "ext.model",
    ]);
    assert!(out.contains("final loss 0.25"), "{out}");
    assert!(d.join("ext.model").is_file());
    run(d, &["evaluate", "--backend", "external", "--command", "sh", "--command-arg", "fake_se.sh", "--test", "toy/test.jsonl", "--out", "ext.tsv"]);

    fs::write(d.join("metrics.toml"), "[metrics.stoi]\ncommand = \"sh\"\nargs = [\"-c\", \"echo 0.5\"]\n").unwrap();
    let out = run(d, &[
        "evaluate", "--backend", "desk", "--model", "adapted.safetensors", "--test", "toy/test.jsonl", "--metrics", "si_snr,stoi,pesq",
        "--buckets", "2.5,7.5,12.5,17.5", "--registry", "metrics.toml", "--json", "report.json",
    ]);
    assert!(out.starts_with("bucket_db\t"), "{out}");
    assert!(out.contains("no provider for: pesq"), "{out}");

    run(d, &["analyze", "snr-hist", "--manifest", "test=toy/test.jsonl", "--manifest", "toy/vanilla.jsonl", "--bins", "5", "--out", "hist"]);
    assert!(d.join("hist.svg").is_file() && d.join("hist.tsv").is_file());
    let out = run(d, &["analyze", "embed-proj", "--encoder-dir", "enc", "--manifest", "toy/colours.jsonl", "--out", "proj.tsv"]);
    assert!(out.contains("silhouette"));

    let mut args = vec!["ablate", "--train-config", "gan.toml", "--config", "no_nse", "--out", "abl"];
    args.extend(gan);
    let out = run(d, &args);
    assert!(out.contains("no_nse\t"), "{out}");
}
