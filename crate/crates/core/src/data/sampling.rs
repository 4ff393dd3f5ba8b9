use std::collections::HashSet;

use rand::seq::index;

use super::{Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::rng;

fn choose(entries: &[&ManifestEntry], n: usize, group: &str, seed: u64) -> Result<Vec<ManifestEntry>> {
    if entries.len() < n {
        return Err(Error::InsufficientUtterances {
            group: group.to_string(),
            needed: n,
            available: entries.len(),
        });
    }
    let mut r = rng::stream(seed, &[rng::tag(group)]);
    let mut picked: Vec<usize> = index::sample(&mut r, entries.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| entries[i].clone()).collect())
}

/// Draws `n` source utterances uniformly and `n` target utterances, either
/// uniformly or `per_noise_type` from each noise type (then `n` must equal
/// `per_noise_type` times the number of types).
pub fn sample_training_subset(
    source: &Manifest,
    target: &Manifest,
    n: usize,
    per_noise_type: Option<usize>,
    seed: u64,
) -> Result<(Manifest, Manifest)> {
    let src: Vec<&ManifestEntry> = source.entries().iter().collect();
    let source_subset = choose(&src, n, "source", seed)?;
    let target_subset = match per_noise_type {
        None => {
            let tgt: Vec<&ManifestEntry> = target.entries().iter().collect();
            choose(&tgt, n, "target", seed)?
        }
        Some(k) => {
            if let Some(e) = target.entries().iter().find(|e| e.noise_type.is_none()) {
                return Err(Error::Config(format!(
                    "stratified sampling needs noise-type labels; `{}` has none",
                    e.utterance_id
                )));
            }
            let types = target.noise_types();
            if k * types.len() != n {
                return Err(Error::Config(format!(
                    "{k} per noise type over {} types gives {}, not {n}",
                    types.len(),
                    k * types.len()
                )));
            }
            let mut out = Vec::with_capacity(n);
            for t in &types {
                let group: Vec<&ManifestEntry> = target
                    .entries()
                    .iter()
                    .filter(|e| e.noise_type.as_deref() == Some(t.as_str()))
                    .collect();
                out.extend(choose(&group, k, t, seed)?);
            }
            out
        }
    };
    Ok((Manifest::new(source_subset)?, Manifest::new(target_subset)?))
}

/// Drops every test entry whose id was used for training.
pub fn exclude_from_test(test: &Manifest, used: &Manifest) -> Manifest {
    let used: HashSet<&str> = used.ids().collect();
    test.filter(|e| !used.contains(e.utterance_id.as_str()))
}
