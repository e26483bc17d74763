//! Pair enumeration: splits, compatibility filters and oversampling.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::GenerationConfig;
use crate::corrnet::{Manifest, ShapeRecord, Split};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, Role};

/// One matching problem to generate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpec {
    pub split: Split,
    /// Position within the split; drives the instance seeds.
    pub index: usize,
    pub id: String,
    pub source: String,
    pub target: String,
    /// Dataset of the quota that drew the pair (the source's dataset).
    pub dataset: String,
    /// 0 for the first draw, then one per oversampling repeat.
    pub repeat: usize,
}

impl PairSpec {
    /// Seed-stream index, unique across splits.
    pub fn stream(&self) -> u64 {
        let tag = match self.split {
            Split::Train => 0u64,
            Split::Val => 1,
            Split::Test => 2,
        };
        (tag << 40) | self.index as u64
    }

    pub fn seed(&self, global_seed: u64, role: Role) -> u64 {
        derive_seed(global_seed, self.stream(), role)
    }
}

fn instance_id(split: Split, index: usize) -> String {
    format!("{split}-{index:06}")
}

/// Draws `count` distinct ordered pairs `(s, t)` with `s` in `sources`,
/// `t` among `targets[s]`.
fn sample_pairs(sources: &[usize], targets: &[Vec<usize>], count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let total: usize = targets.iter().map(Vec::len).sum();
    if count * 2 >= total {
        // Dense regime: shuffle the full candidate list.
        let mut all: Vec<(usize, usize)> = sources
            .iter()
            .zip(targets)
            .flat_map(|(&s, ts)| ts.iter().map(move |&t| (s, t)))
            .collect();
        let picked = rand::seq::index::sample(rng, all.len(), count.min(all.len()));
        let mut keep: Vec<usize> = picked.into_vec();
        keep.sort_unstable();
        return keep.into_iter().map(|i| std::mem::take(&mut all[i])).collect();
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let si = rng.random_range(0..sources.len());
        if targets[si].is_empty() {
            continue;
        }
        let t = targets[si][rng.random_range(0..targets[si].len())];
        if seen.insert((sources[si], t)) {
            out.push((sources[si], t));
        }
    }
    out
}

/// Deterministic pair list for the configured split(s). Shapes of disabled
/// datasets or kinds outside the combination never appear. In the train
/// split each dataset's pairs repeat `ceil(max / count)` times so every
/// dataset contributes comparably.
pub fn enumerate_pairs(manifest: &Manifest, config: &GenerationConfig) -> Result<Vec<PairSpec>> {
    let shapes = manifest.shapes();
    let admitted = |s: &ShapeRecord| config.dataset_enabled(&s.dataset) && config.combinations.admits(s.kind);
    let mut out = Vec::new();
    for split in Split::ALL {
        if !config.split.includes(split) {
            continue;
        }
        let pool: Vec<usize> = (0..shapes.len())
            .filter(|&i| admitted(&shapes[i]) && manifest.split_of(&shapes[i].dataset, &shapes[i].category) == Some(split))
            .collect();
        let mut drawn: Vec<(String, Vec<(usize, usize)>)> = Vec::new();
        for (qi, q) in manifest.quotas().iter().enumerate() {
            if q.split != split || !config.dataset_enabled(&q.dataset) {
                continue;
            }
            let sources: Vec<usize> = pool.iter().copied().filter(|&i| shapes[i].dataset == q.dataset).collect();
            let targets: Vec<Vec<usize>> = sources
                .iter()
                .map(|&s| {
                    pool.iter()
                        .copied()
                        .filter(|&t| t != s && config.combinations.pairs(shapes[s].kind, shapes[t].kind))
                        .collect()
                })
                .collect();
            let available: usize = targets.iter().map(Vec::len).sum();
            if available < q.count {
                log::warn!(
                    "{split} quota for {} asks {} pairs but only {available} are admissible",
                    q.dataset,
                    q.count
                );
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(manifest.seed, qi as u64, Role::Pair));
            let pairs = sample_pairs(&sources, &targets, q.count.min(available), &mut rng);
            if !pairs.is_empty() {
                drawn.push((q.dataset.clone(), pairs));
            }
        }
        let factors: Vec<usize> = if split == Split::Train {
            let mut per_dataset: BTreeMap<&str, usize> = BTreeMap::new();
            for (d, p) in &drawn {
                *per_dataset.entry(d).or_default() += p.len();
            }
            let max = per_dataset.values().copied().max().unwrap_or(0);
            drawn.iter().map(|(d, _)| max.div_ceil(per_dataset[d.as_str()])).collect()
        } else {
            vec![1; drawn.len()]
        };
        let mut index = 0;
        for ((dataset, pairs), factor) in drawn.iter().zip(factors) {
            for repeat in 0..factor {
                for &(s, t) in pairs {
                    out.push(PairSpec {
                        split,
                        index,
                        id: instance_id(split, index),
                        source: shapes[s].id.clone(),
                        target: shapes[t].id.clone(),
                        dataset: dataset.clone(),
                        repeat,
                    });
                    index += 1;
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no pairs for split {} with the enabled datasets and combination {}",
            config.split, config.combinations
        )));
    }
    Ok(out)
}

/// `(dataset, category)` sets touched by the given split, source or target.
pub fn categories_in(manifest: &Manifest, pairs: &[PairSpec], split: Split) -> HashSet<(String, String)> {
    pairs
        .iter()
        .filter(|p| p.split == split)
        .flat_map(|p| [&p.source, &p.target])
        .filter_map(|id| manifest.shape(id))
        .map(|s| (s.dataset.clone(), s.category.clone()))
        .collect()
}
