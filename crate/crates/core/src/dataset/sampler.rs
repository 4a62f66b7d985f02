//! Deterministic weighted interleaving of per-embodiment pair sources.
//!
//! Each schedule period of `P` draws contains exactly `c_tag` draws per tag,
//! where the counts realize the weight ratio by largest-remainder
//! apportionment. Within a period the tags are spread out smoothly. Within a
//! tag, pairs are visited in a seeded permutation that is reshuffled every
//! epoch.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::DatasetError;

/// Period used when weights are not all integers.
const FRACTIONAL_PERIOD: usize = 1000;

/// One scheduled draw: pair `index` of source `tag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairRef {
    /// Position in [`MixedSampler::tags`].
    pub tag: usize,
    pub index: usize,
}

#[derive(Debug, Clone)]
struct Source {
    name: String,
    size: usize,
    epoch: u64,
    offset: usize,
    order: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MixedSampler {
    seed: u64,
    sources: Vec<Source>,
    counts: Vec<usize>,
    schedule: Vec<u32>,
    position: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Per-tag draws in one period of length `period`.
fn apportion(weights: &[f64], period: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * period as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = period - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Smooth interleave: slot `s` goes to the tag furthest behind its ideal
/// share `c * (s + 1) / P`; ties go to the earlier tag.
fn interleave(counts: &[usize]) -> Vec<u32> {
    let period: usize = counts.iter().sum();
    let mut given = vec![0usize; counts.len()];
    let mut out = Vec::with_capacity(period);
    for s in 0..period {
        let mut best = 0;
        let mut best_lag = i128::MIN;
        for (i, &c) in counts.iter().enumerate() {
            let lag = (c * (s + 1)) as i128 - (period * given[i]) as i128;
            if c > given[i] && lag > best_lag {
                best = i;
                best_lag = lag;
            }
        }
        given[best] += 1;
        out.push(best as u32);
    }
    out
}

fn permutation(seed: u64, tag: &str, epoch: u64, size: usize) -> Vec<usize> {
    let key: [u8; 32] = Sha256::new()
        .chain_update(b"mixed-sampler")
        .chain_update(seed.to_le_bytes())
        .chain_update((tag.len() as u64).to_le_bytes())
        .chain_update(tag.as_bytes())
        .chain_update(epoch.to_le_bytes())
        .finalize()
        .into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(&mut rng);
    order
}

impl MixedSampler {
    /// `sizes` gives the number of pairs per tag, `weights` the mixing ratio.
    /// Integer weights are realized exactly over a period of
    /// `sum(weights) / gcd(weights)` draws; other weights over 1000 draws.
    pub fn new(
        sizes: &BTreeMap<String, usize>,
        weights: &BTreeMap<String, f64>,
        seed: u64,
    ) -> Result<Self, DatasetError> {
        Self::with_period(sizes, weights, seed, None)
    }

    /// Weights proportional to source size.
    pub fn proportional(sizes: &BTreeMap<String, usize>, seed: u64) -> Result<Self, DatasetError> {
        let weights = sizes.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
        Self::new(sizes, &weights, seed)
    }

    pub fn with_period(
        sizes: &BTreeMap<String, usize>,
        weights: &BTreeMap<String, f64>,
        seed: u64,
        period: Option<usize>,
    ) -> Result<Self, DatasetError> {
        if sizes.is_empty() {
            return Err(DatasetError::InvalidArgument("no pair sources".into()));
        }
        let mut w = Vec::with_capacity(sizes.len());
        for (tag, &size) in sizes {
            if size == 0 {
                return Err(DatasetError::EmptySource(tag.clone()));
            }
            let weight = *weights
                .get(tag)
                .ok_or_else(|| DatasetError::InvalidArgument(format!("no weight for {tag:?}")))?;
            if !(weight.is_finite() && weight > 0.0) {
                return Err(DatasetError::InvalidArgument(format!(
                    "weight for {tag:?} must be positive, got {weight}"
                )));
            }
            w.push(weight);
        }
        if let Some(extra) = weights.keys().find(|k| !sizes.contains_key(*k)) {
            return Err(DatasetError::EmptySource(extra.clone()));
        }
        let integral = w.iter().all(|x| x.fract() == 0.0 && *x <= 1e9);
        let counts = match period {
            Some(0) => return Err(DatasetError::InvalidArgument("period must be positive".into())),
            Some(p) => apportion(&w, p),
            None if integral => {
                let ints: Vec<u64> = w.iter().map(|x| *x as u64).collect();
                let g = ints.iter().copied().fold(0, gcd);
                ints.iter().map(|x| (x / g) as usize).collect()
            }
            None => apportion(&w, FRACTIONAL_PERIOD),
        };
        let sources = sizes
            .iter()
            .map(|(name, &size)| Source {
                name: name.clone(),
                size,
                epoch: 0,
                offset: 0,
                order: permutation(seed, name, 0, size),
            })
            .collect();
        Ok(Self {
            seed,
            sources,
            schedule: interleave(&counts),
            counts,
            position: 0,
        })
    }

    pub fn tags(&self) -> Vec<&str> {
        self.sources.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn tag_name(&self, tag: usize) -> &str {
        &self.sources[tag].name
    }

    /// Draws per tag in one schedule period.
    pub fn period_counts(&self) -> BTreeMap<String, usize> {
        self.sources
            .iter()
            .zip(&self.counts)
            .map(|(s, c)| (s.name.clone(), *c))
            .collect()
    }

    pub fn period(&self) -> usize {
        self.schedule.len()
    }

    /// Number of draws taken so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Stable identifier `"<tag>:<index>"` of a draw.
    pub fn pair_id(&self, r: &PairRef) -> String {
        format!("{}:{}", self.sources[r.tag].name, r.index)
    }

    pub fn next_pair(&mut self) -> PairRef {
        let slot = (self.position % self.schedule.len() as u64) as usize;
        let tag = self.schedule[slot] as usize;
        let seed = self.seed;
        let src = &mut self.sources[tag];
        let index = src.order[src.offset];
        src.offset += 1;
        if src.offset == src.size {
            src.epoch += 1;
            src.offset = 0;
            src.order = permutation(seed, &src.name, src.epoch, src.size);
        }
        self.position += 1;
        PairRef { tag, index }
    }

    /// Repositions the stream so the next draw is draw number `position`.
    pub fn seek(&mut self, position: u64) {
        let period = self.schedule.len() as u64;
        let full = position / period;
        let partial = (position % period) as usize;
        let mut taken: Vec<u64> = self.counts.iter().map(|&c| c as u64 * full).collect();
        for &t in &self.schedule[..partial] {
            taken[t as usize] += 1;
        }
        let seed = self.seed;
        for (src, d) in self.sources.iter_mut().zip(taken) {
            let epoch = d / src.size as u64;
            if epoch != src.epoch || src.order.len() != src.size {
                src.order = permutation(seed, &src.name, epoch, src.size);
            }
            src.epoch = epoch;
            src.offset = (d % src.size as u64) as usize;
        }
        self.position = position;
    }

    /// SHA-256 (hex) of the first `n` pair ids joined by newlines,
    /// independent of the current position.
    pub fn digest(&self, n: usize) -> String {
        let mut s = self.clone();
        s.seek(0);
        let mut h = Sha256::new();
        for i in 0..n {
            let r = s.next_pair();
            if i > 0 {
                h.update(b"\n");
            }
            h.update(s.pair_id(&r).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

impl Iterator for MixedSampler {
    type Item = PairRef;

    fn next(&mut self) -> Option<PairRef> {
        Some(self.next_pair())
    }
}
