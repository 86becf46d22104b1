//! SimHash near-duplicate detection between a corpus and reference samples.
//!
//! Texts are fingerprinted as 64-bit SimHash signatures over lowercased,
//! whitespace-tokenized word unigrams weighted by occurrence count.
//! Similarity is `1 - hamming/64`; corpus items whose similarity to any
//! reference exceeds the threshold (strictly) are removed.

use serde::Serialize;
use std::collections::HashMap;

/// Seed folded into the per-feature hash. Changing it changes every
/// signature; it is a fixed constant so signatures are reproducible.
pub const SIMHASH_FEATURE_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a keyed by [`SIMHASH_FEATURE_SEED`].
fn feature_hash(token: &str) -> u64 {
    let mut h = FNV_OFFSET ^ SIMHASH_FEATURE_SEED;
    for byte in token.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// A 64-bit SimHash signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimHashSig(pub u64);

impl SimHashSig {
    pub fn hamming(self, other: SimHashSig) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

/// Fingerprint a text. Features are lowercased whitespace-separated word
/// unigrams weighted by count; each feature hashes to 64 bits, contributing
/// +count to the per-bit sum where the bit is set and -count where it is
/// clear. A signature bit is 1 iff its sum is strictly positive, so the
/// empty text maps to the all-zero signature.
pub fn simhash(text: &str) -> SimHashSig {
    let mut counts: HashMap<String, i64> = HashMap::new();
    for token in text.split_whitespace() {
        *counts.entry(token.to_lowercase()).or_insert(0) += 1;
    }
    let mut sums = [0i64; 64];
    for (token, count) in counts {
        let bits = feature_hash(&token);
        for (i, sum) in sums.iter_mut().enumerate() {
            if (bits >> i) & 1 == 1 {
                *sum += count;
            } else {
                *sum -= count;
            }
        }
    }
    let mut sig = 0u64;
    for (i, sum) in sums.iter().enumerate() {
        if *sum > 0 {
            sig |= 1 << i;
        }
    }
    SimHashSig(sig)
}

/// `1 - hamming/64`, in [0, 1].
pub fn similarity(a: SimHashSig, b: SimHashSig) -> f64 {
    1.0 - f64::from(a.hamming(b)) / 64.0
}

/// One removed corpus item: the reference it collided with and their
/// similarity.
#[derive(Debug, Clone, Serialize)]
pub struct Removed {
    pub id: String,
    pub matched_ref: usize,
    pub similarity: f64,
}

/// Outcome of deduplicating a corpus against reference samples.
#[derive(Debug, Clone, Serialize)]
pub struct DedupOutcome {
    pub retained: Vec<String>,
    pub removed: Vec<Removed>,
    pub threshold: f64,
}

/// Largest Hamming distance still counting as a near-duplicate under the
/// strict `similarity > threshold` rule, or None when nothing can qualify.
fn max_duplicate_distance(threshold: f64) -> Option<u32> {
    (0..=64u32)
        .filter(|d| 1.0 - f64::from(*d) / 64.0 > threshold)
        .max()
}

/// Four 16-bit bands per signature. Two signatures within Hamming distance 3
/// must agree exactly on at least one band, so an exact-band index finds
/// every candidate pair; larger distances can corrupt all four bands and
/// fall back to a full scan.
struct BandIndex {
    bands: [HashMap<u16, Vec<usize>>; 4],
}

impl BandIndex {
    /// Distance above which band lookup may miss pairs.
    const COMPLETE_THROUGH: u32 = 3;

    fn build(refs: &[SimHashSig]) -> Self {
        let mut bands: [HashMap<u16, Vec<usize>>; 4] = Default::default();
        for (idx, sig) in refs.iter().enumerate() {
            for (b, band) in bands.iter_mut().enumerate() {
                let key = (sig.0 >> (16 * b)) as u16;
                band.entry(key).or_default().push(idx);
            }
        }
        Self { bands }
    }

    fn candidates(&self, sig: SimHashSig, out: &mut Vec<usize>) {
        out.clear();
        for (b, band) in self.bands.iter().enumerate() {
            let key = (sig.0 >> (16 * b)) as u16;
            if let Some(idxs) = band.get(&key) {
                out.extend_from_slice(idxs);
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// Remove every corpus item whose similarity to any reference strictly
/// exceeds `threshold`. Candidate pairs come from the band index when its
/// completeness guarantee covers the allowed distance, otherwise from a full
/// scan; every candidate is verified with the exact Hamming distance, so the
/// result matches the brute-force all-pairs oracle at any threshold.
pub fn dedup_signatures(
    corpus: &[(String, SimHashSig)],
    refs: &[SimHashSig],
    threshold: f64,
) -> DedupOutcome {
    let max_dist = max_duplicate_distance(threshold);
    let index = BandIndex::build(refs);
    let banded = matches!(max_dist, Some(d) if d <= BandIndex::COMPLETE_THROUGH);

    let mut outcome = DedupOutcome {
        retained: Vec::new(),
        removed: Vec::new(),
        threshold,
    };
    let mut scratch = Vec::new();
    for (id, sig) in corpus {
        let mut best: Option<(usize, u32)> = None;
        let consider = |best: &mut Option<(usize, u32)>, ref_idx: usize, dist: u32| {
            if max_dist.is_some_and(|m| dist <= m) {
                let better = best.is_none_or(|(bi, bd)| dist < bd || (dist == bd && ref_idx < bi));
                if better {
                    *best = Some((ref_idx, dist));
                }
            }
        };
        if banded {
            index.candidates(*sig, &mut scratch);
            for &ref_idx in &scratch {
                consider(&mut best, ref_idx, sig.hamming(refs[ref_idx]));
            }
        } else {
            for (ref_idx, r) in refs.iter().enumerate() {
                consider(&mut best, ref_idx, sig.hamming(*r));
            }
        }
        match best {
            Some((ref_idx, dist)) => outcome.removed.push(Removed {
                id: id.clone(),
                matched_ref: ref_idx,
                similarity: 1.0 - f64::from(dist) / 64.0,
            }),
            None => outcome.retained.push(id.clone()),
        }
    }
    outcome
}

/// Text-level entry point: fingerprint both sides, then deduplicate.
pub fn dedup_against(corpus: &[(String, String)], refs: &[String], threshold: f64) -> DedupOutcome {
    let corpus_sigs: Vec<(String, SimHashSig)> = corpus
        .iter()
        .map(|(id, text)| (id.clone(), simhash(text)))
        .collect();
    let ref_sigs: Vec<SimHashSig> = refs.iter().map(|t| simhash(t)).collect();
    dedup_signatures(&corpus_sigs, &ref_sigs, threshold)
}
