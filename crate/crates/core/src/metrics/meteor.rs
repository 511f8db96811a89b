//! METEOR-lite: exact + Porter-stem matching stages, recall-weighted
//! harmonic mean, and a fragmentation penalty.
//!
//! This deliberately omits the WordNet synonym stage of the full metric, so
//! absolute values are not comparable with toolkit METEOR; the shape of the
//! score (alignment, F-mean with recall weight 9, 0.5 * (chunks/matches)^3
//! penalty) is the standard one.

use crate::metrics::stem::porter_stem;

/// One-to-one alignment between candidate and reference positions, built
/// greedily in candidate order: exact matches first, then stem matches on
/// the remainder.
fn align(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (i, w) in cand.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && &reference[j] == w) {
            cand_used[i] = true;
            ref_used[j] = true;
            pairs.push((i, j));
        }
    }
    let cand_stems: Vec<String> = cand.iter().map(|w| porter_stem(w)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|w| porter_stem(w)).collect();
    for i in 0..cand.len() {
        if cand_used[i] {
            continue;
        }
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && ref_stems[j] == cand_stems[i]) {
            cand_used[i] = true;
            ref_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

fn chunk_count(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        let contiguous = prev.is_some_and(|(pi, pj)| i == pi + 1 && j == pj + 1);
        if !contiguous {
            chunks += 1;
        }
        prev = Some((i, j));
    }
    chunks
}

fn score_against(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let pairs = align(cand, reference);
    let m = pairs.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let chunks = chunk_count(&pairs) as f64;
    let penalty = 0.5 * (chunks / m).powi(3);
    f_mean * (1.0 - penalty)
}

/// METEOR-lite in [0, 1]: best score over the reference set.
pub fn meteor_lite(cand: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter()
        .map(|r| score_against(cand, r))
        .fold(0.0, f64::max)
}
