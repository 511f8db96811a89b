//! Sentence- and corpus-level similarity metrics used as rewards and for
//! evaluation.
//!
//! All scoring here is over token ids except METEOR-lite and the semantic
//! F1, which need surface forms (stemming, tuple extraction). Maps are
//! ordered so every score is a deterministic function of its inputs.

use std::collections::BTreeMap;

use crate::seqcore::EncodedExample;

mod bleu;
mod cider;
mod meteor;
pub mod semantic;
mod stem;

pub use bleu::{bleu, BleuMode, CorpusBleu};
pub use cider::{cider_d, cider_d_per_order, CIDER_MAX_N, CIDER_SIGMA};
pub use meteor::meteor_lite;
pub use semantic::{semantic_f1, SemanticTuple, TupleExtractor, TupleSet};
pub use stem::porter_stem;

pub type NGram = Vec<usize>;

/// N-gram counts for one sentence, grouped by order.
#[derive(Debug, Clone)]
pub struct NGramCounts {
    /// `by_order[k]` holds the (k+1)-gram counts.
    pub by_order: Vec<BTreeMap<NGram, usize>>,
}

impl NGramCounts {
    pub fn build(tokens: &[usize], max_n: usize) -> NGramCounts {
        let mut by_order = Vec::with_capacity(max_n);
        for n in 1..=max_n {
            let mut m = BTreeMap::new();
            if tokens.len() >= n {
                for w in tokens.windows(n) {
                    *m.entry(w.to_vec()).or_insert(0) += 1;
                }
            }
            by_order.push(m);
        }
        NGramCounts { by_order }
    }

    pub fn order(&self, n: usize) -> &BTreeMap<NGram, usize> {
        &self.by_order[n - 1]
    }
}

/// Document frequencies of n-grams over a corpus of reference sets: the
/// number of sets (not sentences) containing each n-gram.
#[derive(Debug, Clone, Default)]
pub struct DocFreq {
    df: BTreeMap<NGram, usize>,
    corpus_size: usize,
    max_n: usize,
}

impl DocFreq {
    pub fn new(max_n: usize) -> DocFreq {
        DocFreq {
            df: BTreeMap::new(),
            corpus_size: 0,
            max_n,
        }
    }

    /// Registers one reference set: each distinct n-gram appearing in any of
    /// its sentences counts once.
    pub fn add_ref_set<'a, I: IntoIterator<Item = &'a [usize]>>(&mut self, refs: I) {
        let mut seen: std::collections::BTreeSet<NGram> = std::collections::BTreeSet::new();
        for r in refs {
            let counts = NGramCounts::build(r, self.max_n);
            for order in &counts.by_order {
                seen.extend(order.keys().cloned());
            }
        }
        for g in seen {
            *self.df.entry(g).or_insert(0) += 1;
        }
        self.corpus_size += 1;
    }

    /// Frequencies over the reference sets of a whole encoded corpus.
    pub fn from_examples(examples: &[EncodedExample], max_n: usize) -> DocFreq {
        let mut df = DocFreq::new(max_n);
        for ex in examples {
            df.add_ref_set(ex.refs.iter().map(|r| r.content()));
        }
        df
    }

    pub fn df(&self, gram: &[usize]) -> usize {
        self.df.get(gram).copied().unwrap_or(0)
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn is_empty(&self) -> bool {
        self.corpus_size == 0
    }
}

/// Longest common subsequence length, the ROUGE-L primitive.
pub(crate) fn lcs_len(a: &[usize], b: &[usize]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: LCS F-measure with beta = 1.2, taking the max precision and max
/// recall over the reference set.
pub fn rouge_l(cand: &[usize], refs: &[&[usize]]) -> f64 {
    const BETA: f64 = 1.2;
    if cand.is_empty() {
        return 0.0;
    }
    let mut p_max: f64 = 0.0;
    let mut r_max: f64 = 0.0;
    for r in refs {
        if r.is_empty() {
            continue;
        }
        let l = lcs_len(cand, r) as f64;
        p_max = p_max.max(l / cand.len() as f64);
        r_max = r_max.max(l / r.len() as f64);
    }
    if p_max == 0.0 || r_max == 0.0 {
        return 0.0;
    }
    (1.0 + BETA * BETA) * p_max * r_max / (r_max + BETA * BETA * p_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcs_basic() {
        assert_eq!(lcs_len(&[1, 2, 3, 4], &[1, 3, 2, 4]), 3);
        assert_eq!(lcs_len(&[1, 2], &[3, 4]), 0);
        assert_eq!(lcs_len(&[], &[1]), 0);
    }

    #[test]
    fn rouge_identity_is_one() {
        let s = [5, 6, 7, 8];
        assert!((rouge_l(&s, &[&s]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rouge_hand_example() {
        // cand "a b c d" vs ref "a c b d": LCS 3, P=R=3/4 -> F = 0.75
        let c = [10, 11, 12, 13];
        let r = [10, 12, 11, 13];
        assert!((rouge_l(&c, &[&r]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rouge_disjoint_is_zero() {
        assert_eq!(rouge_l(&[1, 2], &[&[3, 4][..]]), 0.0);
    }

    #[test]
    fn docfreq_counts_sets_not_sentences() {
        let mut df = DocFreq::new(2);
        df.add_ref_set([&[1, 2][..], &[1, 3][..]]);
        df.add_ref_set([&[1, 4][..]]);
        assert_eq!(df.corpus_size(), 2);
        assert_eq!(df.df(&[1]), 2);
        assert_eq!(df.df(&[2]), 1);
        assert_eq!(df.df(&[1, 2]), 1);
        assert_eq!(df.df(&[9]), 0);
    }
}
