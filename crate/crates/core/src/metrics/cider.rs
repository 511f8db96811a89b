//! CIDEr-D: TF-IDF n-gram cosine similarity with count clipping and a
//! Gaussian length penalty, averaged over references and orders, scaled x10.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::{DocFreq, NGram, NGramCounts};

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;

struct TfIdf {
    weights: Vec<BTreeMap<NGram, f64>>,
    norms: Vec<f64>,
    len: usize,
}

fn tfidf(tokens: &[usize], df: &DocFreq) -> TfIdf {
    // A single-document corpus would zero every idf; clamping the log-corpus
    // size at ln(2) keeps identical candidate/reference pairs at full score.
    let log_corpus = (df.corpus_size().max(2) as f64).ln();
    let counts = NGramCounts::build(tokens, CIDER_MAX_N);
    let mut weights = Vec::with_capacity(CIDER_MAX_N);
    let mut norms = Vec::with_capacity(CIDER_MAX_N);
    for order in &counts.by_order {
        let mut w = BTreeMap::new();
        let mut sq = 0.0;
        for (gram, &cnt) in order {
            let idf = log_corpus - (df.df(gram).max(1) as f64).ln();
            let v = cnt as f64 * idf;
            sq += v * v;
            w.insert(gram.clone(), v);
        }
        weights.push(w);
        norms.push(sq.sqrt());
    }
    TfIdf {
        weights,
        norms,
        len: tokens.len(),
    }
}

/// Per-order CIDEr-D values (before the x10 scaling), averaged over the
/// reference set.
pub fn cider_d_per_order(
    cand: &[usize],
    refs: &[&[usize]],
    df: &DocFreq,
) -> Result<[f64; CIDER_MAX_N]> {
    if df.is_empty() {
        return Err(Error::MissingContext(
            "CIDEr requires document frequencies built from a non-empty corpus".into(),
        ));
    }
    if refs.is_empty() {
        return Err(Error::MissingContext("CIDEr requires references".into()));
    }
    let cand_v = tfidf(cand, df);
    let mut acc = [0.0; CIDER_MAX_N];
    for r in refs {
        let ref_v = tfidf(r, df);
        let delta = cand_v.len as f64 - ref_v.len as f64;
        let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
        for n in 0..CIDER_MAX_N {
            if cand_v.norms[n] == 0.0 || ref_v.norms[n] == 0.0 {
                continue;
            }
            let mut dot = 0.0;
            for (gram, &wc) in &cand_v.weights[n] {
                if let Some(&wr) = ref_v.weights[n].get(gram) {
                    dot += wc.min(wr) * wr;
                }
            }
            acc[n] += penalty * dot / (cand_v.norms[n] * ref_v.norms[n]);
        }
    }
    for v in acc.iter_mut() {
        *v /= refs.len() as f64;
    }
    Ok(acc)
}

/// CIDEr-D score in [0, 10].
pub fn cider_d(cand: &[usize], refs: &[&[usize]], df: &DocFreq) -> Result<f64> {
    let per_order = cider_d_per_order(cand, refs, df)?;
    Ok(10.0 * per_order.iter().sum::<f64>() / CIDER_MAX_N as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn df_of(sets: &[&[&[usize]]]) -> DocFreq {
        let mut df = DocFreq::new(CIDER_MAX_N);
        for set in sets {
            df.add_ref_set(set.iter().copied());
        }
        df
    }

    #[test]
    fn identity_on_single_example_corpus_is_ten() {
        let r: Vec<usize> = vec![3, 4, 5, 6, 7];
        let df = df_of(&[&[&r]]);
        let score = cider_d(&r, &[&r], &df).unwrap();
        assert!((score - 10.0).abs() < 1e-12, "{score}");
    }

    #[test]
    fn no_shared_ngram_is_zero() {
        let df = df_of(&[&[&[3, 4, 5][..]], &[&[6, 7, 8][..]]]);
        let score = cider_d(&[9, 10, 11], &[&[3, 4, 5][..]], &df).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn empty_docfreq_errors() {
        let df = DocFreq::new(CIDER_MAX_N);
        assert!(cider_d(&[1], &[&[1][..]], &df).is_err());
    }

    #[test]
    fn repeated_unigram_padding_decays_fourgram_term() {
        // Candidate starts as the reference; appending a repeated reference
        // unigram keeps adding unmatched 4-grams and length-penalty mass.
        let reference: Vec<usize> = vec![3, 4, 5, 6, 7];
        let other: Vec<usize> = vec![8, 9, 10, 11];
        let df = df_of(&[&[&reference], &[&other]]);
        let mut prev = f64::INFINITY;
        for extra in 1..=5 {
            let mut cand = reference.clone();
            cand.extend(std::iter::repeat(3).take(extra));
            let per = cider_d_per_order(&cand, &[&reference], &df).unwrap();
            assert!(
                per[3] < prev,
                "n=4 term should strictly decrease: {} -> {}",
                prev,
                per[3]
            );
            prev = per[3];
        }
    }
}
