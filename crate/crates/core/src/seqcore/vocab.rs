//! Vocabulary and token sequences.
//!
//! Token ids are contiguous. The three reserved tokens always occupy the
//! same slots: [`BOS_ID`], [`EOS_ID`], [`UNK_ID`], followed by data-derived
//! tokens sorted by descending count (ties broken lexicographically).

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::seqcore::corpus::Corpus;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

pub const BOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;

/// Lowercase + whitespace tokenization with trailing sentence-final
/// periods stripped from each token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_end_matches('.').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Bidirectional token <-> id mapping with reserved BOS/EOS/UNK slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from reserved tokens plus the given content words,
    /// in order. Duplicates and reserved surface forms are rejected.
    pub fn with_content<S: AsRef<str>>(content: &[S]) -> Result<Vocabulary> {
        let mut tokens = vec![
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        tokens.extend(content.iter().map(|s| s.as_ref().to_string()));
        let mut ids = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    /// Counts tokens over all references in `corpus` and keeps those occurring
    /// at least `min_count` times. Kept tokens are sorted by descending count,
    /// ties lexicographic, so the result is a pure function of the input.
    pub fn build(corpus: &Corpus, min_count: usize) -> Result<Vocabulary> {
        if corpus.examples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if min_count < 1 {
            return Err(Error::InvalidConfig("min_count must be >= 1".into()));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for ex in &corpus.examples {
            for r in &ex.refs {
                for w in r {
                    *counts.entry(w.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count && w != BOS_TOKEN && w != EOS_TOKEN && w != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let content: Vec<&str> = kept.into_iter().map(|(w, _)| w).collect();
        Vocabulary::with_content(&content)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn bos_id(&self) -> usize {
        BOS_ID
    }

    pub fn eos_id(&self) -> usize {
        EOS_ID
    }

    pub fn unk_id(&self) -> usize {
        UNK_ID
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Encodes words to ids; out-of-vocabulary words map to [`UNK_ID`].
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> TokenSeq {
        let ids = words
            .iter()
            .map(|w| self.ids.get(w.as_ref()).copied().unwrap_or(UNK_ID))
            .collect();
        TokenSeq::new_unchecked(ids)
    }

    /// Decodes content ids back to surface forms (EOS excluded).
    pub fn decode(&self, seq: &TokenSeq) -> Vec<String> {
        seq.content()
            .iter()
            .map(|&id| self.tokens.get(id).cloned().unwrap_or_else(|| UNK_TOKEN.to_string()))
            .collect()
    }
}

/// A bounded integer sequence: decoder output or reference caption.
///
/// Holds at most one [`EOS_ID`], and only as the final element. BOS is never
/// stored; it exists only as the decoder's first input.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    ids: Vec<usize>,
}

impl TokenSeq {
    pub fn new(ids: Vec<usize>) -> Result<TokenSeq> {
        let last = ids.len().saturating_sub(1);
        for (i, &id) in ids.iter().enumerate() {
            if id == EOS_ID && i != last {
                return Err(Error::InvalidConfig(
                    "EOS may only appear as the final element".into(),
                ));
            }
        }
        Ok(TokenSeq { ids })
    }

    /// For construction paths that maintain the EOS invariant themselves.
    pub(crate) fn new_unchecked(ids: Vec<usize>) -> TokenSeq {
        debug_assert!(!ids.iter().rev().skip(1).any(|&id| id == EOS_ID));
        TokenSeq { ids }
    }

    pub fn empty() -> TokenSeq {
        TokenSeq { ids: Vec::new() }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ends_with_eos(&self) -> bool {
        self.ids.last() == Some(&EOS_ID)
    }

    /// Ids without the terminal EOS, i.e. the caption content.
    pub fn content(&self) -> &[usize] {
        if self.ends_with_eos() {
            &self.ids[..self.ids.len() - 1]
        } else {
            &self.ids
        }
    }

    /// Returns a copy guaranteed to end with EOS (appended if missing).
    pub fn with_eos(&self) -> TokenSeq {
        if self.ends_with_eos() {
            self.clone()
        } else {
            let mut ids = self.ids.clone();
            ids.push(EOS_ID);
            TokenSeq { ids }
        }
    }

    /// Keeps the first `max_len` ids. Idempotent; an EOS that survives stays
    /// terminal because it could only have been the final element.
    pub fn truncate(&self, max_len: usize) -> Result<TokenSeq> {
        if max_len < 1 {
            return Err(Error::InvalidConfig("max_len must be >= 1".into()));
        }
        let n = self.ids.len().min(max_len);
        Ok(TokenSeq {
            ids: self.ids[..n].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::corpus::{Corpus, Example, Split};
    use proptest::prelude::*;

    fn corpus_of(sentences: &[&str]) -> Corpus {
        let examples = sentences
            .iter()
            .map(|s| Example {
                cond: vec![0.0],
                tags: None,
                refs: vec![tokenize(s)],
                tuples: None,
            })
            .collect();
        Corpus::new(examples, Split::Train).unwrap()
    }

    #[test]
    fn build_vocab_threshold() {
        // a x5, b x3, c x1, min_count=4 -> only "a" kept
        let c = corpus_of(&["a a a a a", "b b b c"]);
        let v = Vocabulary::build(&c, 4).unwrap();
        assert_eq!(v.tokens(), &["<bos>", "<eos>", "<unk>", "a"]);
        assert_eq!(v.encode(&["b"]).ids(), &[UNK_ID]);
        assert_eq!(v.encode(&["c"]).ids(), &[UNK_ID]);
    }

    #[test]
    fn build_vocab_min_count_one_keeps_all() {
        let c = corpus_of(&["b a", "c a"]);
        let v = Vocabulary::build(&c, 1).unwrap();
        // a (count 2) first, then b/c lexicographic
        assert_eq!(v.tokens(), &["<bos>", "<eos>", "<unk>", "a", "b", "c"]);
    }

    #[test]
    fn build_vocab_deterministic() {
        let c = corpus_of(&["b a c", "a c b"]);
        let v1 = Vocabulary::build(&c, 1).unwrap();
        let v2 = Vocabulary::build(&c, 1).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn build_vocab_empty_corpus_errors() {
        let c = Corpus {
            examples: vec![],
            split: Split::Train,
        };
        assert!(Vocabulary::build(&c, 1).is_err());
    }

    #[test]
    fn tokenize_lowercases_and_strips_periods() {
        assert_eq!(tokenize("A red Dog."), vec!["a", "red", "dog"]);
        assert_eq!(tokenize("  one  two "), vec!["one", "two"]);
    }

    #[test]
    fn encode_decode_identity_in_vocab() {
        let v = Vocabulary::with_content(&["red", "dog"]).unwrap();
        let words = vec!["red".to_string(), "dog".to_string()];
        assert_eq!(v.decode(&v.encode(&words)), words);
    }

    #[test]
    fn oov_decodes_to_unk_surface() {
        let v = Vocabulary::with_content(&["dog"]).unwrap();
        let seq = v.encode(&["cat"]);
        assert_eq!(v.decode(&seq), vec![UNK_TOKEN.to_string()]);
    }

    #[test]
    fn truncate_short_unchanged() {
        let s = TokenSeq::new(vec![3, 4, 5, 6, 7]).unwrap();
        assert_eq!(s.truncate(30).unwrap(), s);
    }

    #[test]
    fn truncate_long_keeps_first_max_len() {
        let s = TokenSeq::new((3..43).collect()).unwrap();
        let t = s.truncate(30).unwrap();
        assert_eq!(t.len(), 30);
        assert_eq!(t.ids(), &s.ids()[..30]);
    }

    #[test]
    fn truncate_keeps_terminal_eos() {
        let s = TokenSeq::new(vec![3, 4, EOS_ID]).unwrap();
        let t = s.truncate(3).unwrap();
        assert_eq!(t.ids(), &[3, 4, EOS_ID]);
        assert!(t.ends_with_eos());
    }

    #[test]
    fn interior_eos_rejected() {
        assert!(TokenSeq::new(vec![3, EOS_ID, 4]).is_err());
    }

    proptest! {
        #[test]
        fn truncate_is_idempotent(ids in proptest::collection::vec(2usize..10, 0..40), n in 1usize..35) {
            let s = TokenSeq::new(ids).unwrap();
            let once = s.truncate(n).unwrap();
            let twice = once.truncate(n).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
