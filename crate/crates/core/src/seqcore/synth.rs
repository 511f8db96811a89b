//! Synthetic conditioned-captioning tasks: a desk-scale stand-in for a real
//! image-captioning corpus. The conditioning vector is a (noised) one-hot
//! selecting a template sentence; references are the template plus optional
//! paraphrases; ground-truth semantic tuples ride along for the semantic
//! metric.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::semantic::{SemanticTuple, TupleExtractor, TupleSet};
use crate::seqcore::corpus::{Corpus, Example, Split};
use crate::seqcore::vocab::tokenize;

/// (base sentence, paraphrases). All refs of a class share the same tuples.
const TEMPLATE_BANK: [(&str, [&str; 2]); 6] = [
    ("a red dog runs fast", ["the red dog is running", "a red dog runs"]),
    ("a blue cat sleeps quietly", ["the blue cat is sleeping", "a blue cat sleeps"]),
    ("the green bird sings loudly", ["a green bird is singing", "the green bird sings"]),
    ("the small fish swims slowly", ["a small fish is swimming", "the small fish swims"]),
    ("a big horse jumps high", ["the big horse is jumping", "a big horse jumps"]),
    ("the old fox waits here", ["the old fox is waiting", "an old fox waits"]),
];

const ADJECTIVES: [&str; 6] = ["red", "blue", "green", "small", "big", "old"];
const NOUNS: [&str; 6] = ["dog", "cat", "bird", "fish", "horse", "fox"];
const VERB_FORMS: [(&str, &str); 12] = [
    ("runs", "run"),
    ("running", "run"),
    ("sleeps", "sleep"),
    ("sleeping", "sleep"),
    ("sings", "sing"),
    ("singing", "sing"),
    ("swims", "swim"),
    ("swimming", "swim"),
    ("jumps", "jump"),
    ("jumping", "jump"),
    ("waits", "wait"),
    ("waiting", "wait"),
];

/// Rule-based tuple extraction for the toy grammar: the first known noun is
/// the subject; each adjective yields (subject, is, adj) and each verb form
/// yields (subject, does, canonical-verb).
#[derive(Debug, Clone, Default)]
pub struct ToyTupleExtractor;

impl TupleExtractor for ToyTupleExtractor {
    fn extract(&self, words: &[String]) -> TupleSet {
        let mut out = TupleSet::new();
        let subject = match words.iter().find(|w| NOUNS.contains(&w.as_str())) {
            Some(n) => n.clone(),
            None => return out,
        };
        out.insert(SemanticTuple::entity(subject.clone()));
        for w in words {
            if ADJECTIVES.contains(&w.as_str()) {
                out.insert(SemanticTuple::relation(subject.clone(), "is", w.clone()));
            }
            if let Some((_, canon)) = VERB_FORMS.iter().find(|(form, _)| form == w) {
                out.insert(SemanticTuple::relation(subject.clone(), "does", *canon));
            }
        }
        out
    }
}

/// Declarative description of a synthetic task.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Number of template classes (at most the bank size, 6).
    pub classes: usize,
    /// References per example: 1 = template only, 2-3 add paraphrases.
    pub refs_per_example: usize,
    pub train_examples: usize,
    pub val_examples: usize,
    /// Conditioning dimension; defaults to `classes`, must be >= classes.
    pub cond_dim: Option<usize>,
    /// Amplitude of uniform per-component noise added to the one-hot cond.
    pub cond_noise: f64,
    /// Attach tag probability vectors (dimension = classes).
    pub with_tags: bool,
    /// Declared reference-length range; contradicting the bank is an error.
    pub len_range: (usize, usize),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 4,
            refs_per_example: 1,
            train_examples: 16,
            val_examples: 8,
            cond_dim: None,
            cond_noise: 0.05,
            with_tags: false,
            len_range: (1, 30),
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > TEMPLATE_BANK.len() {
            return Err(Error::InvalidConfig(format!(
                "classes must be in 1..={}, got {}",
                TEMPLATE_BANK.len(),
                self.classes
            )));
        }
        if !(1..=3).contains(&self.refs_per_example) {
            return Err(Error::InvalidConfig(
                "refs_per_example must be in 1..=3".into(),
            ));
        }
        if self.train_examples == 0 {
            return Err(Error::InvalidConfig("train_examples must be >= 1".into()));
        }
        if let Some(d) = self.cond_dim {
            if d < self.classes {
                return Err(Error::InvalidConfig(format!(
                    "cond_dim {} contradicts one-hot rule for {} classes",
                    d, self.classes
                )));
            }
        }
        if !(0.0..=0.4).contains(&self.cond_noise) {
            return Err(Error::InvalidConfig("cond_noise must be in [0, 0.4]".into()));
        }
        let (lo, hi) = self.len_range;
        if lo > hi {
            return Err(Error::InvalidConfig("len_range is empty".into()));
        }
        for class in 0..self.classes {
            for r in self.class_refs(class) {
                let n = tokenize(r).len();
                if n < lo || n > hi {
                    return Err(Error::InvalidConfig(format!(
                        "template {r:?} has length {n}, outside declared range {lo}..={hi}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn class_refs(&self, class: usize) -> Vec<&'static str> {
        let (base, paras) = TEMPLATE_BANK[class];
        let mut refs = vec![base];
        refs.extend(paras.iter().take(self.refs_per_example - 1));
        refs
    }
}

#[derive(Debug, Clone)]
pub struct SynthTask {
    pub train: Corpus,
    pub val: Corpus,
}

/// Generates a reproducible task: identical (seed, spec) pairs yield
/// identical corpora, and the val split uses disjoint example indices so
/// its noised conditioning vectors never collide with train.
pub fn synth_task(seed: u64, spec: &SynthSpec) -> Result<SynthTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extractor = ToyTupleExtractor;
    let d_x = spec.cond_dim.unwrap_or(spec.classes);
    let make = |n: usize, split: Split, rng: &mut ChaCha8Rng| -> Result<Corpus> {
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % spec.classes;
            let mut cond = vec![0.0; d_x];
            cond[class] = 1.0;
            for c in cond.iter_mut() {
                *c += rng.gen_range(0.0..1.0) * spec.cond_noise;
            }
            let tags = spec.with_tags.then(|| {
                (0..spec.classes)
                    .map(|j| if j == class { 0.9 } else { 0.05 })
                    .collect()
            });
            let refs: Vec<Vec<String>> =
                spec.class_refs(class).iter().map(|r| tokenize(r)).collect();
            let tuples = extractor.extract(&refs[0]);
            examples.push(Example {
                cond,
                tags,
                refs,
                tuples: Some(tuples),
            });
        }
        Corpus::new(examples, split)
    };
    let train = make(spec.train_examples, Split::Train, &mut rng)?;
    let val = if spec.val_examples > 0 {
        make(spec.val_examples, Split::Val, &mut rng)?
    } else {
        Corpus {
            examples: Vec::new(),
            split: Split::Val,
        }
    };
    Ok(SynthTask { train, val })
}
