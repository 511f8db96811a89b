//! Vocabulary construction, token sequences, corpus containers, synthetic
//! task generation, and JSONL ingestion.
//!
//! All types are immutable after construction and safe to share across
//! threads.

mod corpus;
mod synth;
mod vocab;

pub use corpus::{encode_corpus, load_jsonl, save_jsonl, Corpus, EncodedExample, Example, Split};
pub use synth::{synth_task, SynthSpec, SynthTask, ToyTupleExtractor};
pub use vocab::{
    tokenize, TokenSeq, Vocabulary, BOS_ID, BOS_TOKEN, EOS_ID, EOS_TOKEN, UNK_ID, UNK_TOKEN,
};
