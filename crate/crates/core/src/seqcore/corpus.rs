//! Example and corpus containers plus JSONL ingestion.
//!
//! JSONL format: one record per line, UTF-8, fields
//! `cond` (float array), `tags` (optional float array in [0,1]),
//! `refs` (array of sentences), `tuples` (optional array of 1-3 element
//! string arrays carrying ground-truth semantic tuples).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::semantic::{SemanticTuple, TupleSet};
use crate::seqcore::vocab::{tokenize, TokenSeq, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One conditioned example: conditioning vector (the image stand-in),
/// optional tag probabilities, and one or more tokenized references.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub cond: Vec<f64>,
    pub tags: Option<Vec<f64>>,
    pub refs: Vec<Vec<String>>,
    pub tuples: Option<TupleSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub split: Split,
}

impl Corpus {
    /// Validates: non-empty, refs non-empty, tags in [0,1], and all examples
    /// sharing the same cond/tag dimensions.
    pub fn new(examples: Vec<Example>, split: Split) -> Result<Corpus> {
        if examples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let d_x = examples[0].cond.len();
        let d_p = examples[0].tags.as_ref().map_or(0, Vec::len);
        for (i, ex) in examples.iter().enumerate() {
            if ex.refs.is_empty() {
                return Err(Error::BadRecord {
                    line: i + 1,
                    msg: "example has no references".into(),
                });
            }
            if ex.cond.len() != d_x {
                return Err(Error::DimMismatch(format!(
                    "example {} has cond dimension {} but the corpus uses {}",
                    i + 1,
                    ex.cond.len(),
                    d_x
                )));
            }
            let this_dp = ex.tags.as_ref().map_or(0, Vec::len);
            if this_dp != d_p {
                return Err(Error::DimMismatch(format!(
                    "example {} has tag dimension {} but the corpus uses {}",
                    i + 1,
                    this_dp,
                    d_p
                )));
            }
            if let Some(tags) = &ex.tags {
                if tags.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::BadRecord {
                        line: i + 1,
                        msg: "tag out of range".into(),
                    });
                }
            }
        }
        Ok(Corpus { examples, split })
    }

    pub fn cond_dim(&self) -> usize {
        self.examples[0].cond.len()
    }

    pub fn tag_dim(&self) -> usize {
        self.examples[0].tags.as_ref().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    cond: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tags: Option<Vec<f64>>,
    refs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuples: Option<Vec<Vec<String>>>,
}

/// Loads a JSONL corpus, tokenizing references (lowercase, whitespace split,
/// trailing periods stripped). Errors name the offending 1-based line.
pub fn load_jsonl(path: impl AsRef<Path>, split: Split) -> Result<Corpus> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::BadRecord {
            line: lineno,
            msg: format!("malformed record: {e}"),
        })?;
        if let Some(tags) = &rec.tags {
            if tags.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::BadRecord {
                    line: lineno,
                    msg: "tag out of range".into(),
                });
            }
        }
        if rec.refs.is_empty() {
            return Err(Error::BadRecord {
                line: lineno,
                msg: "record has no references".into(),
            });
        }
        let tuples = match rec.tuples {
            None => None,
            Some(raw) => {
                let mut set = TupleSet::new();
                for t in raw {
                    let tup = SemanticTuple::from_parts(&t).map_err(|msg| Error::BadRecord {
                        line: lineno,
                        msg,
                    })?;
                    set.insert(tup);
                }
                Some(set)
            }
        };
        examples.push(Example {
            cond: rec.cond,
            tags: rec.tags,
            refs: rec.refs.iter().map(|s| tokenize(s)).collect(),
            tuples,
        });
    }
    Corpus::new(examples, split)
}

/// Writes a corpus back to JSONL; `load_jsonl` round-trips the result.
pub fn save_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    for ex in &corpus.examples {
        let rec = JsonRecord {
            cond: ex.cond.clone(),
            tags: ex.tags.clone(),
            refs: ex.refs.iter().map(|r| r.join(" ")).collect(),
            tuples: ex.tuples.as_ref().map(|set| {
                set.iter().map(|t| t.to_parts()).collect()
            }),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// An example with references encoded against a fixed vocabulary, ready for
/// training and reward evaluation.
#[derive(Debug, Clone)]
pub struct EncodedExample {
    pub cond: Array1<f64>,
    pub tags: Option<Array1<f64>>,
    pub refs: Vec<TokenSeq>,
    pub tuples: Option<TupleSet>,
}

pub fn encode_corpus(corpus: &Corpus, vocab: &Vocabulary) -> Vec<EncodedExample> {
    corpus
        .examples
        .iter()
        .map(|ex| EncodedExample {
            cond: Array1::from_vec(ex.cond.clone()),
            tags: ex.tags.as_ref().map(|t| Array1::from_vec(t.clone())),
            refs: ex.refs.iter().map(|r| vocab.encode(r)).collect(),
            tuples: ex.tuples.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_line_file(dir: &tempfile::TempDir, lines: &[&str]) -> std::path::PathBuf {
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    #[test]
    fn load_two_well_formed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = two_line_file(
            &dir,
            &[
                r#"{"cond":[1.0,0.0],"refs":["a red dog"]}"#,
                r#"{"cond":[0.0,1.0],"refs":["a blue cat","the blue cat."]}"#,
            ],
        );
        let c = load_jsonl(&p, Split::Train).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.examples[1].refs[1], vec!["the", "blue", "cat"]);
    }

    #[test]
    fn tag_out_of_range_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = two_line_file(
            &dir,
            &[
                r#"{"cond":[1.0],"tags":[0.5],"refs":["a dog"]}"#,
                r#"{"cond":[1.0],"tags":[1.5],"refs":["a cat"]}"#,
            ],
        );
        let err = load_jsonl(&p, Split::Train).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("tag out of range"), "{msg}");
    }

    #[test]
    fn malformed_line_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = two_line_file(&dir, &[r#"{"cond":[1.0],"refs":["a"]}"#, "{not json"]);
        let err = load_jsonl(&p, Split::Train).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn dim_mismatch_across_examples_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = two_line_file(
            &dir,
            &[
                r#"{"cond":[1.0,2.0],"refs":["a"]}"#,
                r#"{"cond":[1.0],"refs":["b"]}"#,
            ],
        );
        assert!(matches!(
            load_jsonl(&p, Split::Train),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut tuples = TupleSet::new();
        tuples.insert(SemanticTuple::from_parts(&["dog".into(), "is".into(), "red".into()]).unwrap());
        let corpus = Corpus::new(
            vec![
                Example {
                    cond: vec![1.0, 0.25],
                    tags: Some(vec![0.0, 0.5, 1.0]),
                    refs: vec![vec!["a".into(), "red".into(), "dog".into()]],
                    tuples: Some(tuples),
                },
                Example {
                    cond: vec![0.0, 1.0],
                    tags: Some(vec![0.1, 0.2, 0.3]),
                    refs: vec![vec!["a".into(), "blue".into(), "cat".into()]],
                    tuples: None,
                },
            ],
            Split::Val,
        )
        .unwrap();
        let p = dir.path().join("rt.jsonl");
        save_jsonl(&corpus, &p).unwrap();
        let loaded = load_jsonl(&p, Split::Val).unwrap();
        assert_eq!(loaded, corpus);
    }
}
