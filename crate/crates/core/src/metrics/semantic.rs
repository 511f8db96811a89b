//! Semantic-tuple F1: a pluggable stand-in for scene-graph based scoring.
//!
//! Tuples are supplied externally (synthetic tasks carry ground truth; a
//! rule-based extractor covers the toy grammar).

use std::collections::BTreeSet;

/// (subject, relation?, object?) with non-empty strings in populated slots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SemanticTuple {
    pub subject: String,
    pub relation: Option<String>,
    pub object: Option<String>,
}

impl SemanticTuple {
    pub fn entity(subject: impl Into<String>) -> SemanticTuple {
        SemanticTuple {
            subject: subject.into(),
            relation: None,
            object: None,
        }
    }

    pub fn relation(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> SemanticTuple {
        SemanticTuple {
            subject: subject.into(),
            relation: Some(relation.into()),
            object: Some(object.into()),
        }
    }

    /// Parses the JSONL wire form: a 1-3 element string array.
    pub fn from_parts(parts: &[String]) -> std::result::Result<SemanticTuple, String> {
        if parts.iter().any(|p| p.is_empty()) {
            return Err("tuple slots must be non-empty".into());
        }
        match parts {
            [s] => Ok(SemanticTuple::entity(s.clone())),
            [s, r, o] => Ok(SemanticTuple::relation(s.clone(), r.clone(), o.clone())),
            _ => Err(format!("tuple must have 1 or 3 elements, got {}", parts.len())),
        }
    }

    pub fn to_parts(&self) -> Vec<String> {
        match (&self.relation, &self.object) {
            (Some(r), Some(o)) => vec![self.subject.clone(), r.clone(), o.clone()],
            _ => vec![self.subject.clone()],
        }
    }
}

pub type TupleSet = BTreeSet<SemanticTuple>;

/// Maps a tokenized sentence to its semantic tuples.
pub trait TupleExtractor: Send + Sync {
    fn extract(&self, words: &[String]) -> TupleSet;
}

/// F1 of exact tuple matches between candidate and reference sets.
pub fn semantic_f1(candidate: &TupleSet, reference: &TupleSet) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let overlap = candidate.intersection(reference).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let p = overlap / candidate.len() as f64;
    let r = overlap / reference.len() as f64;
    2.0 * p * r / (p + r)
}
