//! Reward assembly: weighted combinations of metrics evaluated on a
//! generated sequence against its references.
//!
//! Rewards are sentence-level (one scalar per generated caption); the same
//! module also exposes the corpus-level report used for evaluation. During
//! training, CIDEr's document frequencies are frozen from the training
//! references so the reward stays stationary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    bleu, cider_d, meteor_lite, rouge_l, semantic_f1, BleuMode, CorpusBleu, DocFreq,
    TupleExtractor, TupleSet, CIDER_MAX_N,
};
use crate::seqcore::{EncodedExample, TokenSeq, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Bleu1,
    Bleu2,
    Bleu3,
    Bleu4,
    RougeL,
    CiderD,
    MeteorLite,
    SemanticF1,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Bleu1 => "bleu1",
            MetricKind::Bleu2 => "bleu2",
            MetricKind::Bleu3 => "bleu3",
            MetricKind::Bleu4 => "bleu4",
            MetricKind::RougeL => "rouge_l",
            MetricKind::CiderD => "cider_d",
            MetricKind::MeteorLite => "meteor_lite",
            MetricKind::SemanticF1 => "semantic_f1",
        }
    }

    fn parse(s: &str) -> Result<MetricKind> {
        Ok(match s {
            "bleu1" => MetricKind::Bleu1,
            "bleu2" => MetricKind::Bleu2,
            "bleu3" => MetricKind::Bleu3,
            "bleu4" => MetricKind::Bleu4,
            "rouge_l" => MetricKind::RougeL,
            "cider_d" => MetricKind::CiderD,
            "meteor_lite" => MetricKind::MeteorLite,
            "semantic_f1" => MetricKind::SemanticF1,
            other => {
                return Err(Error::InvalidConfig(format!("unknown metric {other:?}")));
            }
        })
    }
}

/// A weighted list of metric terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    terms: Vec<(MetricKind, f64)>,
}

impl RewardSpec {
    pub fn new(terms: Vec<(MetricKind, f64)>) -> Result<RewardSpec> {
        if terms.is_empty() {
            return Err(Error::InvalidConfig("reward spec needs at least one term".into()));
        }
        if terms.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::InvalidConfig("reward weights must be finite".into()));
        }
        Ok(RewardSpec { terms })
    }

    pub fn single(kind: MetricKind, weight: f64) -> RewardSpec {
        RewardSpec {
            terms: vec![(kind, weight)],
        }
    }

    /// The standard COCO-metric combination:
    /// 0.5*BLEU-1 + 0.5*BLEU-2 + 1.0*BLEU-3 + 1.0*BLEU-4
    /// + 1.0*CIDEr + 5.0*METEOR + 2.0*ROUGE.
    pub fn bcmr() -> RewardSpec {
        RewardSpec {
            terms: vec![
                (MetricKind::Bleu1, 0.5),
                (MetricKind::Bleu2, 0.5),
                (MetricKind::Bleu3, 1.0),
                (MetricKind::Bleu4, 1.0),
                (MetricKind::CiderD, 1.0),
                (MetricKind::MeteorLite, 5.0),
                (MetricKind::RougeL, 2.0),
            ],
        }
    }

    /// Semantic-tuple F1 combined with CIDEr; equal weighting by default.
    pub fn spider(semantic_weight: f64, cider_weight: f64) -> Result<RewardSpec> {
        if semantic_weight < 0.0 || cider_weight < 0.0 {
            return Err(Error::InvalidConfig("spider weights must be >= 0".into()));
        }
        if semantic_weight == 0.0 && cider_weight == 0.0 {
            return Err(Error::InvalidConfig("spider weights cannot both be zero".into()));
        }
        Ok(RewardSpec {
            terms: vec![
                (MetricKind::SemanticF1, semantic_weight),
                (MetricKind::CiderD, cider_weight),
            ],
        })
    }

    pub fn terms(&self) -> &[(MetricKind, f64)] {
        &self.terms
    }

    pub fn needs_df(&self) -> bool {
        self.terms.iter().any(|(k, _)| *k == MetricKind::CiderD)
    }

    pub fn needs_semantic(&self) -> bool {
        self.terms.iter().any(|(k, _)| *k == MetricKind::SemanticF1)
    }

    /// Parses "bcmr" | "spider" | a single metric name | a weighted sum such
    /// as "0.5*bleu1 + 1.0*cider_d".
    pub fn parse(s: &str) -> Result<RewardSpec> {
        let s = s.trim();
        match s {
            "bcmr" => return Ok(RewardSpec::bcmr()),
            "spider" => return RewardSpec::spider(1.0, 1.0),
            _ => {}
        }
        if let Ok(kind) = MetricKind::parse(s) {
            return Ok(RewardSpec::single(kind, 1.0));
        }
        let mut terms = Vec::new();
        for part in s.split('+') {
            let part = part.trim();
            let (w, name) = match part.split_once('*') {
                Some((w, name)) => {
                    let w: f64 = w.trim().parse().map_err(|_| {
                        Error::InvalidConfig(format!("bad weight in reward term {part:?}"))
                    })?;
                    (w, name.trim())
                }
                None => (1.0, part),
            };
            terms.push((MetricKind::parse(name)?, w));
        }
        RewardSpec::new(terms)
    }
}

impl std::fmt::Display for RewardSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(k, w)| format!("{}*{}", w, k.name()))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Everything a reward evaluation needs beyond the example itself.
pub struct RewardContext {
    pub df: Option<DocFreq>,
    pub vocab: Vocabulary,
    pub extractor: Option<Box<dyn TupleExtractor>>,
}

impl RewardContext {
    pub fn new(vocab: Vocabulary) -> RewardContext {
        RewardContext {
            df: None,
            vocab,
            extractor: None,
        }
    }

    pub fn with_df(mut self, df: DocFreq) -> RewardContext {
        self.df = Some(df);
        self
    }

    pub fn with_extractor(mut self, e: Box<dyn TupleExtractor>) -> RewardContext {
        self.extractor = Some(e);
        self
    }

    /// Builds the context for a training run: document frequencies frozen
    /// from the training references when the spec includes a CIDEr term.
    pub fn for_training(
        spec: &RewardSpec,
        examples: &[EncodedExample],
        vocab: Vocabulary,
        extractor: Option<Box<dyn TupleExtractor>>,
    ) -> RewardContext {
        let df = spec
            .needs_df()
            .then(|| DocFreq::from_examples(examples, CIDER_MAX_N));
        RewardContext {
            df,
            vocab,
            extractor,
        }
    }

    fn ref_tuples(&self, example: &EncodedExample) -> Result<TupleSet> {
        if let Some(t) = &example.tuples {
            return Ok(t.clone());
        }
        let ex = self.extractor.as_deref().ok_or_else(|| {
            Error::MissingContext("semantic term needs example tuples or an extractor".into())
        })?;
        let mut all = TupleSet::new();
        for r in &example.refs {
            all.extend(ex.extract(&self.vocab.decode(r)));
        }
        Ok(all)
    }
}

/// Sentence-level reward: the weighted sum of metric terms for `gen`
/// against the example's references. Deterministic in its inputs.
pub fn reward(
    gen: &TokenSeq,
    example: &EncodedExample,
    spec: &RewardSpec,
    ctx: &RewardContext,
) -> Result<f64> {
    let cand = gen.content();
    let refs: Vec<&[usize]> = example.refs.iter().map(|r| r.content()).collect();
    let mut total = 0.0;
    for &(kind, w) in &spec.terms {
        if w == 0.0 {
            continue;
        }
        let value = match kind {
            MetricKind::Bleu1 => bleu(cand, &refs, 1, BleuMode::SentenceSmoothed),
            MetricKind::Bleu2 => bleu(cand, &refs, 2, BleuMode::SentenceSmoothed),
            MetricKind::Bleu3 => bleu(cand, &refs, 3, BleuMode::SentenceSmoothed),
            MetricKind::Bleu4 => bleu(cand, &refs, 4, BleuMode::SentenceSmoothed),
            MetricKind::RougeL => rouge_l(cand, &refs),
            MetricKind::CiderD => {
                let df = ctx.df.as_ref().ok_or_else(|| {
                    Error::MissingContext("CIDEr term needs document frequencies".into())
                })?;
                cider_d(cand, &refs, df)?
            }
            MetricKind::MeteorLite => {
                let cand_words = self_decode(&ctx.vocab, gen);
                let ref_words: Vec<Vec<String>> =
                    example.refs.iter().map(|r| ctx.vocab.decode(r)).collect();
                meteor_lite(&cand_words, &ref_words)
            }
            MetricKind::SemanticF1 => {
                let ex = ctx.extractor.as_deref().ok_or_else(|| {
                    Error::MissingContext("semantic term needs a tuple extractor".into())
                })?;
                let cand_tuples = ex.extract(&self_decode(&ctx.vocab, gen));
                let ref_tuples = ctx.ref_tuples(example)?;
                semantic_f1(&cand_tuples, &ref_tuples)
            }
        };
        total += w * value;
    }
    Ok(total)
}

fn self_decode(vocab: &Vocabulary, seq: &TokenSeq) -> Vec<String> {
    vocab.decode(seq)
}

/// Corpus-level evaluation: corpus BLEU, mean sentence ROUGE-L / CIDEr-D /
/// METEOR-lite (and semantic F1 when available), plus the weighted total of
/// an optional spec over those corpus-level values.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub count: usize,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub rouge_l: f64,
    pub cider_d: f64,
    pub meteor_lite: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semantic_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_total: Option<f64>,
}

impl ScoreReport {
    fn metric(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::Bleu1 => Some(self.bleu_1),
            MetricKind::Bleu2 => Some(self.bleu_2),
            MetricKind::Bleu3 => Some(self.bleu_3),
            MetricKind::Bleu4 => Some(self.bleu_4),
            MetricKind::RougeL => Some(self.rouge_l),
            MetricKind::CiderD => Some(self.cider_d),
            MetricKind::MeteorLite => Some(self.meteor_lite),
            MetricKind::SemanticF1 => self.semantic_f1,
        }
    }
}

pub fn corpus_report(
    cands: &[TokenSeq],
    examples: &[EncodedExample],
    ctx: &RewardContext,
    spec: Option<&RewardSpec>,
) -> Result<ScoreReport> {
    if cands.len() != examples.len() {
        return Err(Error::DimMismatch(format!(
            "{} candidates vs {} reference examples",
            cands.len(),
            examples.len()
        )));
    }
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let local_df;
    let df = match &ctx.df {
        Some(df) => df,
        None => {
            local_df = DocFreq::from_examples(examples, CIDER_MAX_N);
            &local_df
        }
    };
    let mut corpus_bleu = CorpusBleu::new(4);
    let mut rouge_sum = 0.0;
    let mut cider_sum = 0.0;
    let mut meteor_sum = 0.0;
    let mut semantic_sum = 0.0;
    let mut semantic_ok = true;
    for (gen, ex) in cands.iter().zip(examples) {
        let cand = gen.content();
        let refs: Vec<&[usize]> = ex.refs.iter().map(|r| r.content()).collect();
        corpus_bleu.add(cand, &refs);
        rouge_sum += rouge_l(cand, &refs);
        cider_sum += cider_d(cand, &refs, df)?;
        let cand_words = ctx.vocab.decode(gen);
        let ref_words: Vec<Vec<String>> = ex.refs.iter().map(|r| ctx.vocab.decode(r)).collect();
        meteor_sum += meteor_lite(&cand_words, &ref_words);
        if semantic_ok {
            match &ctx.extractor {
                Some(extractor) => {
                    let cand_tuples = extractor.extract(&cand_words);
                    match ctx.ref_tuples(ex) {
                        Ok(rt) => semantic_sum += semantic_f1(&cand_tuples, &rt),
                        Err(_) => semantic_ok = false,
                    }
                }
                None => semantic_ok = false,
            }
        }
    }
    let n = examples.len() as f64;
    let mut report = ScoreReport {
        count: examples.len(),
        bleu_1: corpus_bleu.score(1),
        bleu_2: corpus_bleu.score(2),
        bleu_3: corpus_bleu.score(3),
        bleu_4: corpus_bleu.score(4),
        rouge_l: rouge_sum / n,
        cider_d: cider_sum / n,
        meteor_lite: meteor_sum / n,
        semantic_f1: semantic_ok.then_some(semantic_sum / n),
        weighted_total: None,
    };
    if let Some(spec) = spec {
        let mut total = 0.0;
        for &(kind, w) in spec.terms() {
            let v = report.metric(kind).ok_or_else(|| {
                Error::MissingContext("weighted total includes an unavailable metric".into())
            })?;
            total += w * v;
        }
        report.weighted_total = Some(total);
    }
    Ok(report)
}
