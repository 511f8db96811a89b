//! BLEU-n: clipped modified n-gram precision, geometric mean over orders,
//! brevity penalty against the closest reference length.

use crate::metrics::NGramCounts;

/// `SentenceSmoothed` adds +1 to numerator and denominator of orders >= 2,
/// which keeps per-sentence rewards informative for short candidates.
/// `Corpus` is the raw, unsmoothed computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BleuMode {
    SentenceSmoothed,
    Corpus,
}

/// Per-order clipped/total counts plus the two lengths entering the brevity
/// penalty.
struct BleuStats {
    clipped: Vec<usize>,
    total: Vec<usize>,
    cand_len: usize,
    closest_ref_len: usize,
}

fn bleu_stats(cand: &[usize], refs: &[&[usize]], max_n: usize) -> BleuStats {
    let cand_counts = NGramCounts::build(cand, max_n);
    let ref_counts: Vec<NGramCounts> = refs.iter().map(|r| NGramCounts::build(r, max_n)).collect();
    let mut clipped = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    for n in 1..=max_n {
        for (gram, &c) in cand_counts.order(n) {
            let clip = ref_counts
                .iter()
                .map(|rc| rc.order(n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped[n - 1] += c.min(clip);
            total[n - 1] += c;
        }
    }
    // closest reference length; ties broken toward the shorter reference
    let closest_ref_len = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(cand.len()), l))
        .unwrap_or(0);
    BleuStats {
        clipped,
        total,
        cand_len: cand.len(),
        closest_ref_len,
    }
}

fn combine(stats: &BleuStats, n: usize, mode: BleuMode) -> f64 {
    if stats.cand_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let smooth = usize::from(mode == BleuMode::SentenceSmoothed && k >= 2);
        let num = stats.clipped[k - 1] + smooth;
        let den = stats.total[k - 1] + smooth;
        if num == 0 || den == 0 {
            return 0.0;
        }
        log_sum += (num as f64 / den as f64).ln();
    }
    let precision = (log_sum / n as f64).exp();
    let c = stats.cand_len as f64;
    let r = stats.closest_ref_len as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * precision
}

/// Sentence-level BLEU-n of a candidate against its references.
pub fn bleu(cand: &[usize], refs: &[&[usize]], n: usize, mode: BleuMode) -> f64 {
    assert!((1..=4).contains(&n), "BLEU order must be in 1..=4");
    combine(&bleu_stats(cand, refs, n), n, mode)
}

/// Corpus-level BLEU accumulator: clipped counts and lengths are summed over
/// sentences before the geometric mean and brevity penalty are applied.
#[derive(Debug, Clone)]
pub struct CorpusBleu {
    max_n: usize,
    clipped: Vec<usize>,
    total: Vec<usize>,
    cand_len: usize,
    ref_len: usize,
}

impl CorpusBleu {
    pub fn new(max_n: usize) -> CorpusBleu {
        CorpusBleu {
            max_n,
            clipped: vec![0; max_n],
            total: vec![0; max_n],
            cand_len: 0,
            ref_len: 0,
        }
    }

    pub fn add(&mut self, cand: &[usize], refs: &[&[usize]]) {
        let stats = bleu_stats(cand, refs, self.max_n);
        for k in 0..self.max_n {
            self.clipped[k] += stats.clipped[k];
            self.total[k] += stats.total[k];
        }
        self.cand_len += stats.cand_len;
        self.ref_len += stats.closest_ref_len;
    }

    pub fn score(&self, n: usize) -> f64 {
        assert!(n >= 1 && n <= self.max_n);
        let stats = BleuStats {
            clipped: self.clipped.clone(),
            total: self.total.clone(),
            cand_len: self.cand_len,
            closest_ref_len: self.ref_len,
        };
        combine(&stats, n, BleuMode::Corpus)
    }
}
