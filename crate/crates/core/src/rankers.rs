//! The explanation ranker and the smoothed language models reused by the
//! glass-box black boxes. All scores live in log space.

use std::collections::HashSet;

use crate::index::{Index, TermBag};
use crate::ranking::{DocIdx, Ranking};

/// Per-term log floor when both the document and the collection assign zero
/// probability (only reachable for perturbation placeholders).
pub const LOG_FLOOR: f64 = -700.0;

/// `q ∪ T` with set semantics, query terms first, then expansion terms in
/// their given order.
pub fn expanded_terms<'a, Q, T>(query: &'a [Q], expansion: &'a [T]) -> Vec<&'a str>
where
    Q: AsRef<str>,
    T: AsRef<str>,
{
    let mut seen = HashSet::new();
    query
        .iter()
        .map(AsRef::as_ref)
        .chain(expansion.iter().map(AsRef::as_ref))
        .filter(|t| seen.insert(*t))
        .collect()
}

/// Additively smoothed unigram language model:
/// `S_E(w, d) = ln((tf(w, d) + δ) / (|d| + δ·|V|))`.
///
/// Scores of a term set are sums of per-term scores, so every term
/// contributes independently.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplanationRanker {
    delta: f64,
    vocab_size: usize,
}

impl ExplanationRanker {
    pub fn new(index: &Index, delta: f64) -> Self {
        Self::with_vocab_size(index.vocab_size(), delta)
    }

    pub fn with_vocab_size(vocab_size: usize, delta: f64) -> Self {
        assert!(delta > 0.0, "smoothing constant must be positive");
        Self { delta, vocab_size }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn term_score(&self, term: &str, doc: &TermBag) -> f64 {
        self.score_tf(doc.tf(term), doc.len())
    }

    pub fn score_tf(&self, tf: u32, len: usize) -> f64 {
        ((tf as f64 + self.delta) / (len as f64 + self.delta * self.vocab_size as f64)).ln()
    }

    /// Score of a document for the expanded query `q ∪ T`.
    pub fn score_expanded<Q: AsRef<str>, T: AsRef<str>>(&self, query: &[Q], expansion: &[T], doc: &TermBag) -> f64 {
        expanded_terms(query, expansion)
            .into_iter()
            .map(|t| self.term_score(t, doc))
            .sum()
    }

    pub fn rank_expanded<Q: AsRef<str>, T: AsRef<str>>(
        &self,
        index: &Index,
        query_id: &str,
        query: &[Q],
        expansion: &[T],
        pool: &[DocIdx],
    ) -> Ranking {
        let terms = expanded_terms(query, expansion);
        let scored = pool
            .iter()
            .map(|&d| {
                let bag = index.bag(d);
                (d, terms.iter().map(|t| self.term_score(t, bag)).sum())
            })
            .collect();
        Ranking::from_scores(query_id, "explanation", scored)
    }
}

/// Jelinek-Mercer query likelihood, with `alpha` weighting the document
/// model: `Σ ln(α·tf/|d| + (1-α)·cf/|C|)`.
pub fn jm_score<S: AsRef<str>>(index: &Index, terms: &[S], doc: &TermBag, alpha: f64) -> f64 {
    terms.iter().map(|t| jm_term(index, t.as_ref(), doc, alpha)).sum()
}

pub(crate) fn jm_prob(index: &Index, term: &str, doc: &TermBag, alpha: f64) -> f64 {
    let p_doc = if doc.is_empty() {
        0.0
    } else {
        doc.tf(term) as f64 / doc.len() as f64
    };
    alpha * p_doc + (1.0 - alpha) * index.collection_prob(term)
}

fn jm_term(index: &Index, term: &str, doc: &TermBag, alpha: f64) -> f64 {
    let p = jm_prob(index, term, doc, alpha);
    if p > 0.0 {
        p.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}
