//! Glass-box "black box" rankers with known intents, behind the weak/strong
//! agnostic contract the explanation engine consumes.
//!
//! Every black box re-ranks the initial retrieval pool with an internally
//! expanded query. The expansion terms are the ground-truth intent `G_q`.
//!
//! * `rm3-k`: relevance-model expansion from the top-k initial documents,
//!   scored with Jelinek-Mercer smoothing.
//! * `emb`: the embedding neighbours of the query that occur in the top-10
//!   documents, scored with Jelinek-Mercer smoothing.
//! * `desm`: a mix of smoothed query likelihood and the cosine between an
//!   IDF-weighted expanded query vector and a TF-IDF document vector.
//! * `planted`: the explanation ranker itself with externally supplied
//!   expansion terms.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::index::{Index, Query, TermBag};
use crate::rankers::{expanded_terms, jm_prob, jm_score, ExplanationRanker};
use crate::ranking::{DocIdx, Ranking};

/// Size of every ground-truth intent.
pub const INTENT_SIZE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agnosticism {
    /// Per-document scores are available.
    Weak,
    /// Only the ranking is available.
    Strong,
}

impl FromStr for Agnosticism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Self::Weak),
            "strong" => Ok(Self::Strong),
            other => Err(Error::Config(format!("unknown mode `{other}` (weak|strong)"))),
        }
    }
}

impl fmt::Display for Agnosticism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Weak => "weak",
            Self::Strong => "strong",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlackBoxKind {
    Rm3 { depth: usize },
    Emb,
    Desm,
    Planted,
}

impl FromStr for BlackBoxKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rm3-10" => Ok(Self::Rm3 { depth: 10 }),
            "rm3-20" => Ok(Self::Rm3 { depth: 20 }),
            "emb" => Ok(Self::Emb),
            "desm" => Ok(Self::Desm),
            "planted" => Ok(Self::Planted),
            other => match other.strip_prefix("rm3-").and_then(|k| k.parse().ok()) {
                Some(depth) if depth > 0 => Ok(Self::Rm3 { depth }),
                _ => Err(Error::Config(format!(
                    "unknown black box `{other}` (rm3-10|rm3-20|emb|desm|planted)"
                ))),
            },
        }
    }
}

impl fmt::Display for BlackBoxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rm3 { depth } => write!(f, "rm3-{depth}"),
            Self::Emb => f.write_str("emb"),
            Self::Desm => f.write_str("desm"),
            Self::Planted => f.write_str("planted"),
        }
    }
}

impl BlackBoxKind {
    pub fn needs_embeddings(self) -> bool {
        matches!(self, Self::Emb | Self::Desm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthIntent {
    pub query_id: String,
    pub terms: Vec<String>,
    pub source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

/// Write intents as `query_id<TAB>term1<TAB>...<TAB>term10`.
pub fn write_intents(path: &Path, intents: &[GroundTruthIntent]) -> Result<()> {
    let mut out = String::new();
    for intent in intents {
        out.push_str(&intent.query_id);
        for t in &intent.terms {
            out.push('\t');
            out.push_str(t);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_intents(path: &Path, source: &str) -> Result<Vec<GroundTruthIntent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let query_id = fields.next().unwrap_or_default().trim().to_string();
        let terms: Vec<String> = fields.map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
        if query_id.is_empty() || terms.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: "expected `query_id<TAB>term...`".into(),
            });
        }
        out.push(GroundTruthIntent {
            query_id,
            terms,
            source: source.to_string(),
            flags: Vec::new(),
        });
    }
    Ok(out)
}

/// Normalized relevance-model distribution `P(w|R)` over the vocabulary of
/// the top `depth` documents, heaviest first (ties lexicographic).
///
/// `P(w|R) ∝ Σ_d P_mle(w|d) · Π_i P_jm(q_i|d)`.
pub fn rm3_weights(index: &Index, query: &Query, initial: &Ranking, depth: usize, alpha: f64) -> Vec<(String, f64)> {
    let feedback: Vec<DocIdx> = initial.top(depth).iter().map(|e| e.doc).collect();
    let q_terms: Vec<&str> = query.terms.iter().map(String::as_str).filter(|t| index.contains_term(t)).collect();

    // query likelihood of each feedback doc in log space, shifted by the max
    let log_ql: Vec<f64> = feedback
        .iter()
        .map(|&d| {
            let bag = index.bag(d);
            q_terms.iter().map(|t| jm_prob(index, t, bag, alpha).ln()).sum()
        })
        .collect();
    let max = log_ql.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let doc_weight: Vec<f64> = log_ql.iter().map(|l| (l - max).exp()).collect();

    let mut weights: std::collections::HashMap<&str, f64> = std::collections::HashMap::new();
    for (&d, &w_d) in feedback.iter().zip(&doc_weight) {
        let bag = index.bag(d);
        if bag.is_empty() {
            continue;
        }
        let len = bag.len() as f64;
        for (term, tf) in bag.terms() {
            if index.tokenizer().is_stopword(term) {
                continue;
            }
            *weights.entry(term).or_insert(0.0) += tf as f64 / len * w_d;
        }
    }
    let mut out: Vec<(String, f64)> = weights.into_iter().map(|(t, w)| (t.to_string(), w)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total: f64 = out.iter().map(|x| x.1).sum();
    out.iter_mut().for_each(|x| x.1 /= total);
    out
}

/// RM3 ground truth: the `n_terms` heaviest relevance-model terms.
pub fn rm3_expand(
    index: &Index,
    query: &Query,
    initial: &Ranking,
    depth: usize,
    n_terms: usize,
    alpha: f64,
) -> GroundTruthIntent {
    let mut flags = Vec::new();
    if initial.len() < depth {
        flags.push(Flag::ShortFeedback {
            wanted: depth,
            got: initial.len(),
        });
    }
    let weights = rm3_weights(index, query, initial, depth, alpha);
    if weights.len() < n_terms {
        flags.push(Flag::FewEligibleTerms {
            wanted: n_terms,
            got: weights.len(),
        });
    }
    GroundTruthIntent {
        query_id: query.id.clone(),
        terms: weights.into_iter().take(n_terms).map(|(t, _)| t).collect(),
        source: format!("rm3-{depth}"),
        flags,
    }
}

fn nearest_in_top_docs(
    index: &Index,
    embeddings: &EmbeddingTable,
    query: &Query,
    query_vector: &[f64],
    initial: &Ranking,
    top: usize,
    source: &str,
) -> GroundTruthIntent {
    let docs: Vec<DocIdx> = initial.top(top).iter().map(|e| e.doc).collect();
    let allowed = index.vocabulary_of(&docs);
    let (terms, short) = embeddings.nearest_terms(query_vector, &allowed, INTENT_SIZE);
    let flags = if short {
        vec![Flag::FewEligibleTerms {
            wanted: INTENT_SIZE,
            got: terms.len(),
        }]
    } else {
        Vec::new()
    };
    GroundTruthIntent {
        query_id: query.id.clone(),
        terms,
        source: source.to_string(),
        flags,
    }
}

/// EMB ground truth: the 10 embedding neighbours of the mean query vector that
/// occur in the top-10 initial documents.
pub fn emb_expand(index: &Index, embeddings: &EmbeddingTable, query: &Query, initial: &Ranking) -> Result<GroundTruthIntent> {
    let qv = embeddings.mean_vector(&query.terms, None)?;
    Ok(nearest_in_top_docs(index, embeddings, query, &qv, initial, 10, "emb"))
}

/// IDF-weighted mean vector of `terms`.
pub fn idf_query_vector<S: AsRef<str>>(index: &Index, embeddings: &EmbeddingTable, terms: &[S]) -> Result<Vec<f64>> {
    let w: Vec<f64> = terms.iter().map(|t| index.idf(t.as_ref())).collect();
    embeddings.mean_vector(terms, Some(&w))
}

/// TF-IDF-weighted mean of the embedded terms of a document.
pub fn desm_doc_vector(index: &Index, embeddings: &EmbeddingTable, doc: &TermBag) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; embeddings.dim()];
    let mut total = 0.0;
    for (term, tf) in doc.terms() {
        if let Some(v) = embeddings.get(term) {
            let w = tf as f64 * index.idf(term);
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
            total += w;
        }
    }
    (total > 0.0).then(|| acc.into_iter().map(|a| a / total).collect())
}

/// DESM ground truth: the 10 terms closest to the IDF-weighted query vector
/// that occur in the top-50 initial documents.
pub fn desm_ground_truth(index: &Index, embeddings: &EmbeddingTable, query: &Query, initial: &Ranking) -> Result<GroundTruthIntent> {
    let qv = idf_query_vector(index, embeddings, &query.terms)?;
    Ok(nearest_in_top_docs(index, embeddings, query, &qv, initial, 50, "desm"))
}

/// `γ·Π_i P_δ(q_i|d) + (1-γ)·cos(q⃗, d⃗)`.
#[derive(Clone, Debug)]
pub struct DesmScorer<'a> {
    index: &'a Index,
    embeddings: &'a EmbeddingTable,
    query_terms: Vec<String>,
    query_vector: Vec<f64>,
    ranker: ExplanationRanker,
    gamma: f64,
}

impl<'a> DesmScorer<'a> {
    pub fn new(
        index: &'a Index,
        embeddings: &'a EmbeddingTable,
        query: &Query,
        intent: &[String],
        delta: f64,
        gamma: f64,
    ) -> Result<Self> {
        let expanded: Vec<&str> = expanded_terms(&query.terms, intent);
        let query_vector = idf_query_vector(index, embeddings, &expanded)?;
        Ok(Self {
            index,
            embeddings,
            query_terms: query.terms.clone(),
            query_vector,
            ranker: ExplanationRanker::new(index, delta),
            gamma,
        })
    }

    pub fn syntactic(&self, doc: &TermBag) -> f64 {
        self.query_terms
            .iter()
            .map(|t| self.ranker.term_score(t, doc))
            .sum::<f64>()
            .exp()
    }

    pub fn semantic(&self, doc: &TermBag) -> f64 {
        desm_doc_vector(self.index, self.embeddings, doc).map_or(0.0, |dv| cosine(&self.query_vector, &dv).0)
    }

    pub fn score(&self, doc: &TermBag) -> f64 {
        self.gamma * self.syntactic(doc) + (1.0 - self.gamma) * self.semantic(doc)
    }
}

#[derive(Clone, Debug)]
enum Scorer<'a> {
    /// Jelinek-Mercer over `q ∪ G_q`.
    Lm {
        index: &'a Index,
        terms: Vec<String>,
        alpha: f64,
    },
    Desm(Box<DesmScorer<'a>>),
    /// The explanation ranker over `q ∪ G_q`.
    Planted {
        ranker: ExplanationRanker,
        terms: Vec<String>,
    },
}

impl Scorer<'_> {
    fn score(&self, doc: &TermBag) -> f64 {
        match self {
            Scorer::Lm { index, terms, alpha } => jm_score(index, terms, doc, *alpha),
            Scorer::Desm(d) => d.score(doc),
            Scorer::Planted { ranker, terms } => terms.iter().map(|t| ranker.term_score(t, doc)).sum(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxParams {
    /// Jelinek-Mercer weight on the document model.
    pub alpha: f64,
    /// DESM mixing weight.
    pub gamma: f64,
    /// Additive smoothing shared with the explanation ranker.
    pub delta: f64,
}

impl Default for BlackBoxParams {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            gamma: 0.9,
            delta: 1.0,
        }
    }
}

/// A black box bound to one query.
#[derive(Clone, Debug)]
pub struct BlackBox<'a> {
    kind: BlackBoxKind,
    mode: Agnosticism,
    query: Query,
    intent: GroundTruthIntent,
    scorer: Scorer<'a>,
}

impl<'a> BlackBox<'a> {
    #[allow(clippy::too_many_arguments)]
    /// Derive the intent for `query` from the initial ranking and bind the
    /// scorer. `planted` supplies the intent for [`BlackBoxKind::Planted`].
    pub fn build(
        kind: BlackBoxKind,
        mode: Agnosticism,
        index: &'a Index,
        embeddings: Option<&'a EmbeddingTable>,
        query: &Query,
        initial: &Ranking,
        params: BlackBoxParams,
        planted: Option<&GroundTruthIntent>,
    ) -> Result<Self> {
        let need_emb = || embeddings.ok_or_else(|| Error::Config(format!("black box `{kind}` needs embeddings")));
        let intent = match kind {
            BlackBoxKind::Rm3 { depth } => rm3_expand(index, query, initial, depth, INTENT_SIZE, params.alpha),
            BlackBoxKind::Emb => emb_expand(index, need_emb()?, query, initial)?,
            BlackBoxKind::Desm => desm_ground_truth(index, need_emb()?, query, initial)?,
            BlackBoxKind::Planted => planted
                .cloned()
                .ok_or_else(|| Error::Config(format!("no planted intent for query `{}`", query.id)))?,
        };
        let expanded: Vec<String> = expanded_terms(&query.terms, &intent.terms)
            .into_iter()
            .map(str::to_string)
            .collect();
        let scorer = match kind {
            BlackBoxKind::Rm3 { .. } | BlackBoxKind::Emb => Scorer::Lm {
                index,
                terms: expanded,
                alpha: params.alpha,
            },
            BlackBoxKind::Desm => Scorer::Desm(Box::new(DesmScorer::new(
                index,
                need_emb()?,
                query,
                &intent.terms,
                params.delta,
                params.gamma,
            )?)),
            BlackBoxKind::Planted => Scorer::Planted {
                ranker: ExplanationRanker::new(index, params.delta),
                terms: expanded,
            },
        };
        Ok(Self {
            kind,
            mode,
            query: query.clone(),
            intent,
            scorer,
        })
    }

    pub fn kind(&self) -> BlackBoxKind {
        self.kind
    }

    pub fn mode(&self) -> Agnosticism {
        self.mode
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn intent(&self) -> &GroundTruthIntent {
        &self.intent
    }

    /// The same black box seen through a different agnosticism level.
    pub fn with_mode(&self, mode: Agnosticism) -> Self {
        Self { mode, ..self.clone() }
    }

    /// Rank `pool` by internal score. Scores are exposed only when weakly
    /// agnostic.
    pub fn rank(&self, pool: &[DocIdx], index: &Index) -> Ranking {
        let scored = pool.iter().map(|&d| (d, self.scorer.score(index.bag(d)))).collect();
        let ranking = Ranking::from_scores(&self.query.id, &self.kind.to_string(), scored);
        match self.mode {
            Agnosticism::Weak => ranking,
            Agnosticism::Strong => ranking.without_scores(),
        }
    }

    /// Score an arbitrary (possibly perturbed) document.
    pub fn score(&self, doc: &TermBag) -> Result<f64> {
        match self.mode {
            Agnosticism::Weak => Ok(self.scorer.score(doc)),
            Agnosticism::Strong => Err(Error::StrongAgnostic(self.kind.to_string())),
        }
    }
}
