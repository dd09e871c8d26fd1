//! Immutable inverted index over a tokenized corpus, plus initial retrieval.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{DocIdx, Ranking};
use crate::tokenize::Tokenizer;

/// A document as a token sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            id: id.into(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tf(&self, term: &str) -> u32 {
        self.tokens.iter().filter(|t| *t == term).count() as u32
    }

    pub fn bag(&self) -> TermBag {
        TermBag::from_tokens(&self.tokens)
    }
}

/// Term frequencies and length of a document. All scorers read documents
/// through this view, which is what lets them score perturbed documents that
/// are not part of the index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TermBag {
    counts: BTreeMap<String, u32>,
    len: usize,
}

impl TermBag {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut counts = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.as_ref().to_string()).or_insert(0) += 1;
        }
        Self {
            counts,
            len: tokens.len(),
        }
    }

    pub fn tf(&self, term: &str) -> u32 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Terms in lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermStats {
    /// `(doc, tf)` sorted by doc.
    pub postings: Vec<(DocIdx, u32)>,
    pub cf: u64,
}

impl TermStats {
    pub fn df(&self) -> usize {
        self.postings.len()
    }
}

#[derive(Clone, Debug)]
struct IndexedDoc {
    doc: Document,
    bag: TermBag,
}

#[derive(Clone, Debug)]
pub struct Index {
    docs: Vec<IndexedDoc>,
    ids: HashMap<String, DocIdx>,
    terms: BTreeMap<String, TermStats>,
    total_tokens: u64,
    tokenizer: Tokenizer,
}

#[derive(Serialize, Deserialize)]
struct StoredIndex {
    tokenizer: Tokenizer,
    documents: Vec<Document>,
}

impl Index {
    /// Tokenize and index raw `(id, text)` pairs.
    pub fn build<I, S, T>(tokenizer: &Tokenizer, documents: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let docs = documents
            .into_iter()
            .map(|(id, text)| Document::new(id, tokenizer.tokenize(text.as_ref())))
            .collect();
        Self::from_documents(tokenizer.clone(), docs)
    }

    /// Index already-tokenized documents.
    pub fn from_documents(tokenizer: Tokenizer, mut docs: Vec<Document>) -> Result<Self> {
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = docs.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateDocId(w[0].id.clone()));
        }

        let mut terms: BTreeMap<String, TermStats> = BTreeMap::new();
        let mut ids = HashMap::with_capacity(docs.len());
        let mut total_tokens = 0u64;
        let mut indexed = Vec::with_capacity(docs.len());

        for (i, doc) in docs.into_iter().enumerate() {
            let idx = DocIdx(i as u32);
            let bag = doc.bag();
            for (term, tf) in bag.terms() {
                let stats = terms.entry(term.to_string()).or_default();
                stats.postings.push((idx, tf));
                stats.cf += tf as u64;
            }
            total_tokens += doc.len() as u64;
            ids.insert(doc.id.clone(), idx);
            indexed.push(IndexedDoc { doc, bag });
        }

        Ok(Self {
            docs: indexed,
            ids,
            terms,
            total_tokens,
            tokenizer,
        })
    }

    /// Load a JSONL corpus: one `{"id": ..., "text": ...}` object per line.
    pub fn from_jsonl(tokenizer: &Tokenizer, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            id: String,
            text: String,
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut raw = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })?;
            raw.push((parsed.id, parsed.text));
        }
        Self::build(tokenizer, raw)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let stored = StoredIndex {
            tokenizer: self.tokenizer.clone(),
            documents: self.docs.iter().map(|d| d.doc.clone()).collect(),
        };
        let json = serde_json::to_string(&stored)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stored: StoredIndex = serde_json::from_str(&text)?;
        Self::from_documents(stored.tokenizer, stored.documents)
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.terms.len()
    }

    /// Vocabulary in lexicographic order.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn term_stats(&self, term: &str) -> Option<&TermStats> {
        self.terms.get(term)
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.terms.contains_key(term)
    }

    pub fn cf(&self, term: &str) -> u64 {
        self.terms.get(term).map_or(0, |s| s.cf)
    }

    pub fn df(&self, term: &str) -> usize {
        self.terms.get(term).map_or(0, TermStats::df)
    }

    /// Collection probability `cf / total_tokens`.
    pub fn collection_prob(&self, term: &str) -> f64 {
        if self.total_tokens == 0 {
            return 0.0;
        }
        self.cf(term) as f64 / self.total_tokens as f64
    }

    /// `ln((N + 1) / (df + 1)) + 1`; defined for unseen terms.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        ((n + 1.0) / (self.df(term) as f64 + 1.0)).ln() + 1.0
    }

    pub fn doc_idx(&self, id: &str) -> Option<DocIdx> {
        self.ids.get(id).copied()
    }

    pub fn require_doc(&self, id: &str) -> Result<DocIdx> {
        self.doc_idx(id).ok_or_else(|| Error::UnknownDoc(id.to_string()))
    }

    pub fn doc_id(&self, doc: DocIdx) -> &str {
        &self.docs[doc.get()].doc.id
    }

    pub fn document(&self, doc: DocIdx) -> &Document {
        &self.docs[doc.get()].doc
    }

    pub fn bag(&self, doc: DocIdx) -> &TermBag {
        &self.docs[doc.get()].bag
    }

    pub fn doc_len(&self, doc: DocIdx) -> usize {
        self.docs[doc.get()].bag.len()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = DocIdx> {
        (0..self.docs.len() as u32).map(DocIdx)
    }

    /// Distinct terms occurring in any of `docs`, in lexicographic order.
    pub fn vocabulary_of(&self, docs: &[DocIdx]) -> Vec<String> {
        let mut seen: HashSet<&str> = HashSet::new();
        for &d in docs {
            seen.extend(self.bag(d).terms().map(|(t, _)| t));
        }
        let mut out: Vec<String> = seen.into_iter().map(str::to_string).collect();
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub terms: Vec<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, terms: Vec<String>) -> Result<Self> {
        let id = id.into();
        if terms.is_empty() {
            return Err(Error::EmptyQuery(id));
        }
        Ok(Self { id, terms })
    }

    pub fn parse(id: impl Into<String>, text: &str, tokenizer: &Tokenizer) -> Result<Self> {
        Self::new(id, tokenizer.tokenize(text))
    }

    /// Distinct query terms in first-occurrence order.
    pub fn unique_terms(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.terms
            .iter()
            .map(String::as_str)
            .filter(|t| seen.insert(*t))
            .collect()
    }
}

/// Read a `query_id<TAB>text` file. Queries that tokenize to nothing are
/// returned in the second vector so callers can report them.
pub fn load_queries(tokenizer: &Tokenizer, path: &Path) -> Result<(Vec<Query>, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut queries = Vec::new();
    let mut dropped = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: "expected `query_id<TAB>text`".into(),
        })?;
        match Query::parse(id.trim(), body, tokenizer) {
            Ok(q) => queries.push(q),
            Err(Error::EmptyQuery(id)) => dropped.push(id),
            Err(e) => return Err(e),
        }
    }
    Ok((queries, dropped))
}

/// Query-likelihood retrieval with Dirichlet smoothing.
///
/// Only documents containing at least one in-vocabulary query term are
/// scored. Terms absent from the collection are ignored; if every query term
/// is absent the ranking is empty.
pub fn dirichlet_retrieve(index: &Index, query: &Query, pool_size: usize, mu: f64) -> Result<Ranking> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let origin = "dirichlet";
    let terms: Vec<(&str, f64)> = query
        .terms
        .iter()
        .filter(|t| index.contains_term(t))
        .map(|t| (t.as_str(), index.collection_prob(t)))
        .collect();
    if terms.is_empty() {
        return Ok(Ranking::empty(&query.id, origin));
    }

    let mut matched: Vec<DocIdx> = terms
        .iter()
        .flat_map(|(t, _)| index.term_stats(t).unwrap().postings.iter().map(|p| p.0))
        .collect();
    matched.sort_unstable();
    matched.dedup();

    let scored = matched
        .into_iter()
        .map(|d| {
            let bag = index.bag(d);
            let denom = bag.len() as f64 + mu;
            let s: f64 = terms
                .iter()
                .map(|(t, pc)| ((bag.tf(t) as f64 + mu * pc) / denom).ln())
                .sum();
            (d, s)
        })
        .collect();
    let mut ranking = Ranking::from_scores(&query.id, origin, scored);
    ranking.truncate(pool_size);
    Ok(ranking)
}
