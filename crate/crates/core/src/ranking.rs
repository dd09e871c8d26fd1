use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Position of a document inside an [`Index`](crate::index::Index).
///
/// Documents are stored sorted by their string id, so ordering by `DocIdx`
/// is ordering by id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocIdx(pub u32);

impl DocIdx {
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub doc: DocIdx,
    pub score: Option<f64>,
}

/// An ordered permutation of documents for one query.
///
/// `position(d)` is the rank of `d` (0-based), `doc_at(i)` the document at
/// rank `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub query_id: String,
    pub origin: String,
    entries: Vec<RankEntry>,
    positions: HashMap<DocIdx, usize>,
}

/// Descending by score, ascending by document on ties.
pub(crate) fn by_score_desc(a: &(DocIdx, f64), b: &(DocIdx, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl Ranking {
    fn from_entries(query_id: &str, origin: &str, entries: Vec<RankEntry>) -> Self {
        let positions = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.doc, i))
            .collect::<HashMap<_, _>>();
        debug_assert_eq!(positions.len(), entries.len(), "duplicate doc in ranking");
        Self {
            query_id: query_id.to_string(),
            origin: origin.to_string(),
            entries,
            positions,
        }
    }

    /// Sort scored documents (descending, doc id tie-break) into a ranking.
    pub fn from_scores(query_id: &str, origin: &str, mut scored: Vec<(DocIdx, f64)>) -> Self {
        scored.sort_by(by_score_desc);
        let entries = scored
            .into_iter()
            .map(|(doc, s)| RankEntry {
                doc,
                score: Some(s),
            })
            .collect();
        Self::from_entries(query_id, origin, entries)
    }

    /// A ranking that carries only the order.
    pub fn from_order(query_id: &str, origin: &str, docs: Vec<DocIdx>) -> Self {
        let entries = docs
            .into_iter()
            .map(|doc| RankEntry { doc, score: None })
            .collect();
        Self::from_entries(query_id, origin, entries)
    }

    pub fn empty(query_id: &str, origin: &str) -> Self {
        Self::from_entries(query_id, origin, Vec::new())
    }

    /// The same order with scores stripped.
    pub fn without_scores(&self) -> Self {
        Self::from_order(&self.query_id, &self.origin, self.docs().collect())
    }

    pub fn truncate(&mut self, len: usize) {
        if len < self.entries.len() {
            for e in &self.entries[len..] {
                self.positions.remove(&e.doc);
            }
            self.entries.truncate(len);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn docs(&self) -> impl Iterator<Item = DocIdx> + '_ {
        self.entries.iter().map(|e| e.doc)
    }

    pub fn top(&self, k: usize) -> &[RankEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn has_scores(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.score.is_some())
    }

    pub fn position(&self, doc: DocIdx) -> Option<usize> {
        self.positions.get(&doc).copied()
    }

    pub fn doc_at(&self, pos: usize) -> Option<DocIdx> {
        self.entries.get(pos).map(|e| e.doc)
    }

    pub fn contains(&self, doc: DocIdx) -> bool {
        self.positions.contains_key(&doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_sorted_with_doc_tie_break() {
        let r = Ranking::from_scores(
            "q",
            "t",
            vec![(DocIdx(3), 1.0), (DocIdx(1), 2.0), (DocIdx(0), 1.0)],
        );
        assert_eq!(r.docs().collect::<Vec<_>>(), vec![DocIdx(1), DocIdx(0), DocIdx(3)]);
        assert_eq!(r.position(DocIdx(3)), Some(2));
        assert_eq!(r.doc_at(0), Some(DocIdx(1)));
        assert!(r.has_scores());
        assert!(!r.without_scores().has_scores());
    }

    #[test]
    fn truncate_keeps_positions_consistent() {
        let mut r = Ranking::from_order("q", "t", vec![DocIdx(2), DocIdx(0), DocIdx(1)]);
        r.truncate(2);
        assert_eq!(r.len(), 2);
        assert!(!r.contains(DocIdx(1)));
        assert_eq!(r.position(DocIdx(0)), Some(1));
    }
}
