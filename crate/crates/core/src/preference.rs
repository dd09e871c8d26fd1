//! Preference pairs sampled from a black-box ranking, and the
//! candidate × pair matrix of explanation-ranker score differences.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::index::Index;
use crate::rankers::ExplanationRanker;
use crate::ranking::{DocIdx, Ranking};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSource {
    Topk,
    Sampled,
}

/// `better ≻ worse` in the black-box ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePair {
    pub better: DocIdx,
    pub worse: DocIdx,
    pub source: PairSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplingStrategy {
    /// Uniform pairs over the whole ranking.
    Random,
    /// Pairs weighted by `1/rank(a) + 1/rank(b)`.
    RankBiased,
    /// All pairs among the top k only.
    Topk,
    /// Top-k pairs plus uniform pairs.
    TopkRandom,
    /// Top-k pairs plus pairs whose first document is rank-biased and second
    /// uniform.
    TopkRankRandom,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 5] = [
        Self::Random,
        Self::TopkRandom,
        Self::TopkRankRandom,
        Self::RankBiased,
        Self::Topk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::RankBiased => "rank-biased",
            Self::Topk => "topk",
            Self::TopkRandom => "topk-random",
            Self::TopkRankRandom => "topk-rank-random",
        }
    }

    fn includes_topk(self) -> bool {
        matches!(self, Self::Topk | Self::TopkRandom | Self::TopkRankRandom)
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sampling `{s}` (random|rank-biased|topk|topk-random|topk-rank-random)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub pairs: Vec<PreferencePair>,
    pub flags: Vec<Flag>,
}

fn oriented(ranking: &Ranking, a: usize, b: usize, source: PairSource) -> PreferencePair {
    let (hi, lo) = if a < b { (a, b) } else { (b, a) };
    PreferencePair {
        better: ranking.doc_at(hi).unwrap(),
        worse: ranking.doc_at(lo).unwrap(),
        source,
    }
}

/// All `k(k-1)/2` pairs among the top `k`.
pub fn topk_pairs(ranking: &Ranking, k: usize) -> PairSample {
    let n = k.min(ranking.len());
    let mut flags = Vec::new();
    if n < k {
        flags.push(Flag::ShortRanking {
            wanted: k,
            got: ranking.len(),
        });
    }
    let pairs = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| oriented(ranking, i, j, PairSource::Topk))
        .collect();
    PairSample { pairs, flags }
}

/// Draw one unordered position pair. Rank-biased draws pick one endpoint
/// with probability ∝ 1/rank and the other uniformly, which makes the
/// probability of a pair proportional to `1/rank(a) + 1/rank(b)`.
fn draw(rng: &mut ChaCha8Rng, n: usize, biased: Option<&WeightedIndex<f64>>) -> (usize, usize) {
    let a = match biased {
        Some(w) => w.sample(rng),
        None => rng.gen_range(0..n),
    };
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Sample preference pairs from `ranking`.
///
/// `k` is the top-k depth for strategies that include top-k pairs; `m` is the
/// number of sampled pairs on top of them (ignored by [`SamplingStrategy::Topk`]).
/// Pairs are distinct and oriented better-first.
pub fn sample_pairs(strategy: SamplingStrategy, ranking: &Ranking, k: usize, m: usize, seed: u64) -> PairSample {
    let mut sample = if strategy.includes_topk() {
        topk_pairs(ranking, k)
    } else {
        PairSample {
            pairs: Vec::new(),
            flags: Vec::new(),
        }
    };
    if strategy == SamplingStrategy::Topk || m == 0 {
        return sample;
    }

    let n = ranking.len();
    let mut seen: HashSet<(usize, usize)> = sample
        .pairs
        .iter()
        .map(|p| (ranking.position(p.better).unwrap(), ranking.position(p.worse).unwrap()))
        .collect();
    let total = n * n.saturating_sub(1) / 2;
    let available = total - seen.len();

    if m >= available {
        // everything left, in position order
        for i in 0..n {
            for j in i + 1..n {
                if seen.insert((i, j)) {
                    sample.pairs.push(oriented(ranking, i, j, PairSource::Sampled));
                }
            }
        }
        if m > available {
            sample.flags.push(Flag::PairsExhausted {
                wanted: m,
                got: available,
            });
        }
        return sample;
    }

    let weights = match strategy {
        SamplingStrategy::RankBiased | SamplingStrategy::TopkRankRandom => {
            Some(WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).expect("positive weights"))
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = 0;
    let mut attempts = 0;
    let max_attempts = 50 * m;
    while drawn < m && attempts < max_attempts {
        attempts += 1;
        let (a, b) = draw(&mut rng, n, weights.as_ref());
        if seen.insert((a.min(b), a.max(b))) {
            sample.pairs.push(oriented(ranking, a, b, PairSource::Sampled));
            drawn += 1;
        }
    }
    if drawn < m {
        sample.flags.push(Flag::PairsExhausted { wanted: m, got: drawn });
    }
    sample
}

/// `S_E(w, better) - S_E(w, worse)`.
pub fn pair_score(ranker: &ExplanationRanker, index: &Index, term: &str, pair: &PreferencePair) -> f64 {
    ranker.term_score(term, index.bag(pair.better)) - ranker.term_score(term, index.bag(pair.worse))
}

/// Dense candidate × pair matrix. Columns are labelled `better>worse` with
/// document ids so a matrix can be saved and solved without the index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceMatrix {
    pub query_id: String,
    terms: Vec<String>,
    columns: Vec<String>,
    values: Vec<f64>,
}

impl PreferenceMatrix {
    /// Build from row vectors. Rows must have equal length and finite values;
    /// terms must be distinct.
    pub fn from_rows(query_id: &str, terms: Vec<String>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if terms.len() != rows.len() {
            return Err(Error::LengthMismatch(terms.len(), rows.len()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = terms.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(Error::Config(format!("duplicate matrix row `{dup}`")));
        }
        let mut values = Vec::with_capacity(terms.len() * columns.len());
        for row in rows {
            if row.len() != columns.len() {
                return Err(Error::LengthMismatch(columns.len(), row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite matrix value".into()));
            }
            values.extend(row);
        }
        Ok(Self {
            query_id: query_id.to_string(),
            terms,
            columns,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.terms.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, row: usize) -> &str {
        &self.terms[row]
    }

    pub fn row_of(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.n_cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    /// Header `term<TAB>pair...`, then one row per term.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("term");
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (i, t) in self.terms.iter().enumerate() {
            out.push_str(t);
            for v in self.row(i) {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(query_id: &str, text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse {
            path: "<matrix>".into(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let columns: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
        let mut terms = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines {
            let mut fields = line.split('\t');
            terms.push(fields.next().unwrap_or_default().to_string());
            let row = fields
                .map(|v| v.parse::<f64>().map_err(|e| bad(n + 1, format!("`{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(query_id, terms, columns, rows)
    }
}

pub fn pair_label(index: &Index, pair: &PreferencePair) -> String {
    format!("{}>{}", index.doc_id(pair.better), index.doc_id(pair.worse))
}

/// Evaluate `pair_score` for every (candidate, pair) cell.
pub fn build_matrix<S: AsRef<str> + Sync>(
    query_id: &str,
    candidates: &[S],
    pairs: &[PreferencePair],
    ranker: &ExplanationRanker,
    index: &Index,
) -> Result<PreferenceMatrix> {
    // score each distinct document once per row
    let mut docs: Vec<DocIdx> = pairs.iter().flat_map(|p| [p.better, p.worse]).collect();
    docs.sort_unstable();
    docs.dedup();
    let slot = |d: DocIdx| docs.binary_search(&d).unwrap();
    let cols: Vec<(usize, usize)> = pairs.iter().map(|p| (slot(p.better), slot(p.worse))).collect();

    let rows: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|term| {
            let per_doc: Vec<f64> = docs.iter().map(|&d| ranker.term_score(term.as_ref(), index.bag(d))).collect();
            cols.iter().map(|&(b, w)| per_doc[b] - per_doc[w]).collect()
        })
        .collect();
    PreferenceMatrix::from_rows(
        query_id,
        candidates.iter().map(|c| c.as_ref().to_string()).collect(),
        pairs.iter().map(|p| pair_label(index, p)).collect(),
        rows,
    )
}
