//! End-to-end pipeline: retrieve, rank with the black box, select candidates,
//! build the preference matrix, solve and evaluate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blackbox::{read_intents, Agnosticism, BlackBox, BlackBoxKind, BlackBoxParams, GroundTruthIntent};
use crate::candidates::{additive_filter, reductive_filter, tfidf_candidates, CandidateSet, FilterParams};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::index::{dirichlet_retrieve, load_queries, Index, Query};
use crate::metrics::{accuracy, global_fidelity, local_fidelity, recall, EvalRecord, Summary};
use crate::preference::{build_matrix, sample_pairs, SamplingStrategy};
use crate::rankers::{expanded_terms, ExplanationRanker};
use crate::ranking::Ranking;
use crate::solver::{column_sums, greedy_select_with, PsumMode, StopRule};
use crate::synth::SyntheticCollection;
use crate::tokenize::Tokenizer;

/// Flat experiment configuration, read from TOML. Relative paths resolve
/// against the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// JSONL corpus, or an index saved by the `index` command.
    pub corpus: Option<PathBuf>,
    /// `query_id<TAB>text` per line.
    pub queries: Option<PathBuf>,
    /// GloVe-style text vectors, for `emb` and `desm`.
    pub embeddings: Option<PathBuf>,
    /// Planted intents, `query_id<TAB>term...`, for `planted`.
    pub intents: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub stem: bool,
    pub blackbox: String,
    pub mode: String,
    pub sampling: Vec<String>,
    /// Sampled pairs per query; 2500 strong, 500 weak when unset.
    pub features: Option<usize>,
    /// Extra feature counts for the accuracy/fidelity sweep.
    pub feature_sweep: Vec<usize>,
    /// TF-IDF, reductive and additive candidate caps.
    pub caps: Vec<usize>,
    /// Documents to explain.
    pub k: usize,
    /// Maximum number of intent terms.
    pub budget: usize,
    /// Documents retrieved per query.
    pub pool: usize,
    pub delta: f64,
    pub alpha: f64,
    pub mu: f64,
    pub gamma: f64,
    pub n_add: usize,
    pub reductive_sample: usize,
    pub psum: String,
    /// `non-negative` keeps adding terms that leave coverage unchanged.
    pub stop: String,
    /// Measure coverage of the query plus selected terms, and leave query
    /// terms out of the candidates.
    pub query_baseline: bool,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            queries: None,
            embeddings: None,
            intents: None,
            stopwords: None,
            stem: false,
            blackbox: "rm3-10".into(),
            mode: "strong".into(),
            sampling: SamplingStrategy::ALL.iter().map(|s| s.name().to_string()).collect(),
            features: None,
            feature_sweep: Vec::new(),
            caps: vec![1000, 500, 250],
            k: 10,
            budget: 10,
            pool: 1000,
            delta: 1.0,
            alpha: 0.4,
            mu: 2000.0,
            gamma: 0.9,
            n_add: 5,
            reductive_sample: 40,
            psum: "all-positive".into(),
            stop: "non-negative".into(),
            query_baseline: true,
            seed: 0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [
            &mut cfg.corpus,
            &mut cfg.queries,
            &mut cfg.embeddings,
            &mut cfg.intents,
            &mut cfg.stopwords,
            &mut cfg.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.blackbox_kind()?;
        self.agnosticism()?;
        self.strategies()?;
        self.psum_mode()?;
        self.stop_rule()?;
        if self.sampling.is_empty() {
            return bad("`sampling` is empty");
        }
        if self.k < 2 || self.budget == 0 || self.pool < 2 || self.n_add == 0 {
            return bad("`k` and `pool` must be at least 2; `budget` and `n_add` positive");
        }
        if !(self.delta > 0.0 && self.mu > 0.0) {
            return bad("`delta` and `mu` must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(0.0..=1.0).contains(&self.gamma) {
            return bad("`alpha` must lie in (0, 1] and `gamma` in [0, 1]");
        }
        if self.caps.is_empty() || self.caps.len() > 3 || self.caps.contains(&0) {
            return bad("`caps` takes one to three positive sizes");
        }
        if self.agnosticism()? == Agnosticism::Weak && self.caps.len() != 3 {
            return bad("weak mode needs three caps (tfidf, reductive, additive)");
        }
        if self.features == Some(0) || self.feature_sweep.contains(&0) {
            return bad("feature counts must be positive");
        }
        Ok(())
    }

    pub fn blackbox_kind(&self) -> Result<BlackBoxKind> {
        self.blackbox.parse()
    }

    pub fn agnosticism(&self) -> Result<Agnosticism> {
        self.mode.parse()
    }

    pub fn strategies(&self) -> Result<Vec<SamplingStrategy>> {
        self.sampling.iter().map(|s| s.parse()).collect()
    }

    pub fn psum_mode(&self) -> Result<PsumMode> {
        self.psum.parse()
    }

    pub fn stop_rule(&self) -> Result<StopRule> {
        self.stop.parse()
    }

    pub fn feature_count(&self) -> usize {
        match (self.features, self.agnosticism()) {
            (Some(m), _) => m,
            (None, Ok(Agnosticism::Weak)) => 500,
            (None, _) => 2500,
        }
    }

    pub fn blackbox_params(&self) -> BlackBoxParams {
        BlackBoxParams {
            alpha: self.alpha,
            gamma: self.gamma,
            delta: self.delta,
        }
    }

    /// Hash of every setting except the output directory.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&Self {
            output: None,
            ..self.clone()
        })
        .expect("config serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }

    /// Seed for a named random stream of one query.
    pub fn sub_seed(&self, stream: &str, query_id: &str) -> u64 {
        let h = Sha256::digest(format!("{}/{stream}/{query_id}", self.seed).as_bytes());
        u64::from_le_bytes(h[..8].try_into().unwrap())
    }

    /// Output stem shared by the files of one (black box, mode) run.
    pub fn run_name(&self) -> String {
        format!("{}-{}", self.blackbox, self.mode)
    }
}

/// Index, queries and optional side data for one experiment.
#[derive(Clone, Debug)]
pub struct Collection {
    pub index: Index,
    pub queries: Vec<Query>,
    pub embeddings: Option<EmbeddingTable>,
    pub intents: BTreeMap<String, GroundTruthIntent>,
}

impl Collection {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| Error::Config(format!("`{what}` is not set")))
        };
        let corpus = need(&cfg.corpus, "corpus")?;
        let index = if corpus.extension().is_some_and(|e| e == "jsonl") {
            let mut tok = Tokenizer::new().with_stemming(cfg.stem);
            if let Some(sw) = &cfg.stopwords {
                tok = tok.with_stopword_file(sw)?;
            }
            Index::from_jsonl(&tok, &corpus)?
        } else {
            Index::load(&corpus)?
        };
        let (queries, dropped) = load_queries(index.tokenizer(), &need(&cfg.queries, "queries")?)?;
        for id in dropped {
            warn!("query {id}: no terms after tokenization, skipped");
        }
        let embeddings = cfg.embeddings.as_deref().map(EmbeddingTable::load).transpose()?;
        let intents = match &cfg.intents {
            Some(p) => read_intents(p, "planted")?,
            None => Vec::new(),
        };
        Ok(Self::new(index, queries, embeddings, intents))
    }

    pub fn new(index: Index, queries: Vec<Query>, embeddings: Option<EmbeddingTable>, intents: Vec<GroundTruthIntent>) -> Self {
        Self {
            index,
            queries,
            embeddings,
            intents: intents.into_iter().map(|i| (i.query_id.clone(), i)).collect(),
        }
    }

    pub fn from_synthetic(synth: &SyntheticCollection, tokenizer: &Tokenizer) -> Result<Self> {
        let index = Index::build(tokenizer, synth.documents.iter().map(|(a, b)| (a.as_str(), b.as_str())))?;
        let queries = synth
            .queries
            .iter()
            .map(|(id, text)| Query::parse(id.as_str(), text, tokenizer))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(index, queries, Some(synth.embeddings.clone()), synth.intents.clone()))
    }

    pub fn query(&self, id: &str) -> Result<&Query> {
        self.queries
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| Error::Config(format!("unknown query `{id}`")))
    }
}

/// Per-query state shared by every sampling strategy.
#[derive(Clone, Debug)]
pub struct Prepared<'a> {
    pub query: Query,
    pub blackbox: BlackBox<'a>,
    /// The black-box ranking of the retrieved pool, as the mode exposes it.
    pub ranking: Ranking,
    pub initial: CandidateSet,
    pub filtered: CandidateSet,
}

pub fn prepare<'a>(cfg: &ExperimentConfig, coll: &'a Collection, query: &Query) -> Result<Prepared<'a>> {
    let index = &coll.index;
    let initial_run = dirichlet_retrieve(index, query, cfg.pool, cfg.mu)?;
    if initial_run.is_empty() {
        return Err(Error::EmptyRetrieval(query.id.clone()));
    }
    let blackbox = BlackBox::build(
        cfg.blackbox_kind()?,
        cfg.agnosticism()?,
        index,
        coll.embeddings.as_ref(),
        query,
        &initial_run,
        cfg.blackbox_params(),
        coll.intents.get(&query.id),
    )?;
    let pool: Vec<_> = initial_run.docs().collect();
    let ranking = blackbox.rank(&pool, index);
    let initial = tfidf_candidates(index, &pool, cfg.caps[0]);
    let filtered = match blackbox.mode() {
        Agnosticism::Strong => initial.clone(),
        Agnosticism::Weak => {
            let params = FilterParams {
                explain_k: cfg.k,
                reductive_sample: cfg.reductive_sample,
                n_add: cfg.n_add,
                seed: cfg.sub_seed("doc-sample", &query.id),
            };
            let reduced = reductive_filter(&initial, &blackbox, index, &ranking, cfg.caps[1], &params)?;
            additive_filter(&reduced, &blackbox, index, &ranking, cfg.caps[2], &params)?
        }
    };
    Ok(Prepared {
        query: query.clone(),
        blackbox,
        ranking,
        initial,
        filtered,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub term: String,
    pub values: Vec<f64>,
}

/// Intent terms plus everything needed to rescore or audit them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub query_id: String,
    pub query_terms: Vec<String>,
    pub blackbox: String,
    pub mode: String,
    pub sampling: String,
    pub features: usize,
    pub delta: f64,
    pub vocab_size: usize,
    /// Intent terms in pick order.
    pub terms: Vec<String>,
    pub coverage: usize,
    pub columns: Vec<String>,
    pub rows: Vec<TermRow>,
    pub ground_truth: Vec<String>,
    pub candidates: usize,
    pub record: EvalRecord,
    /// Document ids in black-box order.
    pub blackbox_order: Vec<String>,
    /// Black-box scores aligned with `blackbox_order`; weak mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blackbox_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
    pub fingerprint: String,
}

impl Explanation {
    pub fn ranker(&self) -> ExplanationRanker {
        ExplanationRanker::with_vocab_size(self.vocab_size, self.delta)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Explanation-ranker scores of the black-box ranking, in its order.
pub fn explanation_scores<S: AsRef<str>>(index: &Index, ranker: &ExplanationRanker, query: &[S], terms: &[S], ranking: &Ranking) -> Vec<f64> {
    ranking.docs().map(|d| ranker.score_expanded(query, terms, index.bag(d))).collect()
}

/// Sample pairs, solve for intent terms and evaluate them.
pub fn explain_prepared(
    cfg: &ExperimentConfig,
    coll: &Collection,
    prep: &Prepared<'_>,
    strategy: SamplingStrategy,
    features: usize,
) -> Result<Explanation> {
    let index = &coll.index;
    let qid = &prep.query.id;
    let sample = sample_pairs(strategy, &prep.ranking, cfg.k, features, cfg.sub_seed("sampling", qid));
    let ranker = ExplanationRanker::new(index, cfg.delta);
    let candidates = prep.filtered.terms();
    let (matrix, baseline) = if cfg.query_baseline {
        let pool: Vec<&str> = candidates.iter().copied().filter(|t| !prep.query.terms.iter().any(|q| q == t)).collect();
        let q = build_matrix(qid, &prep.query.terms, &sample.pairs, &ranker, index)?;
        let all: Vec<usize> = (0..q.n_rows()).collect();
        (build_matrix(qid, &pool, &sample.pairs, &ranker, index)?, Some(column_sums(&q, &all)))
    } else {
        (build_matrix(qid, &candidates, &sample.pairs, &ranker, index)?, None)
    };
    let selection = greedy_select_with(&matrix, cfg.budget, cfg.psum_mode()?, cfg.stop_rule()?, baseline.as_deref());

    let scores = explanation_scores(index, &ranker, &prep.query.terms, &selection.terms, &prep.ranking);
    let (local, mut flags) = local_fidelity(&prep.ranking, &scores, cfg.k)?;
    let global = global_fidelity(&prep.ranking, &scores)?;
    let truth = &prep.blackbox.intent().terms;
    flags.extend(sample.flags);
    flags.extend(prep.blackbox.intent().flags.iter().cloned());
    flags.extend(prep.initial.flags.iter().cloned());
    if prep.filtered.stage != prep.initial.stage {
        flags.extend(prep.filtered.flags.iter().cloned());
    }

    let record = EvalRecord {
        query_id: qid.clone(),
        blackbox: cfg.blackbox.clone(),
        mode: cfg.mode.clone(),
        sampling: strategy.name().into(),
        accuracy: accuracy(&selection.terms, truth),
        local_fidelity: local,
        global_fidelity: global,
        recall_c1: recall(&prep.initial.terms(), truth),
        recall_c2: recall(&candidates, truth),
        coverage: selection.coverage,
        n_pairs: sample.pairs.len(),
    };
    Ok(Explanation {
        query_id: qid.clone(),
        query_terms: prep.query.terms.clone(),
        blackbox: cfg.blackbox.clone(),
        mode: cfg.mode.clone(),
        sampling: strategy.name().into(),
        features,
        delta: cfg.delta,
        vocab_size: ranker.vocab_size(),
        terms: selection.terms.clone(),
        coverage: selection.coverage,
        columns: matrix.columns().to_vec(),
        rows: selection
            .rows
            .iter()
            .map(|&r| TermRow {
                term: matrix.term(r).to_string(),
                values: matrix.row(r).to_vec(),
            })
            .collect(),
        ground_truth: truth.clone(),
        candidates: candidates.len(),
        record,
        blackbox_order: prep.ranking.docs().map(|d| index.doc_id(d).to_string()).collect(),
        blackbox_scores: prep
            .ranking
            .has_scores()
            .then(|| prep.ranking.entries().iter().map(|e| e.score.unwrap()).collect()),
        flags,
        fingerprint: cfg.fingerprint(),
    })
}

/// Run the whole pipeline for one query and one sampling strategy.
pub fn explain_query(cfg: &ExperimentConfig, coll: &Collection, query: &Query, strategy: SamplingStrategy) -> Result<Explanation> {
    let prep = prepare(cfg, coll, query)?;
    explain_prepared(cfg, coll, &prep, strategy, cfg.feature_count())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub term: String,
    pub score_a: f64,
    pub score_b: f64,
    pub difference: f64,
}

/// Per-term breakdown of the explanation-ranker score difference of two
/// documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairExplanation {
    pub query_id: String,
    pub doc_a: String,
    pub doc_b: String,
    /// Black-box rank positions (0-based).
    pub rank_a: usize,
    pub rank_b: usize,
    pub terms: Vec<TermContribution>,
    pub total_a: f64,
    pub total_b: f64,
    pub difference: f64,
}

impl PairExplanation {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("term\t{}\t{}\tdifference\n", self.doc_a, self.doc_b);
        for t in &self.terms {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\n", t.term, t.score_a, t.score_b, t.difference));
        }
        out.push_str(&format!("total\t{:.6}\t{:.6}\t{:.6}\n", self.total_a, self.total_b, self.difference));
        out
    }
}

/// Explain why the black box orders `a` and `b` as it does. Refuses pairs the
/// explanation ranker orders strictly the other way.
pub fn explain_pair(expl: &Explanation, index: &Index, a: &str, b: &str) -> Result<PairExplanation> {
    let rank = |id: &str| {
        expl.blackbox_order
            .iter()
            .position(|d| d == id)
            .ok_or_else(|| Error::NotInPool(id.to_string()))
    };
    let (rank_a, rank_b) = (rank(a)?, rank(b)?);
    let (bag_a, bag_b) = (index.bag(index.require_doc(a)?), index.bag(index.require_doc(b)?));
    let ranker = expl.ranker();
    let terms: Vec<TermContribution> = expanded_terms(&expl.query_terms, &expl.terms)
        .into_iter()
        .map(|t| {
            let (sa, sb) = (ranker.term_score(t, bag_a), ranker.term_score(t, bag_b));
            TermContribution {
                term: t.to_string(),
                score_a: sa,
                score_b: sb,
                difference: sa - sb,
            }
        })
        .collect();
    let total_a = ranker.score_expanded(&expl.query_terms, &expl.terms, bag_a);
    let total_b = ranker.score_expanded(&expl.query_terms, &expl.terms, bag_b);
    let discordant = (rank_a < rank_b && total_a < total_b) || (rank_b < rank_a && total_b < total_a);
    if discordant {
        let (better, worse) = if rank_a < rank_b { (a, b) } else { (b, a) };
        return Err(Error::DiscordantPair {
            better: better.to_string(),
            worse: worse.to_string(),
        });
    }
    Ok(PairExplanation {
        query_id: expl.query_id.clone(),
        doc_a: a.to_string(),
        doc_b: b.to_string(),
        rank_a,
        rank_b,
        terms,
        total_a,
        total_b,
        difference: total_a - total_b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub query_id: String,
    pub sampling: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub sampling: String,
    pub features: usize,
    pub failed: usize,
    pub summary: Summary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Records at the configured feature count, grouped by strategy.
    pub records: Vec<EvalRecord>,
    pub summaries: Vec<StrategySummary>,
    /// Means for every (strategy, feature count) in the sweep.
    pub sweep: Vec<StrategySummary>,
    pub failures: Vec<Failure>,
}

impl Report {
    pub fn summary(&self, strategy: SamplingStrategy) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.sampling == strategy.name()).map(|s| &s.summary)
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = String::from(
            "sampling\tfeatures\tqueries\tfailed\taccuracy\tlocal_fidelity\tglobal_fidelity\trecall_c1\trecall_c2\n",
        );
        for s in &self.summaries {
            out.push_str(&summary_line(s, '\t'));
        }
        out
    }

    pub fn features_csv(&self, cfg: &ExperimentConfig) -> String {
        let mut out = String::from(
            "blackbox,mode,sampling,features,queries,failed,accuracy,local_fidelity,global_fidelity,recall_c1,recall_c2\n",
        );
        for s in &self.sweep {
            out.push_str(&format!("{},{},{}", cfg.blackbox, cfg.mode, summary_line(s, ',')));
        }
        out
    }

    pub fn records_tsv(&self) -> String {
        let mut out = format!("{}\n", EvalRecord::TSV_HEADER);
        for r in &self.records {
            out.push_str(&r.to_tsv_row());
            out.push('\n');
        }
        out
    }
}

fn summary_line(s: &StrategySummary, sep: char) -> String {
    let m = &s.summary;
    let fields = [
        s.sampling.clone(),
        s.features.to_string(),
        m.queries.to_string(),
        s.failed.to_string(),
        format!("{:.6}", m.accuracy),
        format!("{:.6}", m.local_fidelity),
        format!("{:.6}", m.global_fidelity),
        format!("{:.6}", m.recall_c1),
        format!("{:.6}", m.recall_c2),
    ];
    let mut line = fields.join(&sep.to_string());
    line.push('\n');
    line
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn explanation_path(cfg: &ExperimentConfig, out: &Path, query_id: &str, strategy: SamplingStrategy) -> PathBuf {
    out.join("explanations")
        .join(cfg.run_name())
        .join(format!("{query_id}.{}.json", strategy.name()))
}

type Outcome = std::result::Result<Vec<(SamplingStrategy, usize, EvalRecord)>, Failure>;

/// Explain every query with every configured strategy, aggregate, and write
/// reports when an output directory is configured. Failed queries are logged
/// and left out of the means.
pub fn run_experiment(cfg: &ExperimentConfig, coll: &Collection) -> Result<Report> {
    cfg.validate()?;
    let strategies = cfg.strategies()?;
    let main = cfg.feature_count();
    let mut counts = cfg.feature_sweep.clone();
    counts.push(main);
    counts.sort_unstable();
    counts.dedup();
    if coll.queries.is_empty() {
        warn!("no queries to explain");
    }

    let outcomes: Vec<Vec<Outcome>> = coll
        .queries
        .par_iter()
        .map(|q| {
            let prep = match prepare(cfg, coll, q) {
                Ok(p) => p,
                Err(e) => {
                    warn!("query {}: {e}", q.id);
                    return vec![Err(Failure {
                        query_id: q.id.clone(),
                        sampling: None,
                        reason: e.to_string(),
                    })];
                }
            };
            strategies
                .iter()
                .map(|&s| {
                    let mut rows = Vec::new();
                    for &m in &counts {
                        let run = explain_prepared(cfg, coll, &prep, s, m).and_then(|expl| {
                            if let (Some(out), true) = (&cfg.output, m == main) {
                                let json = serde_json::to_vec_pretty(&expl)?;
                                write_atomic(&explanation_path(cfg, out, &q.id, s), &json)?;
                            }
                            Ok(expl.record)
                        });
                        match run {
                            Ok(r) => rows.push((s, m, r)),
                            Err(e) => {
                                warn!("query {} ({s}, {m} features): {e}", q.id);
                                return Err(Failure {
                                    query_id: q.id.clone(),
                                    sampling: Some(s.name().into()),
                                    reason: e.to_string(),
                                });
                            }
                        }
                    }
                    Ok(rows)
                })
                .collect()
        })
        .collect();

    let mut report = Report::default();
    let mut all = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(rows) => all.extend(rows),
            Err(f) => report.failures.push(f),
        }
    }
    let failed = |s: SamplingStrategy| {
        report
            .failures
            .iter()
            .filter(|f| f.sampling.as_deref().is_none_or(|n| n == s.name()))
            .count()
    };
    for &s in &strategies {
        let pick = |m: usize| -> Vec<EvalRecord> {
            all.iter()
                .filter(|(st, fm, _)| *st == s && *fm == m)
                .map(|(_, _, r)| r.clone())
                .collect()
        };
        let main_records = pick(main);
        report.summaries.push(StrategySummary {
            sampling: s.name().into(),
            features: main,
            failed: failed(s),
            summary: Summary::of(&main_records),
        });
        report.records.extend(main_records);
        for &m in &counts {
            report.sweep.push(StrategySummary {
                sampling: s.name().into(),
                features: m,
                failed: failed(s),
                summary: Summary::of(&pick(m)),
            });
        }
    }
    if !report.failures.is_empty() {
        warn!("{} query runs failed and are excluded from the means", report.failures.len());
    }

    if let Some(out) = &cfg.output {
        let stem = cfg.run_name();
        write_atomic(&out.join(format!("{stem}.records.tsv")), report.records_tsv().as_bytes())?;
        write_atomic(&out.join(format!("{stem}.summary.tsv")), report.summary_tsv().as_bytes())?;
        write_atomic(&out.join(format!("{stem}.features.csv")), report.features_csv(cfg).as_bytes())?;
        info!("wrote {} records to {}", report.records.len(), out.display());
    }
    Ok(report)
}
