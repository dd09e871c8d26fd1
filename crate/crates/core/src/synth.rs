//! Seeded synthetic collection with planted query intents.
//!
//! Background text follows a Zipfian distribution over a generated
//! vocabulary. Each query owns a topic: two query terms drawn from the
//! mid-frequency band and ten intent terms drawn from the tail. Topical
//! documents mix their topic's terms into background text at a per-document
//! intensity, so relevance is graded rather than binary.

use std::fs;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blackbox::{write_intents, GroundTruthIntent, INTENT_SIZE};
use crate::embeddings::{random_unit, EmbeddingTable};
use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub docs: usize,
    pub vocab: usize,
    pub queries: usize,
    pub query_terms: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of documents assigned to some topic.
    pub topical: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            docs: 600,
            vocab: 3000,
            queries: 25,
            query_terms: 2,
            min_len: 80,
            max_len: 160,
            topical: 0.6,
            dim: 32,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCollection {
    pub documents: Vec<(String, String)>,
    pub queries: Vec<(String, String)>,
    pub intents: Vec<GroundTruthIntent>,
    pub embeddings: EmbeddingTable,
}

const SYLLABLES: [&str; 24] = [
    "ba", "ke", "li", "mo", "nu", "pa", "re", "si", "to", "vu", "za", "de", "fi", "go", "hu", "ja", "ko", "lu", "me",
    "ni", "po", "ra", "su", "ti",
];

/// Distinct pronounceable words that survive tokenization unchanged.
fn vocabulary(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let tok = Tokenizer::new();
    let mut seen = std::collections::HashSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syl = rng.gen_range(2..=4);
        let w: String = (0..syl).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect();
        if !tok.is_stopword(&w) && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

impl SyntheticCollection {
    pub fn generate(p: &SynthParams) -> Result<Self> {
        let topic_words = p.queries * (p.query_terms + INTENT_SIZE);
        if p.vocab < 600 + topic_words || p.queries == 0 || p.min_len == 0 || p.max_len < p.min_len {
            return Err(Error::Config("synthetic parameters too small".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let vocab = vocabulary(p.vocab, &mut rng);
        let zipf = WeightedIndex::new((1..=p.vocab).map(|r| 1.0 / r as f64)).unwrap();

        // query terms from the mid band, intent terms from the tail
        let mut mid: Vec<usize> = (30..30 + 6 * p.queries * p.query_terms).collect();
        mid.shuffle(&mut rng);
        let mut tail: Vec<usize> = (600..p.vocab).collect();
        tail.shuffle(&mut rng);
        let topics: Vec<(Vec<usize>, Vec<usize>)> = (0..p.queries)
            .map(|t| {
                let q = mid[t * p.query_terms..(t + 1) * p.query_terms].to_vec();
                let g = tail[t * INTENT_SIZE..(t + 1) * INTENT_SIZE].to_vec();
                (q, g)
            })
            .collect();

        let mut documents = Vec::with_capacity(p.docs);
        for i in 0..p.docs {
            let len = rng.gen_range(p.min_len..=p.max_len);
            let topic = rng.gen_bool(p.topical).then(|| rng.gen_range(0..p.queries));
            let intensity = rng.gen_range(0.03..0.35);
            let mut words = Vec::with_capacity(len);
            for _ in 0..len {
                let w = match &topic {
                    Some(t) if rng.gen_bool(intensity) => {
                        let (q, g) = &topics[*t];
                        // query terms carry a third of the topical mass
                        if rng.gen_bool(1.0 / 3.0) {
                            q[rng.gen_range(0..q.len())]
                        } else {
                            // skewed so some intent terms are rarer than others
                            let r = rng.gen_range(0.0f64..1.0);
                            g[((r * r) * g.len() as f64) as usize]
                        }
                    }
                    _ => zipf.sample(&mut rng),
                };
                words.push(vocab[w].as_str());
            }
            documents.push((format!("d{i:05}"), words.join(" ")));
        }

        let queries = topics
            .iter()
            .enumerate()
            .map(|(t, (q, _))| {
                let text: Vec<&str> = q.iter().map(|&w| vocab[w].as_str()).collect();
                (format!("q{:03}", t + 1), text.join(" "))
            })
            .collect();
        let intents = topics
            .iter()
            .enumerate()
            .map(|(t, (_, g))| GroundTruthIntent {
                query_id: format!("q{:03}", t + 1),
                terms: g.iter().map(|&w| vocab[w].clone()).collect(),
                source: "planted".into(),
                flags: Vec::new(),
            })
            .collect();

        // topic words cluster around a per-topic centre
        let mut embeddings = EmbeddingTable::new(p.dim);
        let mut placed = vec![false; p.vocab];
        for (q, g) in &topics {
            let centre = random_unit(&mut rng, p.dim);
            for &w in q.iter().chain(g) {
                let noise = random_unit(&mut rng, p.dim);
                let v = centre.iter().zip(&noise).map(|(c, n)| c + 0.35 * n).collect();
                embeddings.insert(vocab[w].clone(), v)?;
                placed[w] = true;
            }
        }
        for (w, word) in vocab.iter().enumerate() {
            if !placed[w] {
                embeddings.insert(word.clone(), random_unit(&mut rng, p.dim))?;
            }
        }

        Ok(Self {
            documents,
            queries,
            intents,
            embeddings,
        })
    }

    /// Write `corpus.jsonl`, `queries.tsv`, `intents.tsv` and `embeddings.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut corpus = String::new();
        for (id, text) in &self.documents {
            corpus.push_str(&serde_json::to_string(&serde_json::json!({ "id": id, "text": text }))?);
            corpus.push('\n');
        }
        let path = dir.join("corpus.jsonl");
        fs::write(&path, corpus).map_err(|e| Error::io(&path, e))?;

        let queries: String = self.queries.iter().map(|(id, text)| format!("{id}\t{text}\n")).collect();
        let path = dir.join("queries.tsv");
        fs::write(&path, queries).map_err(|e| Error::io(&path, e))?;

        write_intents(&dir.join("intents.tsv"), &self.intents)?;

        let mut words: Vec<&str> = self.documents.iter().flat_map(|(_, t)| t.split(' ')).collect();
        words.sort_unstable();
        words.dedup();
        let mut emb = String::new();
        for w in words {
            if let Some(v) = self.embeddings.get(w) {
                emb.push_str(w);
                for x in v {
                    emb.push(' ');
                    emb.push_str(&x.to_string());
                }
                emb.push('\n');
            }
        }
        let path = dir.join("embeddings.txt");
        fs::write(&path, emb).map_err(|e| Error::io(&path, e))
    }
}
