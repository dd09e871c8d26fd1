//! Word vectors in the plain-text GloVe layout and the vector operations the
//! embedding-based black boxes need.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    /// Insert a vector. Rejects wrong dimensionality and non-finite entries.
    pub fn insert(&mut self, word: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch(self.dim, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("non-finite embedding entry".into()));
        }
        self.vectors.insert(word.into(), v);
        Ok(())
    }

    /// Parse `word x1 x2 ... xd` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut table: Option<Self> = None;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = n + 1;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else {
                continue;
            };
            let v = parts
                .map(|x| x.parse::<f64>().map_err(|e| parse_err(lineno, format!("`{x}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if v.is_empty() {
                return Err(parse_err(lineno, "missing vector components".into()));
            }
            let t = table.get_or_insert_with(|| Self::new(v.len()));
            if v.len() != t.dim {
                return Err(parse_err(
                    lineno,
                    format!("expected {} components, found {}", t.dim, v.len()),
                ));
            }
            t.insert(word, v)
                .map_err(|e| parse_err(lineno, e.to_string()))?;
        }
        table.ok_or_else(|| Error::EmptyFile {
            path: path.to_path_buf(),
        })
    }

    /// Deterministic pseudo-random unit vectors for the given words.
    pub fn synthetic<S: AsRef<str>>(words: &[S], dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = Self::new(dim);
        for w in words {
            let v = random_unit(&mut rng, dim);
            table.vectors.insert(w.as_ref().to_string(), v);
        }
        table
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    /// Weighted mean of the vectors of `terms`; terms without a vector are
    /// skipped. `weights`, when given, is aligned with `terms`.
    pub fn mean_vector<S: AsRef<str>>(&self, terms: &[S], weights: Option<&[f64]>) -> Result<Vec<f64>> {
        if let Some(w) = weights {
            if w.len() != terms.len() {
                return Err(Error::LengthMismatch(terms.len(), w.len()));
            }
        }
        let mut acc = vec![0.0; self.dim];
        let mut total = 0.0;
        for (i, t) in terms.iter().enumerate() {
            let Some(v) = self.get(t.as_ref()) else {
                continue;
            };
            let w = weights.map_or(1.0, |w| w[i]);
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
            total += w;
        }
        if total == 0.0 {
            return Err(Error::NoEmbeddedTerms);
        }
        acc.iter_mut().for_each(|a| *a /= total);
        Ok(acc)
    }

    /// The `n` terms of `allowed` closest to `v` by cosine, best first, ties
    /// broken lexicographically. Exhaustive scan. The flag is set when fewer
    /// than `n` eligible terms exist.
    pub fn nearest_terms<S: AsRef<str>>(&self, v: &[f64], allowed: &[S], n: usize) -> (Vec<String>, bool) {
        let mut scored: Vec<(&str, f64)> = allowed
            .iter()
            .filter_map(|t| {
                let t = t.as_ref();
                self.get(t).map(|e| (t, cosine(v, e).0))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored.dedup_by(|a, b| a.0 == b.0);
        let short = scored.len() < n;
        scored.truncate(n);
        (scored.into_iter().map(|(t, _)| t.to_string()).collect(), short)
    }
}

pub(crate) fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Cosine similarity. A zero vector yields `(0.0, true)`; the flag marks the
/// degenerate case.
pub fn cosine(u: &[f64], v: &[f64]) -> (f64, bool) {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return (0.0, true);
    }
    ((dot / (nu * nv)).clamp(-1.0, 1.0), false)
}
