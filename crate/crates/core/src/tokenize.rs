//! Deterministic bag-of-words tokenizer.
//!
//! Text is lowercased and split on every non-alphanumeric character. Tokens
//! shorter than two characters and stopwords are dropped. Stemming (English
//! Snowball) is available but off by default.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder written over removed words during reductive perturbation.
///
/// It contains characters the tokenizer never emits, so it can never collide
/// with an indexed term.
pub const OOV_TOKEN: &str = "<oov>";

/// Bundled English stopword list.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "aren", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "didn", "do", "does", "doesn", "doing", "don", "down",
    "during", "each", "few", "for", "from", "further", "had", "hadn", "has", "hasn", "have",
    "haven", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how",
    "if", "in", "into", "is", "isn", "it", "its", "itself", "just", "ll", "me", "might", "more",
    "most", "must", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "re", "same",
    "shan", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "ve", "very", "was", "wasn", "we", "were", "weren", "what",
    "when", "where", "which", "while", "who", "whom", "why", "will", "with", "won", "would",
    "you", "your", "yours", "yourself", "yourselves",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    stopwords: BTreeSet<String>,
    stem: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self {
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            stem: false,
        }
    }
}

impl Tokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_stemming(mut self, stem: bool) -> Self {
        self.stem = stem;
        self
    }

    pub fn stemming(&self) -> bool {
        self.stem
    }

    /// Replace the stopword list with the contents of a file (one word per line).
    pub fn with_stopword_file(mut self, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.stopwords = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Ok(self)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let stemmer = self.stem.then(|| Stemmer::create(Algorithm::English));
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|raw| !raw.is_empty())
            .map(str::to_lowercase)
            .filter(|t| t.chars().count() >= 2 && !self.stopwords.contains(t))
            .filter_map(|t| match &stemmer {
                Some(s) => {
                    let stemmed = s.stem(&t).into_owned();
                    (stemmed.chars().count() >= 2).then_some(stemmed)
                }
                None => Some(t),
            })
            .collect()
    }
}

/// Tokenize with the default configuration.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_and_punctuation() {
        assert_eq!(tokenize("Afghan FLAG!"), vec!["afghan", "flag"]);
    }

    #[test]
    fn filters_short_tokens_and_stopwords() {
        assert!(tokenize("a I ,").is_empty());
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn splits_hyphens_and_drops_stopwords() {
        assert_eq!(
            tokenize("health-hazards of asbestos"),
            vec!["health", "hazards", "asbestos"]
        );
    }

    #[test]
    fn oov_token_is_never_emitted() {
        assert!(tokenize(OOV_TOKEN).iter().all(|t| t != OOV_TOKEN));
    }

    #[test]
    fn stemming_is_opt_in() {
        let plain = Tokenizer::new();
        let stemmed = Tokenizer::new().with_stemming(true);
        assert_eq!(plain.tokenize("hazards"), vec!["hazards"]);
        assert_eq!(stemmed.tokenize("hazards"), vec!["hazard"]);
    }

    #[test]
    fn custom_stopwords() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stop.txt");
        fs::write(&path, "flag\n\n").unwrap();
        let t = Tokenizer::new().with_stopword_file(&path).unwrap();
        assert_eq!(t.tokenize("the afghan flag"), vec!["the", "afghan"]);
    }

    proptest::proptest! {
        #[test]
        fn retokenizing_is_a_fixed_point(text in "[ -~]{0,80}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            proptest::prop_assert_eq!(once, twice);
        }
    }
}
