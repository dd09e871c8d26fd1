use std::fmt;

use serde::{Deserialize, Serialize};

/// A non-fatal condition worth reporting alongside a result.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    /// Fewer feedback documents than the configured depth.
    ShortFeedback { wanted: usize, got: usize },
    /// Fewer eligible expansion terms than requested.
    FewEligibleTerms { wanted: usize, got: usize },
    /// Candidate vocabulary smaller than the cap.
    SmallVocabulary { wanted: usize, got: usize },
    /// A perturbation filter found fewer positive deltas than it may keep.
    FewPositiveDeltas { stage: String, wanted: usize, got: usize },
    /// Candidates no filter document could observe; retained.
    UnobservedCandidates { stage: String, count: usize },
    /// Ranking shorter than the requested depth.
    ShortRanking { wanted: usize, got: usize },
    /// Not enough distinct pairs to sample.
    PairsExhausted { wanted: usize, got: usize },
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::ShortFeedback { wanted, got } => write!(f, "only {got} of {wanted} feedback docs"),
            Flag::FewEligibleTerms { wanted, got } => write!(f, "only {got} of {wanted} eligible terms"),
            Flag::SmallVocabulary { wanted, got } => write!(f, "vocabulary of {got} below cap {wanted}"),
            Flag::FewPositiveDeltas { stage, wanted, got } => {
                write!(f, "{stage}: {got} positive deltas for {wanted} slots")
            }
            Flag::UnobservedCandidates { stage, count } => write!(f, "{stage}: {count} unobserved candidates retained"),
            Flag::ShortRanking { wanted, got } => write!(f, "ranking has {got} of {wanted} docs"),
            Flag::PairsExhausted { wanted, got } => write!(f, "sampled {got} of {wanted} pairs"),
        }
    }
}
