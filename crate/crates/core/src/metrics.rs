//! Rank correlation, fidelity and term-recovery metrics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::ranking::Ranking;

fn sgn(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Kendall's tau over paired scores: `2/(n(n-1)) Σ_{i<j} sgn(x_i-x_j) sgn(y_i-y_j)`.
/// Ties contribute zero.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewItems(n));
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += sgn(x[i] - x[j]) * sgn(y[i] - y[j]);
        }
    }
    Ok(2.0 * s as f64 / (n * (n - 1)) as f64)
}

/// Black-box scores of the ranking, or negated positions when it carries no
/// scores.
pub fn reference_scores(bb: &Ranking) -> Vec<f64> {
    bb.entries()
        .iter()
        .enumerate()
        .map(|(pos, e)| match e.score {
            Some(s) if bb.has_scores() => s,
            _ => -(pos as f64),
        })
        .collect()
}

/// Tau between the black-box ranking and explanation scores aligned with it,
/// restricted to the first `depth` documents (all when `None`).
pub fn fidelity(bb: &Ranking, explained: &[f64], depth: Option<usize>) -> Result<(f64, Vec<Flag>)> {
    if explained.len() != bb.len() {
        return Err(Error::LengthMismatch(bb.len(), explained.len()));
    }
    let mut flags = Vec::new();
    let n = match depth {
        Some(k) if k > bb.len() => {
            flags.push(Flag::ShortRanking { wanted: k, got: bb.len() });
            bb.len()
        }
        Some(k) => k,
        None => bb.len(),
    };
    let x = reference_scores(bb);
    Ok((kendall_tau(&x[..n], &explained[..n])?, flags))
}

pub fn local_fidelity(bb: &Ranking, explained: &[f64], k: usize) -> Result<(f64, Vec<Flag>)> {
    fidelity(bb, explained, Some(k))
}

pub fn global_fidelity(bb: &Ranking, explained: &[f64]) -> Result<f64> {
    fidelity(bb, explained, None).map(|(t, _)| t)
}

fn overlap<A: AsRef<str>, B: AsRef<str>>(found: &[A], truth: &[B]) -> f64 {
    let truth: HashSet<&str> = truth.iter().map(AsRef::as_ref).collect();
    if truth.is_empty() {
        return 0.0;
    }
    let found: HashSet<&str> = found.iter().map(AsRef::as_ref).collect();
    found.intersection(&truth).count() as f64 / truth.len() as f64
}

/// `|T ∩ G| / |G|`.
pub fn accuracy<A: AsRef<str>, B: AsRef<str>>(selected: &[A], truth: &[B]) -> f64 {
    overlap(selected, truth)
}

/// `|C ∩ G| / |G|`.
pub fn recall<A: AsRef<str>, B: AsRef<str>>(candidates: &[A], truth: &[B]) -> f64 {
    overlap(candidates, truth)
}

/// Per-query evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub blackbox: String,
    pub mode: String,
    pub sampling: String,
    pub accuracy: f64,
    pub local_fidelity: f64,
    pub global_fidelity: f64,
    pub recall_c1: f64,
    pub recall_c2: f64,
    pub coverage: usize,
    pub n_pairs: usize,
}

impl EvalRecord {
    pub const TSV_HEADER: &'static str =
        "query_id\tblackbox\tmode\tsampling\taccuracy\tlocal_fidelity\tglobal_fidelity\trecall_c1\trecall_c2\tcoverage\tn_pairs";

    pub fn to_tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.query_id,
            self.blackbox,
            self.mode,
            self.sampling,
            self.accuracy,
            self.local_fidelity,
            self.global_fidelity,
            self.recall_c1,
            self.recall_c2,
            self.coverage,
            self.n_pairs
        )
    }
}

/// Means over a set of records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub queries: usize,
    pub accuracy: f64,
    pub local_fidelity: f64,
    pub global_fidelity: f64,
    pub recall_c1: f64,
    pub recall_c2: f64,
}

impl Summary {
    pub fn of(records: &[EvalRecord]) -> Self {
        let n = records.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n as f64;
        Self {
            queries: n,
            accuracy: mean(|r| r.accuracy),
            local_fidelity: mean(|r| r.local_fidelity),
            global_fidelity: mean(|r| r.global_fidelity),
            recall_c1: mean(|r| r.recall_c1),
            recall_c2: mean(|r| r.recall_c2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::DocIdx;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn tau_examples() {
        let x = [3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[1.0, 2.0, 3.0]).unwrap(), -1.0);
        assert_relative_eq!(kendall_tau(&x, &[2.0, 3.0, 1.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(kendall_tau(&x, &[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!(matches!(kendall_tau(&[1.0], &[1.0]), Err(Error::TooFewItems(1))));
        assert!(matches!(kendall_tau(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
    }

    /// Concordant minus discordant pairs over all pairs.
    fn tau_by_counting(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut c, mut d) = (0, 0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let p = (x[i] - x[j]) * (y[i] - y[j]);
                if p > 0.0 {
                    c += 1;
                } else if p < 0.0 {
                    d += 1;
                }
            }
        }
        (c - d) as f64 / (n * (n - 1)) as f64
    }

    #[test]
    fn fidelity_uses_positions_without_scores() {
        let bb = Ranking::from_order("q", "bb", (0..4).map(DocIdx).collect());
        assert_eq!(reference_scores(&bb), [0.0, -1.0, -2.0, -3.0]);
        let (t, flags) = local_fidelity(&bb, &[4.0, 3.0, 1.0, 2.0], 3).unwrap();
        assert_eq!(t, 1.0);
        assert!(flags.is_empty());
        assert_relative_eq!(global_fidelity(&bb, &[4.0, 3.0, 1.0, 2.0]).unwrap(), 4.0 / 6.0);
        let (_, flags) = local_fidelity(&bb, &[4.0, 3.0, 1.0, 2.0], 10).unwrap();
        assert_eq!(flags.len(), 1);
    }

    #[test]
    fn fidelity_uses_scores_when_present() {
        // tied black-box scores contribute zero
        let bb = Ranking::from_scores("q", "bb", vec![(DocIdx(0), 2.0), (DocIdx(1), 2.0), (DocIdx(2), 1.0)]);
        assert_relative_eq!(global_fidelity(&bb, &[3.0, 2.0, 1.0]).unwrap(), 2.0 / 3.0);
        assert_eq!(global_fidelity(&bb.without_scores(), &[3.0, 2.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn overlap_metrics() {
        let g = ["a", "b", "c", "d"];
        assert_eq!(accuracy(&["a", "x", "a"], &g), 0.25);
        assert_eq!(recall(&["a", "b", "c", "d", "e"], &g), 1.0);
        assert_eq!(accuracy::<&str, &str>(&[], &g), 0.0);
        assert_eq!(recall::<&str, &str>(&["a"], &[]), 0.0);
    }

    #[test]
    fn record_row_has_header_arity() {
        let r = EvalRecord {
            query_id: "q1".into(),
            blackbox: "rm3-10".into(),
            mode: "weak".into(),
            sampling: "topk".into(),
            accuracy: 0.5,
            local_fidelity: 1.0,
            global_fidelity: 0.25,
            recall_c1: 1.0,
            recall_c2: 0.9,
            coverage: 40,
            n_pairs: 45,
        };
        assert_eq!(r.to_tsv_row().split('\t').count(), EvalRecord::TSV_HEADER.split('\t').count());
        let s = Summary::of(&[r.clone(), EvalRecord { accuracy: 1.0, ..r }]);
        assert_eq!((s.queries, s.accuracy), (2, 0.75));
        assert_eq!(Summary::of(&[]).queries, 0);
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5i32..5, 2..30).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn tau_identities(x in scores(), seed in any::<u64>()) {
            let n = x.len();
            let mut y: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) % 7) as f64).collect();
            y.truncate(n);
            let t = kendall_tau(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert!((t - tau_by_counting(&x, &y)).abs() < 1e-12);
            prop_assert_eq!(t, kendall_tau(&y, &x).unwrap());
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((kendall_tau(&x, &neg).unwrap() + t).abs() < 1e-12);
        }

        #[test]
        fn tau_monotone_invariance(x in scores(), y in scores()) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            let t = kendall_tau(x, y).unwrap();
            let warped: Vec<f64> = y.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(t, kendall_tau(x, &warped).unwrap());
        }

        #[test]
        fn tau_of_distinct_self_is_one(n in 2usize..40) {
            let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
            prop_assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        }
    }
}
