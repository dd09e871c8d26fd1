//! Preference-coverage term selection: greedy and exhaustive.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::PreferenceMatrix;

/// Largest candidate set the exhaustive solver accepts.
pub const EXACT_MAX_CANDIDATES: usize = 22;

/// Which positive entries count toward the greedy tie-break.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsumMode {
    /// All positive entries of the row.
    #[default]
    AllPositive,
    /// Positive entries in columns the row would newly cover.
    NewlyCovered,
}

impl FromStr for PsumMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-positive" => Ok(Self::AllPositive),
            "newly-covered" => Ok(Self::NewlyCovered),
            _ => Err(Error::Config(format!("unknown psum mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected terms in pick order.
    pub terms: Vec<String>,
    pub rows: Vec<usize>,
    /// Number of covered pairs.
    pub coverage: usize,
}

impl Selection {
    pub fn mask(&self, n_rows: usize) -> Vec<bool> {
        let mut m = vec![false; n_rows];
        for &r in &self.rows {
            m[r] = true;
        }
        m
    }
}

/// Column sums `y = sᵀP` over the selected rows.
pub fn column_sums(matrix: &PreferenceMatrix, rows: &[usize]) -> Vec<f64> {
    let mut y = vec![0.0; matrix.n_cols()];
    for &r in rows {
        for (acc, v) in y.iter_mut().zip(matrix.row(r)) {
            *acc += v;
        }
    }
    y
}

/// Number of pairs with a strictly positive column sum.
pub fn pcov(matrix: &PreferenceMatrix, rows: &[usize]) -> usize {
    column_sums(matrix, rows).iter().filter(|&&v| v > 0.0).count()
}

/// `pcov(rows ∪ {row}) - pcov(rows)`.
pub fn utility(matrix: &PreferenceMatrix, rows: &[usize], row: usize) -> i64 {
    let y = column_sums(matrix, rows);
    gain(&y, matrix.row(row))
}

fn gain(y: &[f64], row: &[f64]) -> i64 {
    let mut g = 0i64;
    for (a, b) in y.iter().zip(row) {
        let before = *a > 0.0;
        let after = a + b > 0.0;
        g += after as i64 - before as i64;
    }
    g
}

/// Sum of positive entries of `row`.
pub fn psum(matrix: &PreferenceMatrix, row: usize) -> f64 {
    matrix.row(row).iter().filter(|v| **v > 0.0).sum()
}

fn psum_newly_covered(y: &[f64], row: &[f64]) -> f64 {
    y.iter()
        .zip(row)
        .filter(|(a, b)| **b > 0.0 && **a <= 0.0 && *a + *b > 0.0)
        .map(|(_, b)| *b)
        .sum()
}

/// When greedy selection stops adding terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop once no term strictly increases coverage.
    #[default]
    Positive,
    /// Keep adding terms that leave coverage unchanged; stop only when every
    /// remaining term would lower it.
    NonNegative,
}

impl FromStr for StopRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Self::Positive),
            "non-negative" => Ok(Self::NonNegative),
            _ => Err(Error::Config(format!("unknown stop rule `{s}`"))),
        }
    }
}

/// Greedy coverage maximisation. Each step adds the row with the highest
/// utility, breaking ties by psum then by term; stops at `budget` or when no
/// row has positive utility.
pub fn greedy_select(matrix: &PreferenceMatrix, budget: usize, mode: PsumMode) -> Selection {
    greedy_select_with(matrix, budget, mode, StopRule::Positive, None)
}

/// [`greedy_select`] with an explicit stop rule, starting from column sums
/// `baseline` (zero when `None`). Coverage counts columns positive under
/// baseline plus selection.
pub fn greedy_select_with(
    matrix: &PreferenceMatrix,
    budget: usize,
    mode: PsumMode,
    stop: StopRule,
    baseline: Option<&[f64]>,
) -> Selection {
    let n = matrix.n_rows();
    let static_psum: Vec<f64> = (0..n).map(|r| psum(matrix, r)).collect();
    let mut y = baseline.map_or_else(|| vec![0.0; matrix.n_cols()], <[f64]>::to_vec);
    assert_eq!(y.len(), matrix.n_cols(), "baseline length");
    let mut taken = vec![false; n];
    let mut sel = Selection {
        terms: Vec::new(),
        rows: Vec::new(),
        coverage: y.iter().filter(|&&v| v > 0.0).count(),
    };
    while sel.rows.len() < budget {
        let best = (0..n)
            .into_par_iter()
            .filter(|&r| !taken[r])
            .map(|r| {
                let row = matrix.row(r);
                let p = match mode {
                    PsumMode::AllPositive => static_psum[r],
                    PsumMode::NewlyCovered => psum_newly_covered(&y, row),
                };
                (gain(&y, row), p, r)
            })
            .max_by(|a, b| {
                a.0.cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then_with(|| matrix.term(b.2).cmp(matrix.term(a.2)))
            });
        let Some((u, _, r)) = best else { break };
        let accept = match stop {
            StopRule::Positive => u > 0,
            StopRule::NonNegative => u >= 0,
        };
        if !accept {
            break;
        }
        taken[r] = true;
        for (acc, v) in y.iter_mut().zip(matrix.row(r)) {
            *acc += v;
        }
        sel.coverage = (sel.coverage as i64 + u) as usize;
        sel.rows.push(r);
        sel.terms.push(matrix.term(r).to_string());
    }
    sel
}

/// Exhaustive search over all subsets of at most `budget` rows. Among subsets
/// with maximal coverage the lexicographically least sorted term list wins.
pub fn exact_select(matrix: &PreferenceMatrix, budget: usize) -> Result<Selection> {
    let n = matrix.n_rows();
    if n > EXACT_MAX_CANDIDATES {
        return Err(Error::TooManyCandidates(n, EXACT_MAX_CANDIDATES));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| matrix.term(a).cmp(matrix.term(b)));

    struct Search<'m> {
        matrix: &'m PreferenceMatrix,
        order: Vec<usize>,
        budget: usize,
        stack: Vec<usize>,
        best: Vec<usize>,
        best_cov: usize,
    }
    impl Search<'_> {
        // prefix-first DFS visits subsets in lexicographic order of their
        // sorted term lists, so the first maximum found is the least
        fn visit(&mut self, y: &mut Vec<f64>, from: usize) {
            let cov = y.iter().filter(|&&v| v > 0.0).count();
            if cov > self.best_cov {
                self.best_cov = cov;
                self.best = self.stack.clone();
            }
            if self.stack.len() == self.budget {
                return;
            }
            for i in from..self.order.len() {
                let r = self.order[i];
                let row = self.matrix.row(r);
                let saved = y.clone();
                for (acc, v) in y.iter_mut().zip(row) {
                    *acc += v;
                }
                self.stack.push(r);
                self.visit(y, i + 1);
                self.stack.pop();
                *y = saved;
            }
        }
    }

    let mut s = Search {
        matrix,
        order,
        budget,
        stack: Vec::new(),
        best: Vec::new(),
        best_cov: 0,
    };
    let mut y = vec![0.0; matrix.n_cols()];
    s.visit(&mut y, 0);
    Ok(Selection {
        terms: s.best.iter().map(|&r| matrix.term(r).to_string()).collect(),
        rows: s.best,
        coverage: s.best_cov,
    })
}

/// Greedy coverage over exact coverage; 1 when both are zero.
pub fn coverage_ratio(greedy: &Selection, exact: &Selection) -> f64 {
    if exact.coverage == 0 {
        1.0
    } else {
        greedy.coverage as f64 / exact.coverage as f64
    }
}
