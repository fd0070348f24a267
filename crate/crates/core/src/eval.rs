//! Exact / Partial / Strict scoring of candidate triples against references.
//!
//! Elements are compared after [`normalize_element`]. For a pair of triples:
//!
//! * Strict counts elements that match exactly in the same role.
//! * Exact counts elements that match exactly under the best one-to-one
//!   mapping of candidate roles onto reference roles.
//! * Partial is like Exact but also accepts elements whose whitespace token
//!   sets intersect.
//!
//! Candidates and references are paired one-to-one by an assignment that
//! maximizes the summed Exact count (ties broken by Strict, then Partial),
//! and that single pairing is used for all three modes. Scores are
//! micro-averaged over elements: `P = correct / (3·|candidates|)`,
//! `R = correct / (3·|references|)`.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{normalize_text, Triple};
use crate::matching::hungarian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ElementMatch {
    None,
    Partial,
    Exact,
}

/// Normalized, lowercased form used for comparison.
pub fn normalize_element(s: &str) -> String {
    normalize_text(s).to_lowercase()
}

/// Compares two already-normalized elements.
pub fn element_match(cand: &str, reference: &str) -> ElementMatch {
    if cand == reference {
        return ElementMatch::Exact;
    }
    let a: BTreeSet<&str> = cand.split_whitespace().collect();
    if reference.split_whitespace().any(|w| a.contains(w)) {
        ElementMatch::Partial
    } else {
        ElementMatch::None
    }
}

const ROLE_MAPS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Element counts for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairScore {
    pub exact: usize,
    pub partial: usize,
    pub strict: usize,
}

pub fn pair_score(cand: &[String; 3], reference: &[String; 3]) -> PairScore {
    let mut m = [[ElementMatch::None; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = element_match(&cand[i], &reference[j]);
        }
    }
    let strict = (0..3).filter(|&k| m[k][k] == ElementMatch::Exact).count();
    let mut exact = 0;
    let mut partial = 0;
    for map in ROLE_MAPS {
        let e = (0..3).filter(|&k| m[k][map[k]] == ElementMatch::Exact).count();
        let p = (0..3).filter(|&k| m[k][map[k]] != ElementMatch::None).count();
        exact = exact.max(e);
        partial = partial.max(p);
    }
    PairScore { exact, partial, strict }
}

fn prepared(ts: &[Triple]) -> Vec<[String; 3]> {
    ts.iter()
        .map(|t| {
            [
                normalize_element(&t.subject),
                normalize_element(&t.predicate),
                normalize_element(&t.object),
            ]
        })
        .collect()
}

/// One-to-one pairing of candidates with references; unpaired triples on
/// either side appear with `None` on the other.
pub fn align_triples(candidates: &[Triple], references: &[Triple]) -> Vec<(Option<usize>, Option<usize>)> {
    let c = prepared(candidates);
    let r = prepared(references);
    align_prepared(&c, &r).0
}

type Alignment = (Vec<(Option<usize>, Option<usize>)>, PairScore);

fn align_prepared(c: &[[String; 3]], r: &[[String; 3]]) -> Alignment {
    let n = c.len().max(r.len());
    if n == 0 {
        return (Vec::new(), PairScore::default());
    }
    let scores: Vec<Vec<PairScore>> = c.iter().map(|ct| r.iter().map(|rt| pair_score(ct, rt)).collect()).collect();
    // lexicographic (exact, strict, partial) packed into one integer; sums over
    // at most min(|c|, |r|) pairs stay below `base` in the lower digits
    let base = (3 * c.len().min(r.len()) + 1) as f64;
    let mut cost = alloc::vec![alloc::vec![0.0; n]; n];
    for (i, row) in scores.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            cost[i][j] = -(s.exact as f64 * base * base + s.strict as f64 * base + s.partial as f64);
        }
    }
    let perm = hungarian(&cost).expect("finite square cost matrix");
    let mut pairs = Vec::with_capacity(n);
    let mut total = PairScore::default();
    for (i, j) in perm.mapping().iter().copied().enumerate() {
        let ci = (i < c.len()).then_some(i);
        let rj = (j < r.len()).then_some(j);
        if ci.is_none() && rj.is_none() {
            continue;
        }
        if let (Some(a), Some(b)) = (ci, rj) {
            let s = scores[a][b];
            total.exact += s.exact;
            total.partial += s.partial;
            total.strict += s.strict;
        }
        pairs.push((ci, rj));
    }
    (pairs, total)
}

/// Integer tallies; summing these over examples and dividing once keeps the
/// result independent of reduction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub exact: usize,
    pub partial: usize,
    pub strict: usize,
    pub candidate_elements: usize,
    pub reference_elements: usize,
}

impl MatchCounts {
    pub fn add(&mut self, o: &MatchCounts) {
        self.exact += o.exact;
        self.partial += o.partial;
        self.strict += o.strict;
        self.candidate_elements += o.candidate_elements;
        self.reference_elements += o.reference_elements;
    }

    pub fn scores(&self) -> TripleScores {
        let prf = |correct: usize| Prf::from_counts(correct, self.candidate_elements, self.reference_elements);
        TripleScores {
            exact: prf(self.exact),
            partial: prf(self.partial),
            strict: prf(self.strict),
        }
    }
}

pub fn count_matches(candidates: &[Triple], references: &[Triple]) -> MatchCounts {
    let c = prepared(candidates);
    let r = prepared(references);
    let (_, total) = align_prepared(&c, &r);
    MatchCounts {
        exact: total.exact,
        partial: total.partial,
        strict: total.strict,
        candidate_elements: 3 * c.len(),
        reference_elements: 3 * r.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Prf {
        let precision = if predicted == 0 { 0.0 } else { correct as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { correct as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TripleScores {
    pub exact: Prf,
    pub partial: Prf,
    pub strict: Prf,
}

impl TripleScores {
    /// Rows in report order: Exact, Partial, Strict.
    pub fn rows(&self) -> [(&'static str, Prf); 3] {
        [("Exact", self.exact), ("Partial", self.partial), ("Strict", self.strict)]
    }
}

pub fn score(candidates: &[Triple], references: &[Triple]) -> TripleScores {
    count_matches(candidates, references).scores()
}

/// Micro-averaged scores over many examples.
pub fn score_corpus<'a, I>(pairs: I) -> TripleScores
where
    I: IntoIterator<Item = (&'a [Triple], &'a [Triple])>,
{
    let mut total = MatchCounts::default();
    for (c, r) in pairs {
        total.add(&count_matches(c, r));
    }
    total.scores()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(s, p, o)
    }

    #[test]
    fn element_matching() {
        assert_eq!(element_match("agra airport", "agra airport"), ElementMatch::Exact);
        assert_eq!(element_match("agra airport", "airport"), ElementMatch::Partial);
        assert_eq!(element_match("india", "thakur"), ElementMatch::None);
    }

    #[test]
    fn swapped_roles() {
        let c = [t("Ada", "knows", "Bob")];
        let r = [t("Bob", "knows", "Ada")];
        let counts = count_matches(&c, &r);
        assert_eq!((counts.strict, counts.exact), (1, 3));
        let s = score(&c, &r);
        assert!((s.strict.f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.exact.f1, 1.0);
    }

    #[test]
    fn empty_candidates_score_zero() {
        let s = score(&[], &[t("a", "b", "c")]);
        assert_eq!(s.exact, Prf::default());
        assert_eq!(score(&[], &[]).exact.f1, 0.0);
    }

    #[test]
    fn identical_sets_are_perfect() {
        let x = vec![t("Agra_Airport", "location", "India"), t("India", "leader", "Thakur")];
        let s = score(&x, &x);
        for (_, prf) in s.rows() {
            assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
        }
        let mut rev = x.clone();
        rev.reverse();
        assert_eq!(align_triples(&rev, &x), vec![(Some(0), Some(1)), (Some(1), Some(0))]);
    }

    #[test]
    fn surplus_candidates_are_false_positives() {
        let r = [t("a", "b", "c")];
        let c = [t("a", "b", "c"), t("x", "y", "z")];
        let s = score(&c, &r);
        assert_eq!(s.exact.precision, 0.5);
        assert_eq!(s.exact.recall, 1.0);
        let pairs = align_triples(&c, &r);
        assert_eq!(pairs, vec![(Some(0), Some(0)), (Some(1), None)]);
    }
}
