//! Minimum-cost bipartite assignment with a deterministic tie-break, and the
//! slot permutations built from it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{log_softmax_in_place, Tape, Var};

/// Largest size accepted by [`brute_force_match`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// A permutation of `0..n` stored as a mapping `row -> column`. The matrix
/// form has a single 1 at `(r, mapping[r])` for every row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { mapping: (0..n).collect() }
    }

    pub fn from_mapping(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &c in &mapping {
            if c >= mapping.len() || seen[c] {
                return Err(Error::invalid(format!("{mapping:?} is not a permutation")));
            }
            seen[c] = true;
        }
        Ok(Permutation { mapping })
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn get(&self, row: usize) -> usize {
        self.mapping[row]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.mapping.len()];
        for (r, &c) in self.mapping.iter().enumerate() {
            inv[c] = r;
        }
        Permutation { mapping: inv }
    }

    /// Dense 0/1 matrix, row-major.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.mapping.len();
        self.mapping
            .iter()
            .map(|&c| {
                let mut row = vec![0; n];
                row[c] = 1;
                row
            })
            .collect()
    }

    pub fn total_cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.mapping.iter().enumerate().map(|(r, &c)| cost[r][c]).sum()
    }
}

fn validate(cost: &[Vec<f64>]) -> Result<usize> {
    let n = cost.len();
    for (r, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::invalid(format!("cost matrix is not square: {n} rows, row {r} has {} columns", row.len())));
        }
        if let Some(c) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite cost at ({r}, {c})")));
        }
    }
    Ok(n)
}

fn tolerance(total: f64) -> f64 {
    1e-9 * (1.0 + total.abs())
}

/// Kuhn–Munkres with row/column potentials, O(n³). Returns the minimum total
/// of the sub-matrix given by `rows × cols` (equal lengths).
fn min_cost(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let n = rows.len();
    if n == 0 {
        return 0.0;
    }
    let inf = f64::INFINITY;
    // 1-based indices, column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[rows[i0 - 1]][cols[j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[rows[p[j] - 1]][cols[j - 1]]).sum()
}

/// Minimum-cost assignment of rows to columns. Among assignments whose total
/// is within rounding of the minimum, the lexicographically smallest
/// row→column mapping is returned.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Permutation> {
    let n = validate(cost)?;
    let best = min_cost(cost, &(0..n).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>());
    let tol = tolerance(best);
    let mut mapping = Vec::with_capacity(n);
    let mut free: Vec<usize> = (0..n).collect();
    let mut fixed = 0.0;
    for r in 0..n {
        let rest: Vec<usize> = (r + 1..n).collect();
        let mut chosen = None;
        for (k, &c) in free.iter().enumerate() {
            let others: Vec<usize> = free.iter().copied().filter(|&x| x != c).collect();
            let total = fixed + cost[r][c] + min_cost(cost, &rest, &others);
            if total <= best + tol {
                chosen = Some(k);
                break;
            }
        }
        // the optimum itself always qualifies; fall back to the cheapest column defensively
        let k = chosen.unwrap_or_else(|| {
            (0..free.len())
                .min_by(|&a, &b| cost[r][free[a]].total_cmp(&cost[r][free[b]]))
                .unwrap_or(0)
        });
        let c = free.remove(k);
        fixed += cost[r][c];
        mapping.push(c);
    }
    Ok(Permutation { mapping })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exhaustive search over all n! assignments with the same tie-break as
/// [`hungarian`]. Refuses matrices larger than [`BRUTE_FORCE_MAX`].
pub fn brute_force_match(cost: &[Vec<f64>]) -> Result<Permutation> {
    let n = validate(cost)?;
    if n > BRUTE_FORCE_MAX {
        return Err(Error::Capacity {
            what: "brute-force matching size",
            got: n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum() };
    let mut p: Vec<usize> = (0..n).collect();
    let mut best = total(&p);
    while next_permutation(&mut p) {
        best = best.min(total(&p));
    }
    let tol = tolerance(best);
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        if total(&p) <= best + tol {
            return Ok(Permutation { mapping: p });
        }
        if !next_permutation(&mut p) {
            unreachable!("the minimum is attained by some permutation");
        }
    }
}

/// Matching cost between decoded slots and target node sequences.
///
/// `logits[q]` holds slot `q`'s `[steps, vocab]` logits (flat). Entry
/// `(q, t)` is the mean token cross-entropy of slot `q` against target `t`,
/// over the target's positions through its end token.
pub fn matching_cost(logits: &[Vec<f64>], vocab: usize, targets: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
    if logits.len() != targets.len() {
        return Err(Error::shape("matching_cost", format!("{} slots, {} targets", logits.len(), targets.len())));
    }
    let mut logp = Vec::with_capacity(logits.len());
    for (q, l) in logits.iter().enumerate() {
        if vocab == 0 || l.len() % vocab != 0 {
            return Err(Error::shape("matching_cost", format!("slot {q}: {} logits for vocabulary {vocab}", l.len())));
        }
        if l.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite logits for slot {q}")));
        }
        let mut lp = l.clone();
        for row in lp.chunks_mut(vocab) {
            log_softmax_in_place(row);
        }
        logp.push(lp);
    }
    let mut cost = vec![vec![0.0; targets.len()]; logits.len()];
    for (q, lp) in logp.iter().enumerate() {
        let steps = lp.len() / vocab;
        for (ti, target) in targets.iter().enumerate() {
            if target.is_empty() || target.len() > steps || target.iter().any(|&x| x >= vocab) {
                return Err(Error::shape("matching_cost", format!("target {ti} does not fit {steps} steps of {vocab}")));
            }
            let s: f64 = target.iter().enumerate().map(|(s, &tok)| -lp[s * vocab + tok]).sum();
            cost[q][ti] = s / target.len() as f64;
        }
    }
    Ok(cost)
}

/// Reorders the slot rows of node logits (`[N, ·]`) and node features
/// (`[N, d]`) so that row `k` of each result is row `source[k]` of the
/// input. With `source` the target→slot map of a matching, row `k` is
/// aligned with target node `k`. Gradients flow back through the gather.
pub fn apply_permutation(t: &mut Tape, logits: Var, features: Var, source: &Permutation) -> Result<(Var, Var)> {
    let l = t.gather_rows(logits, source.mapping())?;
    let f = t.gather_rows(features, source.mapping())?;
    Ok((l, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn small_cases() {
        let p = hungarian(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(p.mapping(), &[0, 1]);
        let c = [vec![5.0, 1.0], vec![2.0, 7.0]];
        let p = hungarian(&c).unwrap();
        assert_eq!(p.mapping(), &[1, 0]);
        assert_eq!(p.total_cost(&c), 3.0);
        assert_eq!(hungarian(&[vec![4.0]]).unwrap().mapping(), &[0]);
        assert_eq!(hungarian(&[]).unwrap().len(), 0);
    }

    #[test]
    fn ties_resolve_to_identity() {
        let zeros = vec![vec![0.0; 5]; 5];
        assert_eq!(hungarian(&zeros).unwrap(), Permutation::identity(5));
        assert_eq!(brute_force_match(&zeros).unwrap(), Permutation::identity(5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[vec![1.0, 2.0]]).is_err());
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        assert!(brute_force_match(&vec![vec![0.0; 9]; 9]).is_err());
    }

    #[test]
    fn cost_of_uniform_logits_is_log_v() {
        let c = matching_cost(&[vec![0.0; 12], vec![1.0; 12]], 4, &[vec![1, 2, 3], vec![0]]).unwrap();
        for row in &c {
            for &x in row {
                assert!((x - crate::math::ln(4.0)).abs() < 1e-14);
            }
        }
        assert!(matching_cost(&[vec![f64::NAN; 4]], 4, &[vec![0]]).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let p = Permutation::from_mapping(vec![2, 0, 3, 1]).unwrap();
        assert_eq!(p.inverse().inverse(), p);
        for r in 0..4 {
            assert_eq!(p.inverse().get(p.get(r)), r);
        }
        assert!(Permutation::from_mapping(vec![0, 0]).is_err());
        let m = p.to_matrix();
        for i in 0..4 {
            assert_eq!(m[i].iter().map(|&x| x as usize).sum::<usize>(), 1);
            assert_eq!(m.iter().map(|row| row[i] as usize).sum::<usize>(), 1);
        }
    }
}
