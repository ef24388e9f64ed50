//! Exact one-to-one assignment of individuals inside a matched household pair.
//!
//! Scores below the mean score `q̄` are eliminated; the remaining cells are
//! paired to maximize the total score with each row and column used at most
//! once. Among optimal assignments the lexicographically smallest one (by row,
//! then column) is returned.

use crate::{Error, Result};

/// Relative tolerance used to compare objective values.
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs in row order.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the assigned scores, in row order.
    pub objective: f64,
    /// Mean of all scores, the elimination floor.
    pub floor: f64,
}

/// Maximum-weight bipartite matching over cells with `allowed` set.
///
/// Returns the optimal value; unmatched rows are allowed (weights must be
/// nonnegative). Uses the shortest augmenting path Hungarian method on a
/// square matrix padded with zero-weight dummy cells.
fn max_weight_value(
    weights: &[f64],
    allowed: &[bool],
    m: usize,
    n: usize,
) -> (f64, Vec<Option<usize>>) {
    let size = m.max(n);
    if size == 0 {
        return (0.0, Vec::new());
    }
    // costs to minimize: -w for allowed cells, 0 for forbidden/dummy cells
    // (a zero-cost cell means "leave unmatched")
    let cost = |i: usize, j: usize| -> f64 {
        if i < m && j < n && allowed[i * n + j] {
            -weights[i * n + j]
        } else {
            0.0
        }
    };
    let inf = f64::INFINITY;
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
            for j in 0..=size {
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
    let mut row_to_col = vec![None; m];
    let mut value = 0.0;
    for j in 1..=size {
        let i = p[j];
        if i >= 1 && i <= m && j <= n && allowed[(i - 1) * n + (j - 1)] {
            row_to_col[i - 1] = Some(j - 1);
        }
    }
    for (i, c) in row_to_col.iter().enumerate() {
        if let Some(j) = c {
            value += weights[i * n + j];
        }
    }
    (value, row_to_col)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Assigns rows to columns of the row-major `m x n` score matrix `q`.
pub fn assign(q: &[f64], m: usize, n: usize) -> Result<Assignment> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidData(format!(
            "cannot assign within an empty household ({m} x {n})"
        )));
    }
    if q.len() != m * n {
        return Err(Error::Dimension {
            expected: m * n,
            got: q.len(),
        });
    }
    let floor = q.iter().sum::<f64>() / q.len() as f64;
    // zero scores add nothing to the objective and are never paired
    let mut allowed: Vec<bool> = q.iter().map(|&x| x >= floor && x > 0.0).collect();
    let (best, _) = max_weight_value(q, &allowed, m, n);

    // Fix rows one at a time to the smallest column that keeps the optimum.
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut fixed_value = 0.0;
    for r in 0..m {
        if close(fixed_value, best) {
            break;
        }
        let mut chosen = None;
        for c in 0..n {
            if !allowed[r * n + c] {
                continue;
            }
            let mut trial = allowed.clone();
            for cc in 0..n {
                if cc != c {
                    trial[r * n + cc] = false;
                }
            }
            for rr in 0..m {
                if rr != r {
                    trial[rr * n + c] = false;
                }
            }
            // restrict to rows after r for the remainder
            let rest_rows = m - r - 1;
            let mut sub_w = Vec::with_capacity(rest_rows * n);
            let mut sub_a = Vec::with_capacity(rest_rows * n);
            for rr in r + 1..m {
                sub_w.extend_from_slice(&q[rr * n..(rr + 1) * n]);
                sub_a.extend_from_slice(&trial[rr * n..(rr + 1) * n]);
            }
            let (rest, _) = max_weight_value(&sub_w, &sub_a, rest_rows, n);
            if close(fixed_value + q[r * n + c] + rest, best) {
                chosen = Some(c);
                allowed = trial;
                break;
            }
        }
        match chosen {
            Some(c) => {
                fixed.push((r, c));
                fixed_value += q[r * n + c];
            }
            None => {
                // leaving row r unmatched is optimal
                for c in 0..n {
                    allowed[r * n + c] = false;
                }
            }
        }
    }
    let objective = fixed.iter().map(|&(r, c)| q[r * n + c]).sum();
    Ok(Assignment {
        pairs: fixed,
        objective,
        floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Brute force over all partial injections; returns the best value and the
    /// lexicographically smallest optimal assignment as a row -> col vector.
    fn enumerate(q: &[f64], m: usize, n: usize) -> (f64, Vec<Option<usize>>) {
        let floor = q.iter().sum::<f64>() / q.len() as f64;
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut current = vec![None; m];
        let mut used = vec![false; n];
        fn rec(
            r: usize,
            q: &[f64],
            m: usize,
            n: usize,
            floor: f64,
            current: &mut Vec<Option<usize>>,
            used: &mut Vec<bool>,
            best: &mut (f64, Vec<Option<usize>>),
        ) {
            if r == m {
                let v: f64 = current
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| c.map(|j| q[i * n + j]))
                    .sum();
                if v > best.0 + 1e-12 * v.abs().max(1.0) {
                    *best = (v, current.clone());
                }
                return;
            }
            // matched options first, columns ascending, then unmatched:
            // the first optimum found in this order is the lexicographic one
            for c in 0..n {
                if !used[c] && q[r * n + c] >= floor && q[r * n + c] > 0.0 {
                    used[c] = true;
                    current[r] = Some(c);
                    rec(r + 1, q, m, n, floor, current, used, best);
                    used[c] = false;
                    current[r] = None;
                }
            }
            rec(r + 1, q, m, n, floor, current, used, best);
        }
        rec(0, q, m, n, floor, &mut current, &mut used, &mut best);
        best
    }

    fn as_rows(a: &Assignment, m: usize) -> Vec<Option<usize>> {
        let mut rows = vec![None; m];
        for &(r, c) in &a.pairs {
            rows[r] = Some(c);
        }
        rows
    }

    #[test]
    fn single_cell() {
        let a = assign(&[0.9], 1, 1).unwrap();
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert!((a.objective - 0.9).abs() < 1e-15);
    }

    #[test]
    fn diagonal_two_by_two() {
        let a = assign(&[0.9, 0.1, 0.1, 0.8], 2, 2).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert!((a.objective - 1.7).abs() < 1e-12);
        assert!((a.floor - 0.475).abs() < 1e-12);
    }

    #[test]
    fn empty_household_is_an_error() {
        assert!(assign(&[], 0, 3).is_err());
        assert!(assign(&[0.5], 2, 2).is_err());
    }

    #[test]
    fn tie_goes_to_first_row() {
        let a = assign(&[0.3, 0.3], 2, 1).unwrap();
        assert_eq!(a.pairs, vec![(0, 0)]);
    }

    #[test]
    fn below_floor_cells_are_never_used() {
        // the floor is 0.4: the 0.3 cell cannot be used even though it would add value
        let a = assign(&[0.9, 0.3, 0.0, 0.4], 2, 2).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        let b = assign(&[0.9, 0.5, 0.3, 0.0], 2, 2).unwrap();
        assert_eq!(b.pairs, vec![(0, 0)]);
    }

    #[test]
    fn matches_enumeration_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..500 {
            let m = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=5);
            // coarse values create many ties
            let q: Vec<f64> = (0..m * n)
                .map(|_| {
                    if case % 2 == 0 {
                        rng.gen_range(0..5) as f64 / 4.0
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect();
            let a = assign(&q, m, n).unwrap();
            let (value, rows) = enumerate(&q, m, n);
            assert_eq!(a.objective, value, "case {case}: {q:?}");
            assert_eq!(as_rows(&a, m), rows, "case {case}: {q:?}");
            for &(r, c) in &a.pairs {
                assert!(q[r * n + c] >= a.floor);
            }
        }
    }

    #[test]
    fn positive_scaling_keeps_the_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (m, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            let q: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>()).collect();
            let scaled: Vec<f64> = q.iter().map(|x| x * 7.5).collect();
            assert_eq!(
                assign(&q, m, n).unwrap().pairs,
                assign(&scaled, m, n).unwrap().pairs
            );
        }
    }
}
