//! Minimum-cost one-to-one matching (Kuhn-Munkres with row/column potentials).

use super::cost::CostMatrix;
use crate::numerics::{Mat, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<T> {
    /// Matched `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: T,
}

/// Matches `min(rows, cols)` pairs at minimum total cost.
///
/// Rectangular inputs behave as if the smaller side were padded with
/// zero-cost dummies; the potentials formulation below runs directly on the
/// `n <= m` rectangle, which is the same problem.
pub fn hungarian_align<T: Scalar>(cost: &CostMatrix<T>) -> Assignment<T> {
    let c = &cost.values;
    let (rows, cols) = c.shape();
    let mut pairs = if rows <= cols {
        solve(c)
            .into_iter()
            .enumerate()
            .map(|(i, j)| (i, j))
            .collect::<Vec<_>>()
    } else {
        let mut p: Vec<_> = solve(&c.transpose())
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect();
        p.sort_unstable();
        p
    };
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| c[(i, j)]).sum();
    Assignment { pairs, total_cost }
}

/// Assigns every row of a `rows x cols` problem to a column, each column
/// taking at most `ceil(rows / cols)` rows, at minimum total cost. This is the
/// one-to-one matching against `ceil(rows / cols)` copies of every column,
/// solved as a transportation problem by successive shortest paths over the
/// columns. Returns the column per row.
pub fn balanced_assignment<T: Scalar>(cost: &Mat<T>) -> Vec<usize> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let cap = rows.div_ceil(cols);
    let mut assign = vec![usize::MAX; rows];
    let mut load = vec![0usize; cols];
    let inf = T::infinity();
    // best_move[j][k]: cheapest row currently in j to move to k, and its cost delta.
    let mut best_move = vec![vec![(inf, usize::MAX); cols]; cols];
    let mut dist = vec![inf; cols];
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; cols];
    for r in 0..rows {
        for row in best_move.iter_mut() {
            row.fill((inf, usize::MAX));
        }
        for s in 0..r {
            let j = assign[s];
            for k in 0..cols {
                let d = cost[(s, k)] - cost[(s, j)];
                if k != j && d < best_move[j][k].0 {
                    best_move[j][k] = (d, s);
                }
            }
        }
        for k in 0..cols {
            dist[k] = cost[(r, k)];
            prev[k] = None;
        }
        // Bellman-Ford; the current assignment is optimal so there are no
        // negative cycles and `cols - 1` rounds suffice.
        for _ in 1..cols {
            let mut changed = false;
            for j in 0..cols {
                if load[j] == 0 {
                    continue;
                }
                for k in 0..cols {
                    let (d, s) = best_move[j][k];
                    if s != usize::MAX && dist[j] + d < dist[k] {
                        dist[k] = dist[j] + d;
                        prev[k] = Some((j, s));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut k = (0..cols)
            .filter(|&k| load[k] < cap)
            .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap_or(std::cmp::Ordering::Equal))
            .expect("total capacity covers every row");
        load[k] += 1;
        // A shortest path visits each column at most once.
        for _ in 0..cols {
            match prev[k] {
                Some((j, s)) => {
                    assign[s] = k;
                    k = j;
                }
                None => break,
            }
        }
        assign[r] = k;
    }
    let mut counts = vec![0usize; cols];
    for &j in &assign {
        counts[j] += 1;
    }
    debug_assert_eq!(counts, load);
    assign
}

/// `rows <= cols`; returns the column matched to each row.
fn solve<T: Scalar>(c: &Mat<T>) -> Vec<usize> {
    let (n, m) = c.shape();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(n <= m);
    let inf = T::infinity();
    // 1-based potentials; index 0 is the virtual root.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = c[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}
