//! Minimum-cost bipartite assignment (Hungarian method, potentials form).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Result of matching rows of a cost matrix to columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Matched (row, col) pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost maximum matching on an n×m cost matrix: matches
/// min(n, m) pairs with the smallest possible total cost. Ties between
/// equally cheap matchings are broken arbitrarily but deterministically.
pub fn hungarian(cost: &Tensor) -> Result<Assignment> {
    if cost.rank() != 2 {
        return Err(Error::shape(format!(
            "hungarian expects a 2-D cost matrix, got {:?}",
            cost.shape()
        )));
    }
    if !cost.data().iter().all(|v| v.is_finite()) {
        return Err(Error::arg("hungarian cost matrix must be finite"));
    }
    let (n, m) = (cost.shape()[0], cost.shape()[1]);
    if n == 0 || m == 0 {
        return Ok(Assignment {
            pairs: vec![],
            unmatched_rows: (0..n).collect(),
            unmatched_cols: (0..m).collect(),
            total_cost: 0.0,
        });
    }
    // The potentials routine wants rows <= cols; transpose if needed.
    let transposed = n > m;
    let (rows, cols) = if transposed { (m, n) } else { (n, m) };
    let at = |i: usize, j: usize| -> f64 {
        if transposed {
            cost.get2(j, i)
        } else {
            cost.get2(i, j)
        }
    };

    // Jonker-Volgenant style shortest augmenting paths with dual
    // potentials u/v; index 0 is the virtual root column/row.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
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

    let mut pairs = Vec::with_capacity(rows);
    for j in 1..=cols {
        if p[j] != 0 {
            let (row, col) = if transposed { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) };
            pairs.push((row, col));
        }
    }
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| cost.get2(i, j)).sum();
    let matched_rows: Vec<bool> = {
        let mut v = vec![false; n];
        for &(i, _) in &pairs {
            v[i] = true;
        }
        v
    };
    let matched_cols: Vec<bool> = {
        let mut v = vec![false; m];
        for &(_, j) in &pairs {
            v[j] = true;
        }
        v
    };
    Ok(Assignment {
        pairs,
        unmatched_rows: (0..n).filter(|&i| !matched_rows[i]).collect(),
        unmatched_cols: (0..m).filter(|&j| !matched_cols[j]).collect(),
        total_cost,
    })
}

/// Exhaustive minimum-cost maximum matching; exponential, for verification
/// against `hungarian` on small instances only.
pub fn brute_force_assignment(cost: &Tensor) -> Result<f64> {
    if cost.rank() != 2 {
        return Err(Error::shape("brute force expects 2-D cost".to_string()));
    }
    let (n, m) = (cost.shape()[0], cost.shape()[1]);
    if n == 0 || m == 0 {
        return Ok(0.0);
    }
    fn recurse(cost: &Tensor, row: usize, n: usize, m: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == n {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        // With n <= m every row is matched in a maximum matching.
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                recurse(cost, row + 1, n, m, used, acc + cost.get2(row, j), best);
                used[j] = false;
            }
        }
    }
    let work = if n > m { cost.transpose()? } else { cost.clone() };
    let (wn, wm) = (work.shape()[0], work.shape()[1]);
    let mut best = f64::INFINITY;
    recurse(&work, 0, wn, wm, &mut vec![false; wm], 0.0, &mut best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::new(vec![rows, cols], data.to_vec()).unwrap()
    }

    #[test]
    fn two_by_two_prefers_diagonal() {
        let a = hungarian(&mat(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn two_by_two_prefers_antidiagonal() {
        let a = hungarian(&mat(2, 2, &[4.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_cost, 3.0);
    }

    #[test]
    fn rectangular_matches_short_side_and_reports_leftovers() {
        let a = hungarian(&mat(2, 3, &[5.0, 1.0, 9.0, 5.0, 9.0, 1.0])).unwrap();
        assert_eq!(a.pairs.len(), 2);
        assert_eq!(a.total_cost, 2.0);
        assert_eq!(a.unmatched_cols, vec![0]);
        assert!(a.unmatched_rows.is_empty());

        let b = hungarian(&mat(3, 1, &[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(b.pairs, vec![(1, 0)]);
        assert_eq!(b.unmatched_rows, vec![0, 2]);
    }

    #[test]
    fn empty_sides_yield_empty_assignment() {
        let a = hungarian(&Tensor::zeros(vec![0, 4])).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_cols, vec![0, 1, 2, 3]);
    }

    #[test]
    fn agrees_with_brute_force_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let n = rng.random_range(1..=6usize);
            let m = rng.random_range(1..=6usize);
            let cost = Tensor::from_parts(
                vec![n, m],
                (0..n * m).map(|_| rng.random_range(-10.0..10.0)).collect(),
            );
            let fast = hungarian(&cost).unwrap();
            let slow = brute_force_assignment(&cost).unwrap();
            assert_eq!(fast.pairs.len(), n.min(m));
            assert!(
                (fast.total_cost - slow).abs() < 1e-9,
                "hungarian {} vs brute force {} on {:?}",
                fast.total_cost,
                slow,
                cost
            );
        }
    }
}
