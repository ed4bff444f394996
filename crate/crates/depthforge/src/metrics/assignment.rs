/// Exact minimum-cost assignment on a dense square matrix via the
/// shortest-augmenting-path form of the Hungarian method (the
/// Jonker-Volgenant scheme), O(n^3). Returns the column matched to
/// each row.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based arrays with column 0 as the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // row matched to each column
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            row_to_col[matched_row[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[f64], n: usize, asg: &[usize]) -> f64 {
        asg.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
    }

    fn brute_force_min(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn textbook_instance() {
        let cost = [2.0, 3.0, 3.0, 3.0, 2.0, 3.0, 3.0, 3.0, 2.0];
        let asg = solve_assignment(&cost, 3);
        assert_eq!(asg, vec![0, 1, 2]);
        assert_eq!(total(&cost, 3, &asg), 6.0);
    }

    #[test]
    fn matches_factorial_brute_force() {
        let mut seed = 123u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..200 {
            let n = 2 + trial % 6; // 2..=7
            let cost: Vec<f64> = (0..n * n).map(|_| next()).collect();
            let asg = solve_assignment(&cost, n);
            // Valid permutation.
            let mut seen = vec![false; n];
            for &j in &asg {
                assert!(!seen[j]);
                seen[j] = true;
            }
            let diff = (total(&cost, n, &asg) - brute_force_min(&cost, n)).abs();
            assert!(diff < 1e-12, "suboptimal by {diff} at n={n}");
        }
    }
}
