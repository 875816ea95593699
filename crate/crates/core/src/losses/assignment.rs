//! Exact linear assignment by shortest augmenting paths with dual
//! potentials (Jonker-Volgenant / Hungarian family), O(n³).

/// Minimum-cost perfect matching on a square cost matrix. Returns the
/// optimal cost and `assignment[row] = column`.
pub fn solve_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    debug_assert!(cost.iter().all(|r| r.len() == n));
    // 1-based arrays with a virtual column 0, as in the classical
    // formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    // Summing the original entries avoids drift accumulated in the duals.
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (total, assignment)
}

/// Manhattan distance between two stroke vectors.
pub fn l1(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn l1_cost_matrix(g: &[[f64; 8]], p: &[[f64; 8]]) -> Vec<Vec<f64>> {
    g.iter().map(|gi| p.iter().map(|pj| l1(gi, pj)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost[row][j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
        best
    }

    #[test]
    fn swap_is_found() {
        let (c, a) = solve_assignment(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert_eq!(c, 2.0);
        assert_eq!(a, vec![1, 0]);
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(solve_assignment(&[]), (0.0, vec![]));
        assert_eq!(solve_assignment(&[vec![3.5]]), (3.5, vec![0]));
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..=6, seed in prop::collection::vec(-5.0..5.0f64, 36)) {
            let cost: Vec<Vec<f64>> = (0..n).map(|i| seed[i * 6..i * 6 + n].to_vec()).collect();
            let (c, a) = solve_assignment(&cost);
            let mut seen = a.clone();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            prop_assert!((c - brute_force(&cost)).abs() < 1e-9);
            let identity: f64 = (0..n).map(|i| cost[i][i]).sum();
            prop_assert!(c <= identity + 1e-12);
        }
    }
}
