//! Minimal-cost one-to-one assignment (Kuhn-Munkres with potentials, O(n^3)).

use nalgebra::DMatrix;

/// Solves the rectangular assignment problem: returns the pairs `(row, col)`
/// of a minimum-total-cost assignment covering `min(rows, cols)` entries,
/// sorted by row. Rectangular inputs are padded internally to square with a
/// cost strictly larger than any real entry, so padding never changes which
/// real pairs win. An empty matrix yields an empty assignment. Ties are
/// broken deterministically toward lower column indices.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let rows = cost.nrows();
    let cols = cost.ncols();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let pad = cost.iter().cloned().fold(0.0f64, f64::max) + 1.0;
    let mut square = DMatrix::from_element(n, n, pad);
    square.view_mut((0, 0), (rows, cols)).copy_from(cost);

    let assigned_row = hungarian_square(&square);

    let mut pairs: Vec<(usize, usize)> = assigned_row
        .iter()
        .enumerate()
        .filter(|&(col, &row)| row < rows && col < cols)
        .map(|(col, &row)| (row, col))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Total cost of an assignment, summed in row order so that two routes over
/// the same pairs produce bitwise-identical sums.
pub fn assignment_cost(cost: &DMatrix<f64>, pairs: &[(usize, usize)]) -> f64 {
    let mut sorted: Vec<_> = pairs.to_vec();
    sorted.sort_unstable();
    sorted.iter().map(|&(r, c)| cost[(r, c)]).sum()
}

/// Square Kuhn-Munkres. Returns, for each column, the row assigned to it.
/// Row `n` and column `n` act as virtual slots while an augmenting path is
/// grown.
fn hungarian_square(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let mut row_potential = vec![0.0f64; n + 1];
    let mut col_potential = vec![0.0f64; n + 1];
    // assigned_row[j] = row currently matched to column j; n = unmatched.
    let mut assigned_row = vec![n; n + 1];
    let mut path = vec![0usize; n + 1];

    for row in 0..n {
        assigned_row[n] = row;
        let mut current_col = n;
        let mut min_reduced = vec![f64::INFINITY; n + 1];
        let mut visited = vec![false; n + 1];
        loop {
            visited[current_col] = true;
            let current_row = assigned_row[current_col];
            let mut delta = f64::INFINITY;
            let mut next_col = n;
            for col in 0..n {
                if visited[col] {
                    continue;
                }
                let reduced =
                    cost[(current_row, col)] - row_potential[current_row] - col_potential[col];
                if reduced < min_reduced[col] {
                    min_reduced[col] = reduced;
                    path[col] = current_col;
                }
                if min_reduced[col] < delta {
                    delta = min_reduced[col];
                    next_col = col;
                }
            }
            for col in 0..=n {
                if visited[col] {
                    row_potential[assigned_row[col]] += delta;
                    col_potential[col] -= delta;
                } else {
                    min_reduced[col] -= delta;
                }
            }
            current_col = next_col;
            if assigned_row[current_col] == n {
                break;
            }
        }
        // Walk the alternating path back, flipping assignments.
        while current_col != n {
            let previous = path[current_col];
            assigned_row[current_col] = assigned_row[previous];
            current_col = previous;
        }
    }
    assigned_row.truncate(n);
    assigned_row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn two_by_two_picks_diagonal() {
        let cost = m(2, 2, &[0.1, 0.9, 0.9, 0.1]);
        let pairs = solve_assignment(&cost);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(assignment_cost(&cost, &pairs), 0.1 + 0.1);
    }

    #[test]
    fn identity_like_cost_assigns_diagonal() {
        let mut cost = DMatrix::from_element(4, 4, 1.0);
        cost.fill_diagonal(0.0);
        let pairs = solve_assignment(&cost);
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(assignment_cost(&cost, &pairs), 0.0);
    }

    #[test]
    fn rectangular_two_by_three() {
        let cost = m(2, 3, &[5.0, 1.0, 9.0, 1.0, 5.0, 9.0]);
        let pairs = solve_assignment(&cost);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(assignment_cost(&cost, &pairs), 2.0);
    }

    #[test]
    fn more_rows_than_columns_covers_columns() {
        let cost = m(3, 2, &[8.0, 5.0, 4.0, 2.0, 7.0, 3.0]);
        let pairs = solve_assignment(&cost);
        assert_eq!(pairs.len(), 2);
        // Optimal: row 1 -> col 0 (4), row 2 -> col 1 (3).
        assert_eq!(assignment_cost(&cost, &pairs), 7.0);
    }

    #[test]
    fn empty_matrix_yields_empty_assignment() {
        assert!(solve_assignment(&DMatrix::<f64>::zeros(0, 0)).is_empty());
        assert!(solve_assignment(&DMatrix::<f64>::zeros(0, 3)).is_empty());
        assert!(solve_assignment(&DMatrix::<f64>::zeros(3, 0)).is_empty());
    }

    #[test]
    fn negative_costs_are_handled() {
        let cost = m(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let pairs = solve_assignment(&cost);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(assignment_cost(&cost, &pairs), -2.0);
    }

    #[test]
    fn matches_brute_force_on_small_random_grids() {
        use itertools::Itertools;
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..60 {
            let n = 2 + trial % 5;
            let cost = DMatrix::from_fn(n, n, |_, _| (next() * 64.0).floor() / 8.0);
            let pairs = solve_assignment(&cost);
            let found = assignment_cost(&cost, &pairs);
            let best = (0..n)
                .permutations(n)
                .map(|perm| {
                    perm.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(found, best, "trial {trial} cost {cost}");
        }
    }
}
