use super::squared_distance;

/// Minimum-cost assignment of every row to a distinct column (Hungarian
/// method with potentials, O(rows²·cols)). Requires `rows ≤ cols`; returns
/// the column chosen for each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= cols ({n} > {m})");
    // 1-based potentials; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of_col = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if row_of_col[j] != 0 {
            assignment[row_of_col[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Matches new centroids to previous ones by minimum total squared distance.
///
/// Returns, for every new centroid, the index of its previous counterpart;
/// `min(k_prev, k_new)` entries are `Some` and the mapping is injective.
pub fn match_clusters(prev: &[f64], new: &[f64], dim: usize) -> Vec<Option<usize>> {
    let prev_rows: Vec<&[f64]> = prev.chunks_exact(dim).collect();
    let new_rows: Vec<&[f64]> = new.chunks_exact(dim).collect();
    let mut out = vec![None; new_rows.len()];
    if prev_rows.is_empty() || new_rows.is_empty() {
        return out;
    }
    if new_rows.len() <= prev_rows.len() {
        let cost: Vec<Vec<f64>> =
            new_rows.iter().map(|n| prev_rows.iter().map(|p| squared_distance(n, p)).collect()).collect();
        for (i, j) in hungarian(&cost).into_iter().enumerate() {
            out[i] = Some(j);
        }
    } else {
        let cost: Vec<Vec<f64>> =
            prev_rows.iter().map(|p| new_rows.iter().map(|n| squared_distance(n, p)).collect()).collect();
        for (j, i) in hungarian(&cost).into_iter().enumerate() {
            out[i] = Some(j);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_swap() {
        let c = [0.0, 0.0, 1.0, 1.0, 5.0, 5.0];
        assert_eq!(match_clusters(&c, &c, 2), vec![Some(0), Some(1), Some(2)]);
        let swapped = [1.0, 1.0, 0.0, 0.0, 5.0, 5.0];
        assert_eq!(match_clusters(&c, &swapped, 2), vec![Some(1), Some(0), Some(2)]);
    }

    #[test]
    fn rectangular_cases() {
        let prev = [0.0, 10.0];
        let new = [9.0, 0.5, 20.0];
        assert_eq!(match_clusters(&prev, &new, 1), vec![Some(1), Some(0), None]);
        let prev = [0.0, 10.0, 20.0];
        let new = [19.0];
        assert_eq!(match_clusters(&prev, &new, 1), vec![Some(2)]);
        assert_eq!(match_clusters(&[], &new, 1), vec![None]);
    }

    #[test]
    fn hungarian_prefers_global_optimum() {
        // Greedy would take (0,0)=1 and then pay 100.
        let cost = vec![vec![1.0, 2.0], vec![1.5, 100.0]];
        assert_eq!(hungarian(&cost), vec![1, 0]);
    }
}
