/// Cost assigned to pairs that may never be matched. Large enough that any
/// matching with more feasible pairs beats one with fewer.
pub const INFEASIBLE: f64 = 1e9;

/// Dense row-major cost matrix (rows: detections, columns: tag-boxes).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "cost matrix shape");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_feasible(&self, r: usize, c: usize) -> bool {
        self.get(r, c) < INFEASIBLE
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    /// Sum of the matched entries, added in row order.
    pub fn total(&self, m: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(r, c)| m.get(r, c)).sum()
    }

    pub fn col_for_row(&self, r: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == r).map(|p| p.1)
    }

    pub fn row_for_col(&self, c: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == c).map(|p| p.0)
    }
}

/// Shortest-augmenting-path assignment with potentials on an `n x m`
/// matrix, `n <= m`. Returns the column assigned to each row.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Minimum-cost one-to-one matching. Infeasible entries are never returned;
/// among matchings the one with most feasible pairs wins, then the cheapest.
pub fn hungarian_assign(m: &CostMatrix) -> Matching {
    let (rows, cols) = (m.rows, m.cols);
    let mut pairs = Vec::new();
    if rows > 0 && cols > 0 {
        if rows <= cols {
            for (r, c) in solve(rows, cols, |i, j| m.get(i, j)).into_iter().enumerate() {
                pairs.push((r, c));
            }
        } else {
            for (c, r) in solve(cols, rows, |i, j| m.get(j, i)).into_iter().enumerate() {
                pairs.push((r, c));
            }
        }
    }
    pairs.retain(|&(r, c)| m.is_feasible(r, c));
    pairs.sort_unstable();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Matching {
        pairs,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Exhaustive minimum over all matchings of the smaller side into the
/// larger one. Exponential; a reference for tests.
pub fn brute_force_assign(m: &CostMatrix) -> Matching {
    fn rec(
        m: &CostMatrix,
        transposed: bool,
        k: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        best: &mut Option<(usize, f64, Vec<usize>)>,
    ) {
        let n = if transposed { m.cols } else { m.rows };
        if k == n {
            let entry = |i: usize, j: usize| if transposed { m.get(j, i) } else { m.get(i, j) };
            let feasible = cur.iter().enumerate().filter(|&(i, &j)| entry(i, j) < INFEASIBLE).count();
            // summed in row order of the original matrix
            let mut pairs: Vec<(usize, usize)> = cur
                .iter()
                .enumerate()
                .filter(|&(i, &j)| entry(i, j) < INFEASIBLE)
                .map(|(i, &j)| if transposed { (j, i) } else { (i, j) })
                .collect();
            pairs.sort_unstable();
            let total: f64 = pairs.iter().map(|&(r, c)| m.get(r, c)).sum();
            let better = match best {
                None => true,
                Some((bf, bt, _)) => feasible > *bf || (feasible == *bf && total < *bt),
            };
            if better {
                *best = Some((feasible, total, cur.clone()));
            }
            return;
        }
        let width = if transposed { m.rows } else { m.cols };
        for j in 0..width {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(m, transposed, k + 1, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let transposed = m.rows > m.cols;
    let width = if transposed { m.rows } else { m.cols };
    let mut best = None;
    rec(m, transposed, 0, &mut vec![false; width], &mut Vec::new(), &mut best);
    let mut pairs: Vec<(usize, usize)> = match best {
        Some((_, _, cur)) => cur
            .into_iter()
            .enumerate()
            .map(|(i, j)| if transposed { (j, i) } else { (i, j) })
            .filter(|&(r, c)| m.is_feasible(r, c))
            .collect(),
        None => Vec::new(),
    };
    pairs.sort_unstable();
    let unmatched_rows = (0..m.rows).filter(|r| !pairs.iter().any(|p| p.0 == *r)).collect();
    let unmatched_cols = (0..m.cols).filter(|c| !pairs.iter().any(|p| p.1 == *c)).collect();
    Matching {
        pairs,
        unmatched_rows,
        unmatched_cols,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_structure_gives_diagonal() {
        let m = CostMatrix::from_fn(4, 4, |r, c| if r == c { 0.0 } else { 1.0 });
        let a = hungarian_assign(&m);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(a.total(&m), 0.0);
    }

    #[test]
    fn single_feasible_entry() {
        let m = CostMatrix::new(1, 1, vec![0.3]);
        assert_eq!(hungarian_assign(&m).pairs, vec![(0, 0)]);
        let m = CostMatrix::new(1, 1, vec![INFEASIBLE]);
        let a = hungarian_assign(&m);
        assert!(a.pairs.is_empty());
        assert_eq!((a.unmatched_rows.clone(), a.unmatched_cols.clone()), (vec![0], vec![0]));
    }

    #[test]
    fn empty_sides() {
        let m = CostMatrix::new(0, 3, vec![]);
        let a = hungarian_assign(&m);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
    }

    #[test]
    fn prefers_more_feasible_pairs() {
        // cheap single pair vs two costlier ones
        let m = CostMatrix::new(2, 2, vec![0.1, 0.5, 0.5, INFEASIBLE]);
        assert_eq!(hungarian_assign(&m).pairs, vec![(0, 1), (1, 0)]);
    }

    fn arb_matrix() -> impl Strategy<Value = CostMatrix> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(prop_oneof![4 => 0.0f64..3.0, 1 => Just(INFEASIBLE)], r * c)
                .prop_map(move |d| CostMatrix::new(r, c, d))
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(m in arb_matrix()) {
            let h = hungarian_assign(&m);
            let b = brute_force_assign(&m);
            prop_assert_eq!(h.pairs.len(), b.pairs.len());
            prop_assert!((h.total(&m) - b.total(&m)).abs() < 1e-9);
            let mut rows: Vec<_> = h.pairs.iter().map(|p| p.0).collect();
            let mut cols: Vec<_> = h.pairs.iter().map(|p| p.1).collect();
            rows.dedup();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(rows.len(), h.pairs.len());
            prop_assert_eq!(cols.len(), h.pairs.len());
        }
    }
}
