//! Dense phase-one simplex for small feasibility problems `A w = b, w ≥ 0`.
//!
//! Bland's rule is used for both the entering and the leaving variable, so
//! the method terminates on degenerate problems (the vertex set of the local
//! polytope is highly degenerate).

/// Returns some non-negative `w` with `A w = b` (to `tol`), or `None`.
pub fn find_nonnegative_solution(a: &[Vec<f64>], b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let m = a.len();
    assert_eq!(m, b.len(), "row count mismatch");
    let n = a.first().map_or(0, Vec::len);
    let width = n + m + 1;
    let rhs = n + m;

    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = flip * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][rhs] = flip * b[i];
    }
    // reduced costs of the phase-one objective Σ artificials
    for j in 0..n {
        t[m][j] = -(0..m).map(|i| t[i][j]).sum::<f64>();
    }
    t[m][rhs] = -(0..m).map(|i| t[i][rhs]).sum::<f64>();

    let mut basis: Vec<usize> = (n..n + m).collect();
    // generous bound; Bland's rule guarantees termination
    for _ in 0..10_000 {
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -tol) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > tol {
                let ratio = t[i][rhs] / t[i][enter];
                let better = ratio < best - tol
                    || (ratio <= best + tol && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let r = leave?;
        pivot(&mut t, r, enter);
        basis[r] = enter;
    }

    if -t[m][rhs] > tol {
        return None;
    }
    let mut w = vec![0.0; n];
    for (i, &var) in basis.iter().enumerate() {
        if var < n {
            w[var] = t[i][rhs].max(0.0);
        }
    }
    let residual = (0..m)
        .map(|i| ((0..n).map(|j| a[i][j] * w[j]).sum::<f64>() - b[i]).abs())
        .fold(0.0, f64::max);
    (residual <= tol.max(1e-12) * 10.0).then_some(w)
}

fn pivot(t: &mut [Vec<f64>], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
    }
}
