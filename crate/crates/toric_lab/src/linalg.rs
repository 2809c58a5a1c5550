//! Small dense linear programming used by the convex envelope.

/// Minimizes `c^T λ` subject to `A λ = b`, `λ ≥ 0`, with `A` given by columns of height `rows`.
///
/// Two-phase tableau simplex with Bland's rule. Returns `None` if infeasible. The problems here
/// are bounded (the feasible set is a simplex of convex weights), so unboundedness is not handled
/// beyond returning `None`.
pub fn simplex_min(c: &[f64], cols: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let m = b.len();
    let n = cols.len();
    let width = n + m + 1;
    // Tableau rows: constraint rows, then the objective row.
    let mut t = vec![vec![0.0; width]; m + 1];
    for r in 0..m {
        let sgn = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r][j] = sgn * cols[j][r];
        }
        t[r][n + r] = 1.0;
        t[r][width - 1] = sgn * b[r];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = 1e-11;

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0; width];
    for r in 0..m {
        for j in 0..width {
            if !(n..n + m).contains(&j) {
                obj[j] -= t[r][j];
            }
        }
    }
    t[m] = obj;
    run(&mut t, &mut basis, n + m, eps)?;
    if -t[m][width - 1] > 1e-9 {
        return None;
    }
    // Drive remaining artificials out of the basis.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t[r][j].abs() > eps) {
                pivot(&mut t, r, j);
                basis[r] = j;
            }
        }
    }

    // Phase 2.
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    for r in 0..m {
        let bj = basis[r];
        if bj < n && c[bj] != 0.0 {
            let f = c[bj];
            for j in 0..width {
                obj[j] -= f * t[r][j];
            }
        }
    }
    t[m] = obj;
    run(&mut t, &mut basis, n, eps)?;
    let mut x = vec![0.0; n];
    for r in 0..m {
        if basis[r] < n {
            x[basis[r]] = t[r][width - 1];
        }
    }
    let val = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Some((val, x))
}

fn run(t: &mut [Vec<f64>], basis: &mut [usize], ncols: usize, eps: f64) -> Option<()> {
    let m = basis.len();
    let width = t[0].len();
    for _ in 0..50_000 {
        // Bland: first column with negative reduced cost.
        let Some(j) = (0..ncols).find(|&j| t[m][j] < -eps) else {
            return Some(());
        };
        let mut best: Option<(f64, usize)> = None;
        for r in 0..m {
            if t[r][j] > eps {
                let ratio = t[r][width - 1] / t[r][j];
                match best {
                    Some((b, br)) if ratio > b + 1e-14 || (ratio >= b - 1e-14 && basis[r] > basis[br]) => {}
                    _ => best = Some((ratio, r)),
                }
            }
        }
        let (_, r) = best?;
        pivot(t, r, j);
        basis[r] = j;
    }
    None
}

fn pivot(t: &mut [Vec<f64>], r: usize, j: usize) {
    let p = t[r][j];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let row = t[r].clone();
    for (i, tr) in t.iter_mut().enumerate() {
        if i != r {
            let f = tr[j];
            if f != 0.0 {
                for (a, b) in tr.iter_mut().zip(&row) {
                    *a -= f * b;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // min x + 2y  s.t. x + y = 1  →  1 at (1, 0)
        let (v, x) = simplex_min(&[1.0, 2.0], &[vec![1.0], vec![1.0]], &[1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12 && (x[0] - 1.0).abs() < 1e-12);
        assert!(simplex_min(&[1.0], &[vec![1.0]], &[-1.0]).is_none());
    }
}
