//! Dense least squares by Householder QR, shared design matrix, many right-hand sides.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Solve `min ||A X - B||_F^2 + ridge ||X||_F^2` for X (n x k), with A m x n and B m x k.
///
/// A non-zero ridge is handled by stacking `sqrt(ridge) I` under A. Fails with
/// [`Error::RankDeficient`] when the (augmented) design matrix has numerical rank
/// below n.
pub fn solve(a: ArrayView2<f64>, b: ArrayView2<f64>, ridge: f64) -> Result<Array2<f64>> {
    let (m, n) = a.dim();
    if b.nrows() != m {
        return Err(Error::Shape { expected: format!("{m} rows in B"), got: format!("{} rows", b.nrows()) });
    }
    let k = b.ncols();
    let extra = if ridge > 0.0 { n } else { 0 };
    let mut q = Array2::zeros((m + extra, n));
    q.slice_mut(s![..m, ..]).assign(&a);
    let mut rhs = Array2::zeros((m + extra, k));
    rhs.slice_mut(s![..m, ..]).assign(&b);
    if ridge > 0.0 {
        let r = ridge.sqrt();
        for i in 0..n {
            q[(m + i, i)] = r;
        }
    }
    let rows = m + extra;
    if rows < n {
        return Err(Error::RankDeficient { rank: rows, rows: n });
    }

    let mut diag = vec![0.0; n];
    let mut v = vec![0.0; rows];
    for j in 0..n {
        let norm = (j..rows).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let alpha = if q[(j, j)] > 0.0 { -norm } else { norm };
        for i in j..rows {
            v[i] = q[(i, j)];
        }
        v[j] -= alpha;
        let vnorm2 = (j..rows).map(|i| v[i] * v[i]).sum::<f64>();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j + 1..n {
            let dot = (j..rows).map(|i| v[i] * q[(i, c)]).sum::<f64>();
            let f = 2.0 * dot / vnorm2;
            for i in j..rows {
                q[(i, c)] -= f * v[i];
            }
        }
        for c in 0..k {
            let dot = (j..rows).map(|i| v[i] * rhs[(i, c)]).sum::<f64>();
            let f = 2.0 * dot / vnorm2;
            for i in j..rows {
                rhs[(i, c)] -= f * v[i];
            }
        }
    }

    let scale = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let tol = scale * (rows.max(n) as f64) * f64::EPSILON * 16.0;
    let rank = diag.iter().filter(|d| d.abs() > tol).count();
    if rank < n || scale == 0.0 {
        return Err(Error::RankDeficient { rank, rows: n });
    }

    let mut x = Array2::zeros((n, k));
    for c in 0..k {
        for i in (0..n).rev() {
            let mut acc = rhs[(i, c)];
            for jj in i + 1..n {
                acc -= q[(i, jj)] * x[(jj, c)];
            }
            x[(i, c)] = acc / diag[i];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random(seed: u64, r: usize, c: usize) -> Array2<f64> {
        let mut rng = stream(seed, &[]);
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn recovers_exact_solution() {
        let a = random(1, 40, 12);
        let x0 = random(2, 12, 5);
        let b = a.dot(&x0);
        let x = solve(a.view(), b.view(), 0.0).unwrap();
        let err = (&x - &x0).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn normal_equations_hold_for_noisy_rhs() {
        let a = random(3, 50, 6);
        let b = random(4, 50, 3);
        let x = solve(a.view(), b.view(), 0.0).unwrap();
        let grad = a.t().dot(&(a.dot(&x) - &b));
        assert!(grad.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn ridge_matches_regularized_normal_equations() {
        let a = random(5, 30, 4);
        let b = random(6, 30, 2);
        let lam = 0.7;
        let x = solve(a.view(), b.view(), lam).unwrap();
        let grad = a.t().dot(&(a.dot(&x) - &b)) + &x * lam;
        assert!(grad.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let mut a = random(7, 20, 4);
        let col = a.column(0).to_owned();
        a.column_mut(3).assign(&(&col * 2.0));
        let b = random(8, 20, 1);
        assert!(matches!(solve(a.view(), b.view(), 0.0), Err(Error::RankDeficient { rank: 3, rows: 4 })));
        assert!(solve(a.view(), b.view(), 1e-3).is_ok());
        let wide = random(9, 3, 5);
        assert!(solve(wide.view(), random(10, 3, 1).view(), 0.0).is_err());
    }
}
