use crate::error::{Error, Result};

/// Relative pivot tolerance on the equilibrated Gram matrix.
pub const PIVOT_TOL: f64 = 1e-10;

/// Solves `G x = b` for a symmetric positive semi-definite `p x p` matrix
/// (row-major) by diagonal equilibration followed by symmetric pivoted
/// Cholesky. Fails with [`Error::RankDeficient`] when a pivot of the
/// unit-diagonal matrix drops below [`PIVOT_TOL`], i.e. when some column is
/// (numerically) a linear combination of the others.
pub fn solve_psd(g: &[f64], b: &[f64], p: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(g.len(), p * p);
    debug_assert_eq!(b.len(), p);
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let d = g[j * p + j];
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::RankDeficient { column: j });
        }
        scale[j] = 1.0 / d.sqrt();
    }
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            a[i * p + j] = g[i * p + j] * scale[i] * scale[j];
        }
    }
    let mut perm: Vec<usize> = (0..p).collect();
    for k in 0..p {
        let q = (k..p)
            .max_by(|&i, &j| a[i * p + i].total_cmp(&a[j * p + j]).then(j.cmp(&i)))
            .unwrap();
        if !(a[q * p + q] > PIVOT_TOL) {
            return Err(Error::RankDeficient { column: perm[q] });
        }
        if q != k {
            perm.swap(k, q);
            for c in 0..p {
                a.swap(k * p + c, q * p + c);
            }
            for r in 0..p {
                a.swap(r * p + k, r * p + q);
            }
        }
        let lkk = a[k * p + k].sqrt();
        a[k * p + k] = lkk;
        for i in (k + 1)..p {
            a[i * p + k] /= lkk;
        }
        for i in (k + 1)..p {
            let lik = a[i * p + k];
            for j in (k + 1)..=i {
                a[i * p + j] -= lik * a[j * p + k];
            }
        }
        // keep the trailing block symmetric for the next pivot search
        for i in (k + 1)..p {
            for j in (i + 1)..p {
                a[i * p + j] = a[j * p + i];
            }
        }
    }
    // forward and back substitution on the permuted, scaled right-hand side
    let mut y: Vec<f64> = perm.iter().map(|&j| b[j] * scale[j]).collect();
    for i in 0..p {
        let mut s = y[i];
        for k in 0..i {
            s -= a[i * p + k] * y[k];
        }
        y[i] = s / a[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= a[k * p + i] * y[k];
        }
        y[i] = s / a[i * p + i];
    }
    let mut x = vec![0.0; p];
    for (k, &j) in perm.iter().enumerate() {
        x[j] = y[k] * scale[j];
    }
    Ok(x)
}
