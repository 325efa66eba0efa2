//! Complex least squares by Householder QR.

use num_complex::Complex64;

use crate::error::{DpdError, Result};

/// A column is treated as dependent when its QR diagonal falls below this
/// fraction of its own original norm.
const RANK_TOL: f64 = 1e-11;

/// Solve `min |A x - b|^2 + ridge |x|^2` for row-major `a` (`rows x cols`).
///
/// The ridge term is folded in by appending `sqrt(ridge) * I` below `A`,
/// so the normal equations are never formed.
pub(crate) fn lstsq(a: &[Complex64], rows: usize, cols: usize, b: &[Complex64], ridge: f64) -> Result<Vec<Complex64>> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(b.len(), rows);
    let zero = Complex64::new(0.0, 0.0);
    let extra = if ridge > 0.0 { cols } else { 0 };
    let m = rows + extra;

    // column-major working copy
    let mut q: Vec<Vec<Complex64>> = (0..cols)
        .map(|j| {
            let mut col: Vec<Complex64> = (0..rows).map(|i| a[i * cols + j]).collect();
            col.resize(m, zero);
            if extra > 0 {
                col[rows + j] = Complex64::new(ridge.sqrt(), 0.0);
            }
            col
        })
        .collect();
    let mut rhs = b.to_vec();
    rhs.resize(m, zero);

    let col_norms: Vec<f64> = q.iter().map(|c| norm(c)).collect();
    let mut diag = vec![zero; cols];
    let mut dependent = Vec::new();

    for j in 0..cols {
        let (head, tail) = q.split_at_mut(j + 1);
        let col = &mut head[j];
        let x_norm = norm(&col[j..]);
        if x_norm <= RANK_TOL * col_norms[j] || x_norm == 0.0 {
            dependent.push(j);
            continue;
        }
        let phase = if col[j].norm() > 0.0 { col[j] / col[j].norm() } else { Complex64::new(1.0, 0.0) };
        let alpha = -phase * x_norm;
        // v = x - alpha e1, H = I - 2 v v^H / (v^H v)
        col[j] -= alpha;
        let v = &col[j..];
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let apply = |target: &mut [Complex64]| {
            let dot: Complex64 = v.iter().zip(target.iter()).map(|(vi, ti)| vi.conj() * ti).sum();
            let s = dot * (2.0 / vnorm2);
            for (ti, vi) in target.iter_mut().zip(v) {
                *ti -= vi * s;
            }
        };
        for other in tail.iter_mut() {
            apply(&mut other[j..]);
        }
        apply(&mut rhs[j..]);
        diag[j] = alpha;
    }
    if !dependent.is_empty() {
        return Err(DpdError::Conditioning { columns: dependent });
    }

    // back substitution on R (upper triangle stored above the diagonal in q)
    let mut x = vec![zero; cols];
    for j in (0..cols).rev() {
        let mut acc = rhs[j];
        for (k, xk) in x.iter().enumerate().skip(j + 1) {
            acc -= q[k][j] * xk;
        }
        x[j] = acc / diag[j];
    }
    if x.iter().any(|z| !z.is_finite()) {
        return Err(DpdError::Conditioning { columns: (0..cols).collect() });
    }
    Ok(x)
}

fn norm(v: &[Complex64]) -> f64 {
    // scaled to avoid overflow on high-order polynomial columns
    let scale = v.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|z| (z / scale).norm_sqr()).sum::<f64>().sqrt()
}
