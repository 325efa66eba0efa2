//! Memory polynomial models with an optional amplitude offset.
//!
//! Basis element for tap `t` and order `k`:
//! `x_t * rect(|x_t| + b)^(2k)` with `rect(a) = max(0, a)`. With `b = 0` this
//! is the classical memory polynomial `x_t * |x_t|^(2k)`.

use std::ops::Range;

use num_complex::Complex64;

use crate::error::{DpdError, Result};
use crate::exec::{self, Mode};
use crate::linalg;
use crate::signal::{fill_window, ComplexSequence, TapWindow};

/// Relative ridge used when the caller does not pick one.
pub const AUTO_RIDGE_SCALE: f64 = 1e-10;

const BASIS_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpmSpec {
    pub window: TapWindow,
    /// Number of amplitude orders `K`; `k` runs over `0..K`.
    pub k_orders: usize,
    pub offset_b: f64,
}

impl MpmSpec {
    pub fn new(window: TapWindow, k_orders: usize, offset_b: f64) -> Result<Self> {
        if k_orders == 0 {
            return Err(DpdError::arg("k_orders must be >= 1"));
        }
        if !offset_b.is_finite() {
            return Err(DpdError::arg("offset must be finite"));
        }
        Ok(Self { window, k_orders, offset_b })
    }

    pub fn taps(&self) -> usize {
        self.window.total()
    }

    pub fn n_terms(&self) -> usize {
        self.taps() * self.k_orders
    }
}

/// `rect(a) = max(0, a)`; shared by the expert basis and the attention head.
#[inline]
pub fn rect(a: f64) -> f64 {
    a.max(0.0)
}

/// Write the `K` basis terms of one tap value into `out`.
#[inline]
pub fn tap_terms(x: Complex64, offset_b: f64, out: &mut [Complex64]) {
    let r = rect(x.norm() + offset_b);
    let r2 = r * r;
    let mut pow = 1.0;
    for slot in out.iter_mut() {
        *slot = x * pow;
        pow *= r2;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpmCoefficients {
    pub spec: MpmSpec,
    /// Row-major `(tap, order)`, length `T * K`.
    pub lambda: Vec<Complex64>,
}

impl MpmCoefficients {
    pub fn new(spec: MpmSpec, lambda: Vec<Complex64>) -> Result<Self> {
        if lambda.len() != spec.n_terms() {
            return Err(DpdError::arg(format!(
                "expected {} coefficients for T={} K={}, got {}",
                spec.n_terms(),
                spec.taps(),
                spec.k_orders,
                lambda.len()
            )));
        }
        if lambda.iter().any(|z| !z.is_finite()) {
            return Err(DpdError::arg("coefficients must be finite"));
        }
        Ok(Self { spec, lambda })
    }

    /// Identity compensator: `lambda[0, 0] = 1` on the current-sample tap.
    pub fn identity(spec: MpmSpec) -> Self {
        let mut lambda = vec![Complex64::new(0.0, 0.0); spec.n_terms()];
        lambda[spec.window.post_taps * spec.k_orders] = Complex64::new(1.0, 0.0);
        Self { spec, lambda }
    }

    pub fn get(&self, tap: usize, order: usize) -> Complex64 {
        self.lambda[tap * self.spec.k_orders + order]
    }

    /// Real trainable parameters (two per complex coefficient).
    pub fn param_count(&self) -> usize {
        2 * self.lambda.len()
    }

    /// Output for one tap window.
    pub fn eval_window(&self, taps: &[Complex64], scratch: &mut [Complex64]) -> Complex64 {
        let k = self.spec.k_orders;
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, &x) in taps.iter().enumerate() {
            tap_terms(x, self.spec.offset_b, scratch);
            for (term, lam) in scratch.iter().zip(&self.lambda[t * k..(t + 1) * k]) {
                acc += term * lam;
            }
        }
        acc
    }
}

/// Rows of basis elements over a range of output samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub spec: MpmSpec,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols`.
    pub data: Vec<Complex64>,
}

impl BasisMatrix {
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn build_basis(psi: &ComplexSequence, spec: &MpmSpec, sample_range: Range<usize>) -> Result<BasisMatrix> {
    build_basis_with(Mode::default(), psi, spec, sample_range)
}

pub fn build_basis_with(mode: Mode, psi: &ComplexSequence, spec: &MpmSpec, sample_range: Range<usize>) -> Result<BasisMatrix> {
    if sample_range.is_empty() {
        return Err(DpdError::arg("basis sample range is empty"));
    }
    if sample_range.end > psi.len() {
        return Err(DpdError::arg(format!(
            "basis range {:?} exceeds sequence length {}",
            sample_range,
            psi.len()
        )));
    }
    let cols = spec.n_terms();
    let k = spec.k_orders;
    let x = psi.samples();
    let chunks: Vec<Range<usize>> = sample_range
        .clone()
        .step_by(BASIS_CHUNK)
        .map(|s| s..(s + BASIS_CHUNK).min(sample_range.end))
        .collect();
    let parts = exec::map_ordered(mode, &chunks, |chunk| {
        let mut taps = vec![Complex64::new(0.0, 0.0); spec.taps()];
        let mut out = vec![Complex64::new(0.0, 0.0); chunk.len() * cols];
        for (i, n) in chunk.clone().enumerate() {
            fill_window(x, n, spec.window, &mut taps);
            let row = &mut out[i * cols..(i + 1) * cols];
            for (t, &xt) in taps.iter().enumerate() {
                tap_terms(xt, spec.offset_b, &mut row[t * k..(t + 1) * k]);
            }
        }
        out
    });
    Ok(BasisMatrix { spec: *spec, rows: sample_range.len(), cols, data: parts.concat() })
}

/// Least-squares coefficients for `basis * lambda ~ targets`.
///
/// `ridge = None` picks `AUTO_RIDGE_SCALE` times the mean diagonal of the
/// normal matrix; `Some(0.0)` is plain least squares.
pub fn ls_fit(basis: &BasisMatrix, targets: &[Complex64], ridge: Option<f64>) -> Result<MpmCoefficients> {
    if targets.len() != basis.rows {
        return Err(DpdError::arg(format!(
            "target length {} does not match {} basis rows",
            targets.len(),
            basis.rows
        )));
    }
    if basis.rows < basis.cols {
        return Err(DpdError::arg(format!(
            "need at least as many rows as columns ({} < {})",
            basis.rows, basis.cols
        )));
    }
    let ridge = match ridge {
        Some(r) if r >= 0.0 && r.is_finite() => r,
        Some(r) => return Err(DpdError::arg(format!("ridge must be non-negative, got {r}"))),
        None => {
            let diag_mean = basis.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / basis.cols as f64;
            AUTO_RIDGE_SCALE * diag_mean
        }
    };
    let lambda = linalg::lstsq(&basis.data, basis.rows, basis.cols, targets, ridge)?;
    MpmCoefficients::new(basis.spec, lambda)
}

pub fn mpm_predict(coeffs: &MpmCoefficients, psi: &ComplexSequence) -> ComplexSequence {
    let x = psi.samples();
    let mut taps = vec![Complex64::new(0.0, 0.0); coeffs.spec.taps()];
    let mut scratch = vec![Complex64::new(0.0, 0.0); coeffs.spec.k_orders];
    let out = (0..x.len())
        .map(|n| {
            fill_window(x, n, coeffs.spec.window, &mut taps);
            coeffs.eval_window(&taps, &mut scratch)
        })
        .collect();
    psi.with_samples(out)
}

/// `sum |basis * lambda - targets|^2`.
pub fn residual_energy(basis: &BasisMatrix, lambda: &[Complex64], targets: &[Complex64]) -> f64 {
    (0..basis.rows)
        .map(|i| {
            let fit: Complex64 = basis.row(i).iter().zip(lambda).map(|(a, l)| a * l).sum();
            (fit - targets[i]).norm_sqr()
        })
        .sum()
}
