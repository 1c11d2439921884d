//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// QR factorization with the sign convention `diag(R) >= 0`.
pub fn qr_positive(m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows() {
        if r[(j, j)] < 0.0 {
            r.row_mut(j).neg_mut();
            q.column_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Solves `R x = b` for upper-triangular `R`, column by column.
pub fn solve_upper(r: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    r.solve_upper_triangular(b)
}

/// Spectral condition number `sigma_max / sigma_min`; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Normalizes every column to unit Euclidean norm, returning the removed norms.
pub fn normalize_columns(m: &mut DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| {
            let n = m.column(j).norm();
            if n > 0.0 {
                m.column_mut(j).unscale_mut(n);
            }
            n
        })
        .collect()
}

/// Angle in `[0, pi/2]` between two lines.
pub fn line_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    // atan2 keeps full precision for nearly parallel lines, unlike acos.
    let bn = b / b.norm();
    let along = a.dot(&bn);
    let perp = (a - &bn * along).norm();
    perp.atan2(along.abs())
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Mean and standard error of the mean from equal-size batches of `values`.
///
/// The final partial batch, if any, is folded into the last full batch.
pub fn batch_mean_stderr(values: &[f64], weights: &[f64], batches: usize) -> (f64, f64) {
    assert_eq!(values.len(), weights.len());
    let total_w: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total_w;
    let n = values.len();
    let batches = batches.min(n).max(1);
    if batches < 2 {
        return (mean, 0.0);
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * size;
            let hi = if b + 1 == batches { n } else { lo + size };
            let w: f64 = weights[lo..hi].iter().sum();
            values[lo..hi].iter().zip(&weights[lo..hi]).map(|(v, w)| v * w).sum::<f64>() / w
        })
        .collect();
    (mean, sample_stderr(&means))
}

/// Standard error of the mean of independent samples.
pub fn sample_stderr(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}
