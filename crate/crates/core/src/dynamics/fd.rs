//! Central finite differences, used both as the fallback for derivative
//! callbacks a system does not supply and as the oracle in
//! [`check_derivatives`](super::check_derivatives).

use nalgebra::{DMatrix, DVector};

pub fn jacobian(f: impl Fn(&[f64]) -> DVector<f64>, u: &[f64], eps: f64) -> DMatrix<f64> {
    let m = u.len();
    let mut x = u.to_vec();
    let mut cols = Vec::with_capacity(m);
    for j in 0..m {
        x[j] = u[j] + eps;
        let plus = f(&x);
        x[j] = u[j] - eps;
        let minus = f(&x);
        x[j] = u[j];
        cols.push((plus - minus) / (2.0 * eps));
    }
    DMatrix::from_columns(&cols)
}

pub fn gradient(f: impl Fn(&[f64]) -> f64, u: &[f64], eps: f64) -> DVector<f64> {
    let mut x = u.to_vec();
    DVector::from_iterator(
        u.len(),
        (0..u.len()).map(|j| {
            x[j] = u[j] + eps;
            let plus = f(&x);
            x[j] = u[j] - eps;
            let minus = f(&x);
            x[j] = u[j];
            (plus - minus) / (2.0 * eps)
        }),
    )
}

pub fn derivative_vec(f: impl Fn(f64) -> DVector<f64>, s: f64, eps: f64) -> DVector<f64> {
    (f(s + eps) - f(s - eps)) / (2.0 * eps)
}

pub fn derivative(f: impl Fn(f64) -> f64, s: f64, eps: f64) -> f64 {
    (f(s + eps) - f(s - eps)) / (2.0 * eps)
}
