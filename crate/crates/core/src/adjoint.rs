//! Adjoint dynamics along a trajectory: backward homogeneous and
//! inhomogeneous adjoint solutions, the adjoint propagation operator, the
//! adjoint CLV frame (dual of the tangent CLV frame) and adjoint projections.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::SystemKind;
use crate::error::{Error, Result};
use crate::linalg::{line_angle, qr_positive};
use crate::series::{MatSeries, VecSeries};
use crate::tangent::{check_growth, select, ClvBasis, Linearization, SolutionKind, Subspace};

/// Relative size of `<ybar, f>` below which the neutral pairing is treated as
/// degenerate.
pub const PAIRING_THRESHOLD: f64 = 1e-6;

/// An adjoint solution `wbar_0 .. wbar_N`, index-aligned with its trajectory.
#[derive(Clone, Debug)]
pub struct AdjointSolution {
    pub values: VecSeries,
    pub kind: SolutionKind,
}

fn check_len(lin: &Linearization, v: &[f64]) -> Result<()> {
    if v.len() != lin.dim() {
        return Err(Error::InvalidInput(format!("adjoint vector has {} components, expected {}", v.len(), lin.dim())));
    }
    Ok(())
}

fn reversed(values: Vec<DVector<f64>>, dim: usize) -> VecSeries {
    let mut out = VecSeries::with_capacity(dim, values.len());
    for v in values.iter().rev() {
        out.push(v.as_slice());
    }
    out
}

/// Solves the homogeneous adjoint equation backward from `values[N] =
/// w_terminal`, i.e. `wbar_i = A_i^T wbar_{i+1}`.
///
/// For flows this is the same as RK4 for `dwbar/dt = -f_u^T wbar` run
/// backward with the stage points of the tangent propagator, so the pairing
/// with any homogeneous tangent solution is conserved to roundoff.
pub fn solve_homogeneous_adjoint(lin: &Linearization, w_terminal: &[f64]) -> Result<AdjointSolution> {
    check_len(lin, w_terminal)?;
    let n = lin.steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut w = DVector::from_column_slice(w_terminal);
    out.push(w.clone());
    for i in (0..n).rev() {
        w = lin.step_matrix(i).tr_mul(&w);
        check_growth(&w, i)?;
        out.push(w.clone());
    }
    Ok(AdjointSolution { values: reversed(out, lin.dim()), kind: SolutionKind::Homogeneous })
}

/// Solves `dwbar/dt + f_u^T wbar = g` backward in time (flows) or
/// `wbar_l = f_u(u_l)^T wbar_{l+1} + g_l` (maps) from `values[N] =
/// w_terminal`. `forcing` holds one vector per state; for maps the last one
/// is unused.
pub fn solve_inhomogeneous_adjoint(lin: &Linearization, w_terminal: &[f64], forcing: &VecSeries) -> Result<AdjointSolution> {
    check_len(lin, w_terminal)?;
    let n = lin.steps();
    if forcing.dim() != lin.dim() || forcing.len() != n + 1 {
        return Err(Error::InvalidInput(format!("forcing must hold {} vectors of dimension {}", n + 1, lin.dim())));
    }
    let h = lin.trajectory().step;
    let mut out = Vec::with_capacity(n + 1);
    let mut w = DVector::from_column_slice(w_terminal);
    out.push(w.clone());
    for i in (0..n).rev() {
        w = match lin.kind() {
            SystemKind::Map => lin.step_matrix(i).tr_mul(&w) + forcing.vector(i),
            SystemKind::Flow => {
                // RK4 in reversed time sigma = -t: dwbar/dsigma = f_u^T wbar - g.
                let [j0, jm, j1] = lin.stage_jacobians(i);
                let g0 = forcing.vector(i);
                let g1 = forcing.vector(i + 1);
                let gm = (&g0 + &g1) * 0.5;
                let k1 = j1.tr_mul(&w) - &g1;
                let k2 = jm.tr_mul(&(&w + &k1 * (0.5 * h))) - &gm;
                let k3 = jm.tr_mul(&(&w + &k2 * (0.5 * h))) - &gm;
                let k4 = j0.tr_mul(&(&w + &k3 * h)) - &g0;
                &w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
        };
        check_growth(&w, i)?;
        out.push(w.clone());
    }
    Ok(AdjointSolution { values: reversed(out, lin.dim()), kind: SolutionKind::Inhomogeneous })
}

/// Applies the adjoint propagation operator, mapping an adjoint solution at
/// step `i2` to step `i1`. The usual direction is backward (`i1 < i2`);
/// forward propagation solves with each `A_i^T`.
pub fn adjoint_propagate(lin: &Linearization, i2: usize, i1: usize, w: &[f64]) -> Result<DVector<f64>> {
    check_len(lin, w)?;
    let n = lin.steps();
    if i1 > n || i2 > n {
        return Err(Error::InvalidInput(format!("step index out of range 0..={n}")));
    }
    let mut v = DVector::from_column_slice(w);
    if i1 <= i2 {
        for i in (i1..i2).rev() {
            v = lin.step_matrix(i).tr_mul(&v);
            check_growth(&v, i)?;
        }
    } else {
        for i in i2..i1 {
            v = lin.step_matrix(i).transpose().lu().solve(&v).ok_or(Error::Singular { step: i })?;
            check_growth(&v, i + 1)?;
        }
    }
    Ok(v)
}

/// Adjoint CLVs on the same window as the tangent basis they were built from.
#[derive(Clone, Debug)]
pub struct AdjointClvBasis {
    pub start: usize,
    /// Column `j` is the unit adjoint CLV paired with tangent CLV `j`.
    pub frames: MatSeries,
    /// Norm removed from each column of `Z^{-T}`, so that
    /// `Z^{-T} = frames * diag(dual_scale)`.
    pub dual_scale: VecSeries,
    /// Flows: the neutral adjoint CLV as a homogeneous adjoint solution,
    /// one value per window step.
    pub neutral: Option<VecSeries>,
    /// `<ybar, f>` at the window start.
    pub pairing: Option<f64>,
    /// Largest relative deviation of `<ybar(t_i), f(u_i)>` from `pairing`.
    pub pairing_drift: Option<f64>,
}

impl AdjointClvBasis {
    pub fn end(&self) -> usize {
        self.start + self.frames.len() - 1
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i <= self.end()
    }

    fn rel(&self, i: usize) -> usize {
        assert!(self.contains(i), "step {i} outside the adjoint CLV window");
        i - self.start
    }

    /// `Z_i^{-T}`, the unnormalized dual basis.
    pub fn dual(&self, i: usize) -> DMatrix<f64> {
        let k = self.rel(i);
        let mut y = self.frames.matrix(k);
        for (j, s) in self.dual_scale.get(k).iter().enumerate() {
            y.column_mut(j).scale_mut(*s);
        }
        y
    }

    pub fn frame(&self, i: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.frames.get(self.rel(i))
    }

    pub fn neutral_at(&self, i: usize) -> Option<DVector<f64>> {
        let k = self.rel(i);
        self.neutral.as_ref().map(|y| y.vector(k))
    }
}

/// Builds the adjoint CLV frame as the column-normalized dual basis
/// `Z_i^{-T}`. Each column pairs positively with its tangent CLV. For flows
/// the neutral adjoint CLV is rescaled along the window into a homogeneous
/// adjoint solution, whose pairing with `f` is then constant.
pub fn dual_basis(clv: &ClvBasis, lin: &Linearization) -> Result<AdjointClvBasis> {
    let m = clv.dim();
    let len = clv.frames.len();
    let mut frames = MatSeries::with_capacity(m, len);
    let mut dual_scale = VecSeries::with_capacity(m, len);
    for i in clv.start..=clv.end() {
        let mut y = clv.dual_frame(i)?;
        let norms = crate::linalg::normalize_columns(&mut y);
        frames.push(&y);
        dual_scale.push(&norms);
    }
    let mut adj = AdjointClvBasis { start: clv.start, frames, dual_scale, neutral: None, pairing: None, pairing_drift: None };
    if let Some(n) = clv.neutral_index {
        let mut ybar = VecSeries::with_capacity(m, len);
        let mut log_scale = 0.0;
        let mut pairing = 0.0;
        let mut drift = 0.0_f64;
        for (k, i) in (clv.start..=clv.end()).enumerate() {
            if k > 0 {
                log_scale -= clv.growth(i - 1)[n];
            }
            let y = adj.frame(i).column(n) * (adj.dual_scale.get(k)[n] * log_scale.exp());
            let f = lin.drift(i);
            let p = y.dot(&f);
            let ratio = p.abs() / (y.norm() * f.norm());
            if !(ratio >= PAIRING_THRESHOLD) {
                return Err(Error::DegeneratePairing { step: i, ratio });
            }
            if k == 0 {
                pairing = p;
            }
            drift = drift.max(((p - pairing) / pairing).abs());
            ybar.push(y.as_slice());
        }
        adj.neutral = Some(ybar);
        adj.pairing = Some(pairing);
        adj.pairing_drift = Some(drift);
    }
    Ok(adj)
}

/// The adjoint projection `Z_i^{-T} D Z_i^T v`, the transpose of the
/// tangent projection for the same subspace.
pub fn adjoint_project(adj: &AdjointClvBasis, clv: &ClvBasis, i: usize, which: Subspace, v: &[f64]) -> Result<DVector<f64>> {
    if !clv.contains(i) || !adj.contains(i) {
        return Err(Error::InvalidInput(format!("step {i} outside the CLV window")));
    }
    let mask = clv.mask(which)?;
    let z = clv.frame(i);
    let mut c = z.tr_mul(&DVector::from_column_slice(v));
    select(&mut c, &mask);
    Ok(adj.dual(i) * c)
}

/// Neutral adjoint projection `<v, f> ybar / <ybar, f>`.
pub fn neutral_project_via_y(v: &[f64], f: &[f64], ybar: &[f64]) -> Result<DVector<f64>> {
    if v.len() != f.len() || v.len() != ybar.len() {
        return Err(Error::InvalidInput("vectors differ in length".into()));
    }
    let (v, f, y) = (DVector::from_column_slice(v), DVector::from_column_slice(f), DVector::from_column_slice(ybar));
    let p = y.dot(&f);
    let ratio = p.abs() / (y.norm() * f.norm());
    if !(ratio >= PAIRING_THRESHOLD) {
        return Err(Error::DegeneratePairing { step: 0, ratio });
    }
    Ok(y * (v.dot(&f) / p))
}

/// Growth rates of the adjoint CLVs measured by backward propagation.
///
/// Each stored column `zbar_j(i+1)` is propagated one step back with
/// `A_i^T`; the mean log norm change per unit time estimates the exponent,
/// and the angle to the stored `zbar_j(i)` measures covariance of the frame.
pub fn adjoint_clv_growth(adj: &AdjointClvBasis, lin: &Linearization) -> (Vec<f64>, f64) {
    let m = lin.dim();
    let h = lin.trajectory().step;
    let mut sums = vec![0.0; m];
    let mut worst = 0.0_f64;
    for i in adj.start..adj.end() {
        let next = adj.frame(i + 1);
        let here = adj.frame(i);
        let back = lin.step_matrix(i).tr_mul(&next);
        for j in 0..m {
            let col = back.column(j).into_owned();
            sums[j] += col.norm().ln();
            worst = worst.max(line_angle(&col, &here.column(j).into_owned()));
        }
    }
    let steps = (adj.end() - adj.start) as f64;
    (sums.into_iter().map(|s| s / (steps * h)).collect(), worst)
}

/// Independent adjoint spectrum from QR orthonormalization of the backward
/// adjoint propagators over the whole trajectory, sorted descending.
pub fn adjoint_qr_exponents(lin: &Linearization, stride: usize) -> Vec<f64> {
    let n = lin.steps();
    let m = lin.dim();
    let stride = stride.max(1);
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut sums = vec![0.0; m];
    let mut i = n;
    while i > 0 {
        let lo = i.saturating_sub(stride);
        for k in (lo..i).rev() {
            q = lin.step_matrix(k).tr_mul(&q);
        }
        let (qn, r) = qr_positive(q);
        for j in 0..m {
            sums[j] += r[(j, j)].ln();
        }
        q = qn;
        i = lo;
    }
    let mut out: Vec<f64> = sums.into_iter().map(|s| s / (n as f64 * lin.trajectory().step)).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}
