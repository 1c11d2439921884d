//! Tangent dynamics along a trajectory: per-step propagators, homogeneous and
//! inhomogeneous tangent solutions, covariant Lyapunov vectors and the
//! oblique projections onto CLV subspaces.

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{System, SystemKind, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{line_angle, normalize_columns, qr_positive};
use crate::series::{MatSeries, VecSeries};

/// Norm above which a propagated vector is reported as overflowing.
pub const GROWTH_LIMIT: f64 = 1e300;

/// Frames with a (Frobenius) condition number above this are rejected by the
/// projection operators.
pub const CONDITION_LIMIT: f64 = 1e12;

pub(crate) fn check_growth(v: &DVector<f64>, step: usize) -> Result<()> {
    let n = v.norm();
    if n.is_finite() && n <= GROWTH_LIMIT {
        Ok(())
    } else {
        Err(Error::Growth { step })
    }
}

/// The one-step tangent propagators `A_i` along a trajectory, so that a
/// homogeneous tangent solution satisfies `w_{i+1} = A_i w_i`.
///
/// For maps `A_i = f_u(u_i)`. For flows `A_i` is one RK4 step of
/// `dW/dt = f_u(u(t)) W` from `W = I`, with `u` at the half step taken from
/// the cubic Hermite interpolant of the stored states and drifts.
pub struct Linearization<'a> {
    sys: &'a dyn System,
    traj: &'a Trajectory,
    steps: MatSeries,
}

fn rk4_matrix(j0: &DMatrix<f64>, jm: &DMatrix<f64>, j1: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let m = j0.nrows();
    let id = DMatrix::<f64>::identity(m, m);
    let k1 = j0.clone();
    let k2 = jm * (&id + &k1 * (0.5 * h));
    let k3 = jm * (&id + &k2 * (0.5 * h));
    let k4 = j1 * (&id + &k3 * h);
    id + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn hermite_midpoint(u0: &[f64], u1: &[f64], f0: &DVector<f64>, f1: &DVector<f64>, h: f64) -> Vec<f64> {
    (0..u0.len()).map(|k| 0.5 * (u0[k] + u1[k]) + h / 8.0 * (f0[k] - f1[k])).collect()
}

impl<'a> Linearization<'a> {
    pub fn new(sys: &'a dyn System, traj: &'a Trajectory) -> Result<Self> {
        if sys.kind() != traj.kind || sys.dim() != traj.dim() {
            return Err(Error::InvalidInput(format!(
                "trajectory (dimension {}, {:?}) does not belong to system `{}`",
                traj.dim(),
                traj.kind,
                sys.name()
            )));
        }
        let n = traj.steps();
        let m = traj.dim();
        let s = traj.parameter;
        let mut steps = MatSeries::with_capacity(m, n);
        match traj.kind {
            SystemKind::Map => {
                for i in 0..n {
                    let a = sys.rhs_jac_u(traj.state(i), s);
                    if !a.clone().lu().is_invertible() || crate::linalg::condition_number(&a) > 1e14 {
                        return Err(Error::Singular { step: i });
                    }
                    steps.push(&a);
                }
            }
            SystemKind::Flow => {
                let h = traj.step;
                let mut f0 = sys.rhs(traj.state(0), s);
                let mut j0 = sys.rhs_jac_u(traj.state(0), s);
                for i in 0..n {
                    let (u0, u1) = (traj.state(i), traj.state(i + 1));
                    let f1 = sys.rhs(u1, s);
                    let j1 = sys.rhs_jac_u(u1, s);
                    let jm = sys.rhs_jac_u(&hermite_midpoint(u0, u1, &f0, &f1, h), s);
                    steps.push(&rk4_matrix(&j0, &jm, &j1, h));
                    f0 = f1;
                    j0 = j1;
                }
            }
        }
        Ok(Self { sys, traj, steps })
    }

    pub fn system(&self) -> &'a dyn System {
        self.sys
    }

    pub fn trajectory(&self) -> &'a Trajectory {
        self.traj
    }

    pub fn kind(&self) -> SystemKind {
        self.traj.kind
    }

    pub fn dim(&self) -> usize {
        self.traj.dim()
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    pub fn step_matrix(&self, i: usize) -> DMatrixView<'_, f64> {
        self.steps.get(i)
    }

    /// `f_u` at `u_i`, the Hermite midpoint of step `i`, and `u_{i+1}`.
    /// For maps all three are `f_u(u_i)`.
    pub fn stage_jacobians(&self, i: usize) -> [DMatrix<f64>; 3] {
        let s = self.traj.parameter;
        let (u0, u1) = (self.traj.state(i), self.traj.state(i + 1));
        match self.kind() {
            SystemKind::Map => {
                let a = self.steps.matrix(i);
                [a.clone(), a.clone(), a]
            }
            SystemKind::Flow => {
                let f0 = self.sys.rhs(u0, s);
                let f1 = self.sys.rhs(u1, s);
                let um = hermite_midpoint(u0, u1, &f0, &f1, self.traj.step);
                [self.sys.rhs_jac_u(u0, s), self.sys.rhs_jac_u(&um, s), self.sys.rhs_jac_u(u1, s)]
            }
        }
    }

    /// Drift (flows) or parameter derivative of the map, evaluated per state.
    pub fn drift(&self, i: usize) -> DVector<f64> {
        self.sys.rhs(self.traj.state(i), self.traj.parameter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionKind {
    Homogeneous,
    Inhomogeneous,
}

/// A tangent solution `w_0 .. w_N`, index-aligned with its trajectory.
#[derive(Clone, Debug)]
pub struct TangentSolution {
    pub values: VecSeries,
    pub kind: SolutionKind,
}

fn check_vector(lin: &Linearization, v: &[f64], what: &str) -> Result<()> {
    if v.len() != lin.dim() {
        return Err(Error::InvalidInput(format!("{what} has {} components, expected {}", v.len(), lin.dim())));
    }
    Ok(())
}

fn check_forcing(lin: &Linearization, forcing: &VecSeries) -> Result<()> {
    if forcing.dim() != lin.dim() || forcing.len() != lin.steps() + 1 {
        return Err(Error::InvalidInput(format!(
            "forcing must hold {} vectors of dimension {}, got {} of dimension {}",
            lin.steps() + 1,
            lin.dim(),
            forcing.len(),
            forcing.dim()
        )));
    }
    Ok(())
}

pub fn solve_homogeneous_tangent(lin: &Linearization, w0: &[f64]) -> Result<TangentSolution> {
    check_vector(lin, w0, "initial tangent vector")?;
    let mut values = VecSeries::with_capacity(lin.dim(), lin.steps() + 1);
    values.push(w0);
    let mut w = DVector::from_column_slice(w0);
    for i in 0..lin.steps() {
        w = lin.step_matrix(i) * w;
        check_growth(&w, i + 1)?;
        values.push(w.as_slice());
    }
    Ok(TangentSolution { values, kind: SolutionKind::Homogeneous })
}

/// Solves `dv/dt = f_u v + g` (flows, RK4 with the forcing averaged at the
/// half step) or `v_{i+1} = f_u(u_i) v_i + g_i` (maps). `forcing` holds one
/// vector per state; for maps the last one is unused.
pub fn solve_inhomogeneous_tangent(lin: &Linearization, v0: &[f64], forcing: &VecSeries) -> Result<TangentSolution> {
    check_vector(lin, v0, "initial tangent vector")?;
    check_forcing(lin, forcing)?;
    let n = lin.steps();
    let h = lin.trajectory().step;
    let mut values = VecSeries::with_capacity(lin.dim(), n + 1);
    values.push(v0);
    let mut v = DVector::from_column_slice(v0);
    for i in 0..n {
        let g0 = forcing.vector(i);
        v = match lin.kind() {
            SystemKind::Map => lin.step_matrix(i) * v + g0,
            SystemKind::Flow => {
                let g1 = forcing.vector(i + 1);
                let gm = (&g0 + &g1) * 0.5;
                let [j0, jm, j1] = lin.stage_jacobians(i);
                let k1 = &j0 * &v + &g0;
                let k2 = &jm * (&v + &k1 * (0.5 * h)) + &gm;
                let k3 = &jm * (&v + &k2 * (0.5 * h)) + &gm;
                let k4 = &j1 * (&v + &k3 * h) + &g1;
                &v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
        };
        check_growth(&v, i + 1)?;
        values.push(v.as_slice());
    }
    Ok(TangentSolution { values, kind: SolutionKind::Inhomogeneous })
}

/// Applies the tangent propagation operator from step `i1` to step `i2`.
/// Backward propagation (`i2 < i1`) solves with each `A_i`.
pub fn propagate(lin: &Linearization, i1: usize, i2: usize, w: &[f64]) -> Result<DVector<f64>> {
    check_vector(lin, w, "tangent vector")?;
    let n = lin.steps();
    if i1 > n || i2 > n {
        return Err(Error::InvalidInput(format!("step index out of range 0..={n}")));
    }
    let mut v = DVector::from_column_slice(w);
    if i2 >= i1 {
        for i in i1..i2 {
            v = lin.step_matrix(i) * v;
            check_growth(&v, i + 1)?;
        }
    } else {
        for i in (i2..i1).rev() {
            v = lin.step_matrix(i).into_owned().lu().solve(&v).ok_or(Error::Singular { step: i })?;
            check_growth(&v, i)?;
        }
    }
    Ok(v)
}

/// Options for [`compute_clvs`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClvOptions {
    /// Steps between QR re-orthonormalizations; defaults to 1 for maps and
    /// 10 for flows.
    pub qr_stride: Option<usize>,
    /// Half-width of the band around 0 treated as neutral; defaults to
    /// `max(1e-3, 0.005 (lambda_1 - lambda_m))`.
    pub neutral_tolerance: Option<f64>,
    /// Fractions of the trajectory discarded at the start (forward QR
    /// transient) and at the end (backward transient).
    pub transient_fractions: (f64, f64),
    /// Explicit transient lengths in steps; overrides the fractions.
    pub transient_steps: Option<(usize, usize)>,
    /// Largest angle (radians) allowed between the CLVs obtained from two
    /// different backward starting matrices.
    pub convergence_tolerance: f64,
}

impl Default for ClvOptions {
    fn default() -> Self {
        Self {
            qr_stride: None,
            neutral_tolerance: None,
            transient_fractions: (0.2, 0.2),
            transient_steps: None,
            convergence_tolerance: 1e-6,
        }
    }
}

/// Covariant Lyapunov vectors on the converged window `start ..= end` of a
/// trajectory.
#[derive(Clone, Debug)]
pub struct ClvBasis {
    pub kind: SystemKind,
    /// Time step of the underlying trajectory (1 for maps).
    pub step: f64,
    /// Absolute index of the first frame.
    pub start: usize,
    /// Unit-norm CLVs as columns, sorted by descending exponent, one frame
    /// per step of the window.
    pub frames: MatSeries,
    /// `log |A_i z_j(i)|` for each window step `i` except the last.
    pub log_growth: VecSeries,
    /// Exponents per unit time, descending.
    pub exponents: Vec<f64>,
    pub n_unstable: usize,
    /// The neutral CLV of a flow, if one exponent lies within the tolerance.
    pub neutral_index: Option<usize>,
    pub neutral_tolerance: f64,
    /// Smallest angle between a CLV and the span of the others.
    pub min_angle: f64,
    /// Largest Frobenius condition number of a frame.
    pub max_condition: f64,
    /// Largest angle between the neutral CLV from the backward pass and the
    /// drift (flows only). The stored frames carry the drift itself.
    pub neutral_alignment: Option<f64>,
    /// Largest angle between CLVs from the two backward passes.
    pub convergence_error: f64,
}

/// Which CLVs a projection keeps. Indices are 0-based in descending exponent
/// order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subspace {
    Clv(usize),
    Unstable,
    Stable,
    Neutral,
    /// Everything except the neutral direction.
    NonNeutral,
}

impl Subspace {
    pub const ALL_SUMS: [Subspace; 4] = [Subspace::Unstable, Subspace::Stable, Subspace::Neutral, Subspace::NonNeutral];
}

impl ClvBasis {
    pub fn dim(&self) -> usize {
        self.frames.dim()
    }

    /// Absolute index of the last frame.
    pub fn end(&self) -> usize {
        self.start + self.frames.len() - 1
    }

    /// Number of steps spanned by the window.
    pub fn window_steps(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i <= self.end()
    }

    fn rel(&self, i: usize) -> usize {
        assert!(self.contains(i), "step {i} outside the CLV window {}..={}", self.start, self.end());
        i - self.start
    }

    pub fn frame(&self, i: usize) -> DMatrixView<'_, f64> {
        self.frames.get(self.rel(i))
    }

    /// Log growth of each CLV across step `i` (from `i` to `i + 1`).
    pub fn growth(&self, i: usize) -> &[f64] {
        let k = self.rel(i);
        assert!(k < self.log_growth.len(), "no growth factor for the last window step");
        self.log_growth.get(k)
    }

    /// Columns of `Z_i^{-T}`: the dual basis with `<y_j, z_k> = delta_jk`.
    pub fn dual_frame(&self, i: usize) -> Result<DMatrix<f64>> {
        let z = self.frame(i).into_owned();
        let inv = z.clone().try_inverse().ok_or(Error::Conditioning { step: i, condition: f64::INFINITY })?;
        let condition = z.norm() * inv.norm();
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::Conditioning { step: i, condition });
        }
        Ok(inv.transpose())
    }

    /// `C_alpha = 1 / sin(min_angle)`.
    pub fn c_alpha(&self) -> f64 {
        1.0 / self.min_angle.sin()
    }

    /// The smallest nonzero `|lambda_j|`, excluding the neutral exponent.
    pub fn spectral_gap(&self) -> f64 {
        self.exponents
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != self.neutral_index)
            .map(|(_, l)| l.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_unstable(&self, j: usize) -> bool {
        Some(j) != self.neutral_index && self.exponents[j] > self.neutral_tolerance
    }

    pub fn is_stable(&self, j: usize) -> bool {
        Some(j) != self.neutral_index && !self.is_unstable(j)
    }

    /// The 0/1 diagonal selecting `which`.
    pub fn mask(&self, which: Subspace) -> Result<Vec<bool>> {
        let m = self.dim();
        Ok(match which {
            Subspace::Clv(j) if j < m => (0..m).map(|k| k == j).collect(),
            Subspace::Clv(j) => return Err(Error::InvalidInput(format!("CLV index {j} out of range for dimension {m}"))),
            Subspace::Unstable => (0..m).map(|k| self.is_unstable(k)).collect(),
            Subspace::Stable => (0..m).map(|k| self.is_stable(k)).collect(),
            Subspace::Neutral => match (self.kind, self.neutral_index) {
                (SystemKind::Flow, Some(n)) => (0..m).map(|k| k == n).collect(),
                (SystemKind::Map, _) => {
                    return Err(Error::InvalidInput("maps have no neutral subspace".into()));
                }
                (SystemKind::Flow, None) => {
                    return Err(Error::InvalidInput("no exponent lies within the neutral tolerance".into()));
                }
            },
            Subspace::NonNeutral => (0..m).map(|k| Some(k) != self.neutral_index).collect(),
        })
    }
}

pub(crate) fn select(coeffs: &mut DVector<f64>, mask: &[bool]) {
    for (c, keep) in coeffs.iter_mut().zip(mask) {
        if !keep {
            *c = 0.0;
        }
    }
}

/// The oblique projection `Z_i D Z_i^{-1} v`.
pub fn project(clv: &ClvBasis, i: usize, which: Subspace, v: &[f64]) -> Result<DVector<f64>> {
    if !clv.contains(i) {
        return Err(Error::InvalidInput(format!("step {i} outside the CLV window {}..={}", clv.start, clv.end())));
    }
    let mask = clv.mask(which)?;
    let y = clv.dual_frame(i)?;
    let mut c = y.transpose() * DVector::from_column_slice(v);
    select(&mut c, &mask);
    Ok(clv.frame(i) * c)
}

fn stride_points(n: usize, stride: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..=n).step_by(stride).collect();
    if *p.last().unwrap() != n {
        p.push(n);
    }
    p
}

fn frame_at(q: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = q * c;
    normalize_columns(&mut z);
    z
}

fn backward_pass(r: &[DMatrix<f64>], c_end: DMatrix<f64>, stop: usize, keep_from: usize) -> Result<Vec<DMatrix<f64>>> {
    // r[k] maps block k; returns C_k for k = keep_from..=r.len() (ascending).
    let mut out = Vec::with_capacity(r.len() + 1 - keep_from);
    let mut c = c_end;
    out.push(c.clone());
    for k in (stop..r.len()).rev() {
        c = r[k].solve_upper_triangular(&c).ok_or(Error::Singular { step: k })?;
        if normalize_columns(&mut c).iter().any(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(Error::Convergence(format!("backward coefficients degenerated at block {k}")));
        }
        if k >= keep_from {
            out.push(c.clone());
        }
    }
    out.reverse();
    Ok(out)
}

/// Computes covariant Lyapunov vectors with the two-pass QR method.
///
/// The forward pass orthonormalizes the tangent propagators every
/// `qr_stride` steps, giving Gram-Schmidt vectors `Q_k` and triangular
/// factors `R_k`. The backward pass iterates `C_k = R_k^{-1} C_{k+1}` from
/// the end of the trajectory; `Q_k C_k` are the CLVs. Frames between stride
/// points are filled in by one-step propagation. Only the window left after
/// both transients is returned.
pub fn compute_clvs(lin: &Linearization, opts: &ClvOptions) -> Result<ClvBasis> {
    let n = lin.steps();
    let m = lin.dim();
    let kind = lin.kind();
    let h = lin.trajectory().step;
    let stride = opts.qr_stride.unwrap_or(match kind {
        SystemKind::Map => 1,
        SystemKind::Flow => 10,
    });
    if stride == 0 {
        return Err(Error::InvalidInput("qr_stride must be at least 1".into()));
    }
    let (t0, t1) = match opts.transient_steps {
        Some(t) => t,
        None => {
            let (f0, f1) = opts.transient_fractions;
            if !(0.0..=0.25).contains(&f0) || !(0.0..=0.25).contains(&f1) {
                return Err(Error::InvalidInput(format!(
                    "transient fractions must lie in [0, 0.25], got ({f0}, {f1})"
                )));
            }
            ((f0 * n as f64).ceil() as usize, (f1 * n as f64).ceil() as usize)
        }
    };
    let points = stride_points(n, stride);
    let ks = points.iter().position(|&p| p >= t0);
    let ke = points.iter().rposition(|&p| p + t1 <= n);
    let (ks, ke) = match (ks, ke) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => {
            return Err(Error::InvalidInput(format!(
                "trajectory of {n} steps is too short for transients of {t0} and {t1} steps"
            )))
        }
    };

    // Forward pass.
    let nb = points.len() - 1;
    let mut qs = Vec::with_capacity(nb + 1);
    let mut rs = Vec::with_capacity(nb);
    let mut q = DMatrix::<f64>::identity(m, m);
    qs.push(q.clone());
    for k in 0..nb {
        let mut w = q;
        for i in points[k]..points[k + 1] {
            w = lin.step_matrix(i) * w;
        }
        if !w.iter().all(|x| x.is_finite()) || w.norm() > GROWTH_LIMIT {
            return Err(Error::Growth { step: points[k + 1] });
        }
        let (qn, r) = qr_positive(w);
        if (0..m).any(|j| !(r[(j, j)] > 0.0)) {
            return Err(Error::Singular { step: points[k] });
        }
        q = qn;
        qs.push(q.clone());
        rs.push(r);
    }

    // Backward pass, plus a second one from a different start to test
    // convergence at the window end.
    let cs = backward_pass(&rs, DMatrix::identity(m, m), ks, ks)?;
    let mut convergence_error = 0.0;
    if ke < nb {
        let mut alt = DMatrix::from_fn(m, m, |r, c| if r <= c { 1.0 } else { 0.0 });
        normalize_columns(&mut alt);
        let alt_cs = backward_pass(&rs, alt, ke, ke)?;
        let a = frame_at(&qs[ke], &cs[ke - ks]);
        let b = frame_at(&qs[ke], &alt_cs[0]);
        convergence_error = (0..m)
            .map(|j| line_angle(&a.column(j).into_owned(), &b.column(j).into_owned()))
            .fold(0.0, f64::max);
        if !(convergence_error <= opts.convergence_tolerance) {
            return Err(Error::Convergence(format!(
                "CLVs from two backward starts differ by {convergence_error:.3e} rad at step {}",
                points[ke]
            )));
        }
    }

    // Per-step frames and growth factors over the window.
    let (w0, w1) = (points[ks], points[ke]);
    let mut frames = MatSeries::with_capacity(m, w1 - w0 + 1);
    let mut log_growth = VecSeries::with_capacity(m, w1 - w0);
    for k in ks..ke {
        let mut z = frame_at(&qs[k], &cs[k - ks]);
        for i in points[k]..points[k + 1] {
            frames.push(&z);
            let mut next = lin.step_matrix(i) * &z;
            let norms = normalize_columns(&mut next);
            log_growth.push(&norms.iter().map(|x| x.ln()).collect::<Vec<_>>());
            z = next;
        }
    }
    frames.push(&frame_at(&qs[ke], &cs[ke - ks]));

    let w = (w1 - w0) as f64;
    let exponents: Vec<f64> = (0..m)
        .map(|j| log_growth.iter().map(|r| r[j]).sum::<f64>() / (w * h))
        .collect();
    let neutral_tolerance = opts
        .neutral_tolerance
        .unwrap_or_else(|| (0.005 * (exponents[0] - exponents[m - 1])).max(1e-3));

    let sys = lin.system();
    let traj = lin.trajectory();
    let drift_angle = |j: usize, i: usize| -> f64 {
        let f = sys.rhs(traj.state(i), traj.parameter);
        line_angle(&frames.get(i - w0).column(j).into_owned(), &f)
    };
    let neutral_index = match kind {
        SystemKind::Map => None,
        SystemKind::Flow => {
            let candidates: Vec<usize> = (0..m).filter(|&j| exponents[j].abs() <= neutral_tolerance).collect();
            match candidates.len() {
                0 => None,
                1 => Some(candidates[0]),
                _ => {
                    // Several near-zero exponents: keep the one tracking f.
                    let sample: Vec<usize> = (w0..=w1).step_by(((w1 - w0) / 100).max(1)).collect();
                    let score = |j: usize| sample.iter().map(|&i| drift_angle(j, i)).sum::<f64>();
                    candidates.into_iter().min_by(|&a, &b| score(a).total_cmp(&score(b)))
                }
            }
        }
    };
    let neutral_alignment = neutral_index.map(|j| (w0..=w1).map(|i| drift_angle(j, i)).fold(0.0, f64::max));
    // The neutral CLV of a flow is the drift direction. Ginelli only gets
    // within the convergence error of it, so substitute the exact one.
    if let Some(j) = neutral_index {
        for i in w0..=w1 {
            let mut f = lin.drift(i);
            let z = frames.get(i - w0).column(j).into_owned();
            f /= f.norm() * f.dot(&z).signum();
            frames.set_column(i - w0, j, f.as_slice());
            if i < w1 {
                log_growth.get_mut(i - w0)[j] = (lin.step_matrix(i) * f).norm().ln();
            }
        }
    }

    // Frame geometry.
    let mut min_sin = 1.0_f64;
    let mut max_condition = 1.0_f64;
    for k in 0..frames.len() {
        let z = frames.matrix(k);
        let Some(inv) = z.clone().try_inverse() else {
            min_sin = 0.0;
            max_condition = f64::INFINITY;
            continue;
        };
        for j in 0..m {
            min_sin = min_sin.min(1.0 / inv.row(j).norm());
        }
        max_condition = max_condition.max(z.norm() * inv.norm());
    }

    let n_unstable = (0..m).filter(|&j| Some(j) != neutral_index && exponents[j] > neutral_tolerance).count();

    Ok(ClvBasis {
        kind,
        step: h,
        start: w0,
        frames,
        log_growth,
        exponents,
        n_unstable,
        neutral_index,
        neutral_tolerance,
        min_angle: min_sin.clamp(0.0, 1.0).asin(),
        max_condition,
        neutral_alignment,
        convergence_error,
    })
}

/// Lyapunov exponents from forward QR alone (the first pass of
/// [`compute_clvs`]), averaged over the whole trajectory.
pub fn qr_exponents(lin: &Linearization, stride: usize) -> Result<Vec<f64>> {
    let n = lin.steps();
    let m = lin.dim();
    let points = stride_points(n, stride.max(1));
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut sums = vec![0.0; m];
    for k in 0..points.len() - 1 {
        for i in points[k]..points[k + 1] {
            q = lin.step_matrix(i) * q;
        }
        let (qn, r) = qr_positive(q);
        for j in 0..m {
            sums[j] += r[(j, j)].ln();
        }
        q = qn;
    }
    Ok(sums.into_iter().map(|s| s / (n as f64 * lin.trajectory().step)).collect())
}
