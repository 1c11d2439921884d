//! Parameterized flows and maps, trajectory generation, and the built-in
//! test systems.

pub mod fd;
mod systems;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::VecSeries;

pub use systems::{builtin, builtin_names, default_spinup, CatMap, LinearMap, LinearSystem, Lorenz63, WithObjective};

/// Whether a system is a continuous-time flow or a discrete-time map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Flow,
    Map,
}

/// A dynamical system `du/dt = f(u, s)` or `u_{i+1} = f(u_i, s)` with an
/// instantaneous objective `J(u, s)`.
///
/// Only `rhs` and `objective` are required. Derivatives fall back to central
/// differences with step [`System::fd_step`]; the built-in systems override
/// them analytically.
pub trait System: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> SystemKind;

    fn dim(&self) -> usize;

    /// The drift for flows, or the step map for maps.
    ///
    /// For maps on a torus this is the lift; [`System::wrap`] reduces the
    /// result to the fundamental domain.
    fn rhs(&self, u: &[f64], s: f64) -> DVector<f64>;

    fn objective(&self, u: &[f64], s: f64) -> f64;

    /// `f_u`, an `m x m` matrix.
    fn rhs_jac_u(&self, u: &[f64], s: f64) -> DMatrix<f64> {
        fd::jacobian(|x| self.rhs(x, s), u, self.fd_step())
    }

    /// `f_s`.
    fn rhs_jac_s(&self, u: &[f64], s: f64) -> DVector<f64> {
        fd::derivative_vec(|p| self.rhs(u, p), s, self.fd_step())
    }

    /// `J_u`.
    fn objective_grad_u(&self, u: &[f64], s: f64) -> DVector<f64> {
        fd::gradient(|x| self.objective(x, s), u, self.fd_step())
    }

    /// `J_s`.
    fn objective_grad_s(&self, u: &[f64], s: f64) -> f64 {
        fd::derivative(|p| self.objective(u, p), s, self.fd_step())
    }

    /// Step used by the finite-difference fallbacks.
    fn fd_step(&self) -> f64 {
        1e-6
    }

    /// Maps a state back into the fundamental domain (no-op by default).
    fn wrap(&self, _u: &mut [f64]) {}
}

/// A discretized orbit `u_0 .. u_N`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub kind: SystemKind,
    states: VecSeries,
    /// Time step for flows, `1.0` for maps.
    pub step: f64,
    pub parameter: f64,
    /// Time (flows) or number of steps (maps) removed before `u_0`.
    pub spinup_discarded: f64,
}

impl Trajectory {
    pub fn new(kind: SystemKind, states: VecSeries, step: f64, parameter: f64) -> Self {
        Self { kind, states, step, parameter, spinup_discarded: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.states.dim()
    }

    /// Number of stored states, `N + 1`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn state(&self, i: usize) -> &[f64] {
        self.states.get(i)
    }

    pub fn states(&self) -> &VecSeries {
        &self.states
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn duration(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.steps())
    }

    /// Long-time average of `g` over the whole trajectory: trapezoid rule
    /// for flows, `(1/N) sum_{i<N}` for maps.
    pub fn time_average(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        let n = self.steps();
        if n == 0 {
            return g(self.state(0));
        }
        match self.kind {
            SystemKind::Flow => {
                let inner: f64 = (1..n).map(|i| g(self.state(i))).sum();
                (inner + 0.5 * (g(self.state(0)) + g(self.state(n)))) / n as f64
            }
            SystemKind::Map => (0..n).map(|i| g(self.state(i))).sum::<f64>() / n as f64,
        }
    }
}

fn check_finite(u: &[f64], step: usize) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

/// One classical fourth-order Runge-Kutta step of the drift.
pub fn rk4_step(sys: &dyn System, u: &[f64], s: f64, h: f64) -> DVector<f64> {
    let u0 = DVector::from_column_slice(u);
    let k1 = sys.rhs(u, s);
    let k2 = sys.rhs((&u0 + &k1 * (0.5 * h)).as_slice(), s);
    let k3 = sys.rhs((&u0 + &k2 * (0.5 * h)).as_slice(), s);
    let k4 = sys.rhs((&u0 + &k3 * h).as_slice(), s);
    u0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn check_start(sys: &dyn System, u0: &[f64], n: usize) -> Result<()> {
    if sys.dim() != u0.len() {
        return Err(Error::InvalidInput(format!(
            "initial state has {} components, system `{}` has dimension {}",
            u0.len(),
            sys.name(),
            sys.dim()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("step count must be at least 1".into()));
    }
    check_finite(u0, 0)
}

/// Integrates a flow with fixed-step RK4, returning `n + 1` states.
pub fn integrate(sys: &dyn System, u0: &[f64], s: f64, h: f64, n: usize) -> Result<Trajectory> {
    if sys.kind() != SystemKind::Flow {
        return Err(Error::InvalidInput(format!("`{}` is a map; use `iterate`", sys.name())));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {h}")));
    }
    check_start(sys, u0, n)?;
    let mut states = VecSeries::with_capacity(u0.len(), n + 1);
    states.push(u0);
    let mut u = u0.to_vec();
    for i in 0..n {
        let next = rk4_step(sys, &u, s, h);
        check_finite(next.as_slice(), i + 1)?;
        u.copy_from_slice(next.as_slice());
        states.push(&u);
    }
    Ok(Trajectory::new(SystemKind::Flow, states, h, s))
}

/// Iterates a map `n` times, returning `n + 1` states.
pub fn iterate(sys: &dyn System, u0: &[f64], s: f64, n: usize) -> Result<Trajectory> {
    if sys.kind() != SystemKind::Map {
        return Err(Error::InvalidInput(format!("`{}` is a flow; use `integrate`", sys.name())));
    }
    check_start(sys, u0, n)?;
    let mut states = VecSeries::with_capacity(u0.len(), n + 1);
    states.push(u0);
    let mut u = u0.to_vec();
    for i in 0..n {
        let mut next = sys.rhs(&u, s);
        sys.wrap(next.as_mut_slice());
        check_finite(next.as_slice(), i + 1)?;
        u.copy_from_slice(next.as_slice());
        states.push(&u);
    }
    Ok(Trajectory::new(SystemKind::Map, states, 1.0, s))
}

/// Builds an `n`-step trajectory, dispatching on the system kind.
/// `h` is ignored for maps.
pub fn generate(sys: &dyn System, u0: &[f64], s: f64, h: f64, n: usize) -> Result<Trajectory> {
    match sys.kind() {
        SystemKind::Flow => integrate(sys, u0, s, h, n),
        SystemKind::Map => iterate(sys, u0, s, n),
    }
}

/// Number of steps covering `duration` (time units for flows, steps for maps).
pub fn steps_for(kind: SystemKind, duration: f64, h: f64) -> usize {
    match kind {
        SystemKind::Flow => (duration / h).round() as usize,
        SystemKind::Map => duration.round() as usize,
    }
}

/// Advances `u0` by `duration` and returns the final state, discarding the
/// transient. `h` is ignored for maps.
pub fn spinup(sys: &dyn System, u0: &[f64], s: f64, duration: f64, h: f64) -> Result<Vec<f64>> {
    if !(duration >= 0.0) {
        return Err(Error::InvalidInput(format!("spin-up duration must be >= 0, got {duration}")));
    }
    let n = steps_for(sys.kind(), duration, h);
    if n == 0 {
        return Ok(u0.to_vec());
    }
    // Stream instead of storing the transient.
    check_start(sys, u0, n)?;
    let mut u = u0.to_vec();
    for i in 0..n {
        let next = match sys.kind() {
            SystemKind::Flow => rk4_step(sys, &u, s, h),
            SystemKind::Map => {
                let mut v = sys.rhs(&u, s);
                sys.wrap(v.as_mut_slice());
                v
            }
        };
        check_finite(next.as_slice(), i + 1)?;
        u.copy_from_slice(next.as_slice());
    }
    Ok(u)
}

/// Spins up from `u0` for `spinup_duration`, then records `n` steps.
pub fn attractor_trajectory(
    sys: &dyn System,
    u0: &[f64],
    s: f64,
    h: f64,
    spinup_duration: f64,
    n: usize,
) -> Result<Trajectory> {
    let start = spinup(sys, u0, s, spinup_duration, h)?;
    let mut traj = generate(sys, &start, s, h, n)?;
    traj.spinup_discarded = spinup_duration;
    Ok(traj)
}

/// Worst relative error of each analytic derivative against central
/// differences.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivativeReport {
    pub rhs_jac_u: f64,
    pub rhs_jac_s: f64,
    pub objective_grad_u: f64,
    pub objective_grad_s: f64,
}

impl DerivativeReport {
    pub fn max(&self) -> f64 {
        self.rhs_jac_u.max(self.rhs_jac_s).max(self.objective_grad_u).max(self.objective_grad_s)
    }
}

// Entrywise error scaled by max(1, |reference|_max).
fn rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = crate::linalg::max_abs(reference).max(1.0);
    analytic.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

pub fn check_derivatives(sys: &dyn System, u: &[f64], s: f64, eps: f64) -> DerivativeReport {
    assert!(eps > 0.0, "finite-difference step must be positive");
    let jac_u = fd::jacobian(|x| sys.rhs(x, s), u, eps);
    let jac_s = fd::derivative_vec(|p| sys.rhs(u, p), s, eps);
    let grad_u = fd::gradient(|x| sys.objective(x, s), u, eps);
    let grad_s = fd::derivative(|p| sys.objective(u, p), s, eps);
    DerivativeReport {
        rhs_jac_u: rel_err(sys.rhs_jac_u(u, s).as_slice(), jac_u.as_slice()),
        rhs_jac_s: rel_err(sys.rhs_jac_s(u, s).as_slice(), jac_s.as_slice()),
        objective_grad_u: rel_err(sys.objective_grad_u(u, s).as_slice(), grad_u.as_slice()),
        objective_grad_s: rel_err(&[sys.objective_grad_s(u, s)], &[grad_s]),
    }
}
