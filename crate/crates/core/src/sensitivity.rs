//! Sensitivities `d<J>/ds` from shadowing directions, and a central
//! finite-difference reference.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_step, spinup, System, SystemKind};
use crate::error::{Error, Result};
use crate::linalg::{batch_mean_stderr, sample_stderr};
use crate::shadowing::{AdjointShadowing, MapDirection, MapShadowing, TangentShadowing};
use crate::tangent::Linearization;

/// Number of equal segments used for the batch-means error estimate.
pub const BATCHES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TangentFlow,
    AdjointFlow,
    TangentMap,
    AdjointMap,
    FiniteDifference,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::TangentFlow, Method::AdjointFlow, Method::TangentMap, Method::AdjointMap, Method::FiniteDifference];

    pub fn tag(self) -> &'static str {
        match self {
            Method::TangentFlow => "tangent-flow",
            Method::AdjointFlow => "adjoint-flow",
            Method::TangentMap => "tangent-map",
            Method::AdjointMap => "adjoint-map",
            Method::FiniteDifference => "finite-difference",
        }
    }

    /// Whether the method applies to systems of this kind.
    pub fn supports(self, kind: SystemKind) -> bool {
        match self {
            Method::TangentFlow | Method::AdjointFlow => kind == SystemKind::Flow,
            Method::TangentMap | Method::AdjointMap => kind == SystemKind::Map,
            Method::FiniteDifference => true,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown sensitivity method `{s}`")))
    }
}

/// A `d<J>/ds` estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub method: Method,
    pub value: f64,
    /// Batch-means standard error (ensemble spread for finite differences).
    pub stderr: f64,
    /// Averaging length, in time units for flows and steps for maps.
    pub horizon: f64,
    pub system: String,
    pub parameter: f64,
}

fn trapezoid_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n + 1];
    w[0] = 0.5;
    w[n] = 0.5;
    w
}

fn result(method: Method, lin: &Linearization, values: &[f64], weights: &[f64], horizon: f64) -> Result<SensitivityResult> {
    if values.is_empty() || !(horizon > 0.0) {
        return Err(Error::EmptyWindow);
    }
    let (value, stderr) = batch_mean_stderr(values, weights, BATCHES);
    Ok(SensitivityResult {
        method,
        value,
        stderr,
        horizon,
        system: lin.system().name().to_string(),
        parameter: lin.trajectory().parameter,
    })
}

/// Trapezoid average of `<J_u, v_pm> + eta (J - <J>) + J_s` over the whole
/// construction window, `<J>` being the full-trajectory average.
pub fn sensitivity_tangent_flow(lin: &Linearization, shadow: &TangentShadowing) -> Result<SensitivityResult> {
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let n = shadow.v_pm.len().checked_sub(1).ok_or(Error::EmptyWindow)?;
    let mean = traj.time_average(|u| sys.objective(u, s));
    let values: Vec<f64> = (0..=n)
        .map(|k| {
            let u = traj.state(shadow.start + k);
            sys.objective_grad_u(u, s).dot(&shadow.v_pm.view(k))
                + shadow.eta[k] * (sys.objective(u, s) - mean)
                + sys.objective_grad_s(u, s)
        })
        .collect();
    result(Method::TangentFlow, lin, &values, &trapezoid_weights(n), n as f64 * shadow.step)
}

/// Trapezoid average of `<vbar, f_s> + J_s` over the whole construction
/// window.
pub fn sensitivity_adjoint_flow(lin: &Linearization, shadow: &AdjointShadowing) -> Result<SensitivityResult> {
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let n = shadow.v_bar.len().checked_sub(1).ok_or(Error::EmptyWindow)?;
    let values: Vec<f64> = (0..=n)
        .map(|k| {
            let u = traj.state(shadow.start + k);
            shadow.v_bar.view(k).dot(&sys.rhs_jac_s(u, s)) + sys.objective_grad_s(u, s)
        })
        .collect();
    result(Method::AdjointFlow, lin, &values, &trapezoid_weights(n), n as f64 * shadow.step)
}

/// `(1/N) sum_{i<N} (<J_u(u_i), v_i> + J_s(u_i))`.
pub fn sensitivity_tangent_map(lin: &Linearization, shadow: &MapShadowing) -> Result<SensitivityResult> {
    if shadow.direction != MapDirection::Tangent {
        return Err(Error::InvalidInput("expected a tangent sequence".into()));
    }
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let n = shadow.steps();
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let u = traj.state(shadow.start + i);
            sys.objective_grad_u(u, s).dot(&shadow.values.view(i)) + sys.objective_grad_s(u, s)
        })
        .collect();
    result(Method::TangentMap, lin, &values, &vec![1.0; n], n as f64)
}

/// `(1/N) sum_{l<N} (<vbar_{l+1}, f_s(u_l)> + J_s(u_l))`; `vbar_0` does not
/// enter.
pub fn sensitivity_adjoint_map(lin: &Linearization, shadow: &MapShadowing) -> Result<SensitivityResult> {
    if shadow.direction != MapDirection::Adjoint {
        return Err(Error::InvalidInput("expected an adjoint sequence".into()));
    }
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let n = shadow.steps();
    let values: Vec<f64> = (0..n)
        .map(|l| {
            let u = traj.state(shadow.start + l);
            shadow.values.view(l + 1).dot(&sys.rhs_jac_s(u, s)) + sys.objective_grad_s(u, s)
        })
        .collect();
    result(Method::AdjointMap, lin, &values, &vec![1.0; n], n as f64)
}

type InitialFn = Arc<dyn Fn(usize, f64) -> Vec<f64> + Send + Sync>;

/// How ensemble members choose their initial state.
#[derive(Clone)]
pub enum InitialState {
    /// Uniform in the box `center +- radius`, seeded per member; both
    /// parameter values of a member start from the same point.
    Around { center: Vec<f64>, radius: f64 },
    /// `(member, s) -> u0`.
    Custom(InitialFn),
}

impl fmt::Debug for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Around { center, radius } => write!(f, "Around {{ center: {center:?}, radius: {radius} }}"),
            InitialState::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FdOptions {
    pub ds: f64,
    /// Averaging length after spin-up (time units for flows, steps for maps).
    pub horizon: f64,
    pub spinup: f64,
    /// Integration step for flows; ignored for maps.
    pub step: f64,
    pub n_ensemble: usize,
    pub seed: u64,
    pub initial: InitialState,
}

/// Streams a trajectory and returns its average of `J` (trapezoid rule for
/// flows, `(1/N) sum_{i<N}` for maps) without storing it.
pub fn streamed_average(sys: &dyn System, u0: &[f64], s: f64, h: f64, horizon: f64) -> Result<f64> {
    let n = crate::dynamics::steps_for(sys.kind(), horizon, h);
    if n == 0 {
        return Err(Error::InvalidInput("averaging horizon is shorter than one step".into()));
    }
    let mut u = u0.to_vec();
    let mut sum = 0.0;
    for i in 0..n {
        let j = sys.objective(&u, s);
        let next = match sys.kind() {
            SystemKind::Flow => {
                sum += if i == 0 { 0.5 * j } else { j };
                rk4_step(sys, &u, s, h)
            }
            SystemKind::Map => {
                sum += j;
                let mut v = sys.rhs(&u, s);
                sys.wrap(v.as_mut_slice());
                v
            }
        };
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence { step: i + 1 });
        }
        u.copy_from_slice(next.as_slice());
    }
    if sys.kind() == SystemKind::Flow {
        sum += 0.5 * sys.objective(&u, s);
    }
    Ok(sum / n as f64)
}

fn member_start(sys: &dyn System, opts: &FdOptions, member: usize, s: f64) -> Vec<f64> {
    match &opts.initial {
        InitialState::Around { center, radius } => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(member as u64);
            let mut u: Vec<f64> = center.iter().map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
            sys.wrap(&mut u);
            u
        }
        InitialState::Custom(f) => f(member, s),
    }
}

/// Central difference `(<J>_{s+ds} - <J>_{s-ds}) / (2 ds)`, averaged over an
/// ensemble of initial conditions. Members run in parallel.
pub fn finite_difference_oracle(sys: &dyn System, s: f64, opts: &FdOptions) -> Result<SensitivityResult> {
    if !(opts.ds > 0.0) {
        return Err(Error::InvalidInput(format!("ds must be positive, got {}", opts.ds)));
    }
    if opts.n_ensemble == 0 {
        return Err(Error::InvalidInput("ensemble size must be at least 1".into()));
    }
    if !(opts.horizon > 0.0) {
        return Err(Error::InvalidInput("averaging horizon must be positive".into()));
    }
    let estimates: Vec<f64> = (0..opts.n_ensemble)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut avg = [0.0; 2];
            for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
                let p = s + sign * opts.ds;
                let u0 = member_start(sys, opts, k, p);
                let u = spinup(sys, &u0, p, opts.spinup, opts.step)?;
                avg[slot] = streamed_average(sys, &u, p, opts.step, opts.horizon)?;
            }
            Ok((avg[0] - avg[1]) / (2.0 * opts.ds))
        })
        .collect::<Result<_>>()?;
    let value = estimates.iter().sum::<f64>() / estimates.len() as f64;
    Ok(SensitivityResult {
        method: Method::FiniteDifference,
        value,
        stderr: sample_stderr(&estimates),
        horizon: opts.horizon,
        system: sys.name().to_string(),
        parameter: s,
    })
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
