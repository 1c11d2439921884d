//! Tangent and adjoint shadowing directions, built in CLV coordinates.
//!
//! Expanding the forcing (`f_s` on the tangent side, `J_u` on the adjoint
//! side) in the (dual) CLV frame makes the propagation operators diagonal,
//! with the per-step growth factors stored in [`ClvBasis::log_growth`].
//! Stable components are accumulated forward in time and unstable ones
//! backward, so no exponentially growing quantity is ever formed. Flows use
//! the trapezoid rule on the trajectory grid; maps use plain sums.
//!
//! All constructions run over the whole CLV window. Truncating the
//! semi-infinite sums and integrals contaminates the ends of the window, so
//! each result also records the trusted sub-window used by the property
//! checks.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::adjoint::{adjoint_project, AdjointClvBasis};
use crate::dynamics::SystemKind;
use crate::error::{Error, Result};
use crate::series::VecSeries;
use crate::tangent::{ClvBasis, Linearization, Subspace};

/// Default bound on the estimated truncation error of the finite windows.
pub const TRUNCATION_TOLERANCE: f64 = 1e-8;

/// Tangent shadowing pair `(v_pm, eta)` of a flow.
#[derive(Clone, Debug)]
pub struct TangentShadowing {
    /// Absolute index of the first value (the CLV window start).
    pub start: usize,
    pub step: f64,
    /// Non-neutral part of the shadowing direction, one value per window step.
    pub v_pm: VecSeries,
    /// Time-dilation rate `-<f, P0 f_s> / <f, f>`.
    pub eta: Vec<f64>,
    pub buffer: usize,
    /// Trusted absolute step range `(first, last)`, buffered at both ends.
    pub window: (usize, usize),
    pub truncation_estimate: f64,
}

/// Adjoint shadowing direction `vbar = vbar_pm + vbar_0` of a flow.
#[derive(Clone, Debug)]
pub struct AdjointShadowing {
    pub start: usize,
    pub step: f64,
    pub v_bar: VecSeries,
    pub v_bar_pm: VecSeries,
    pub v_bar_0: VecSeries,
    pub buffer: usize,
    /// Trusted absolute step range; only the far end is buffered because the
    /// construction starts exactly at the window start.
    pub window: (usize, usize),
    pub truncation_estimate: f64,
    /// Full-trajectory average of `J` used in place of the infinite-time one.
    pub mean_objective: f64,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MapDirection {
    Tangent,
    Adjoint,
}

/// Tangent `v_{Ni}` or adjoint `vbar_{Nl}` sequence of a map, `l = 0 ..= N`
/// relative to `start`.
#[derive(Clone, Debug)]
pub struct MapShadowing {
    pub direction: MapDirection,
    pub start: usize,
    pub values: VecSeries,
    pub buffer: usize,
    pub window: (usize, usize),
    pub truncation_estimate: f64,
    pub diagnostics: Option<Diagnostics>,
}

impl AdjointShadowing {
    pub fn len(&self) -> usize {
        self.v_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_bar.is_empty()
    }

    pub fn end(&self) -> usize {
        self.start + self.len() - 1
    }

    pub fn at(&self, i: usize) -> &[f64] {
        self.v_bar.get(i - self.start)
    }
}

impl TangentShadowing {
    pub fn end(&self) -> usize {
        self.start + self.v_pm.len() - 1
    }
}

impl MapShadowing {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, i: usize) -> &[f64] {
        self.values.get(i - self.start)
    }
}

/// Smallest buffer (in steps) for which `prefactor * exp(-gap * buffer * h)`
/// stays below `tolerance`.
pub fn minimal_buffer(clv: &ClvBasis, prefactor: f64, tolerance: f64) -> usize {
    let gap = clv.spectral_gap();
    let b = (prefactor.max(f64::MIN_POSITIVE) / tolerance).ln() / (gap * clv.step);
    if b.is_finite() {
        b.max(0.0).ceil() as usize
    } else {
        usize::MAX
    }
}

/// Smallest flow buffer meeting [`TRUNCATION_TOLERANCE`] for both the
/// tangent and the adjoint construction.
pub fn default_flow_buffer(lin: &Linearization, clv: &ClvBasis) -> usize {
    minimal_buffer(clv, adjoint_prefactor(lin, clv).max(1.0), TRUNCATION_TOLERANCE)
}

fn truncation(clv: &ClvBasis, prefactor: f64, buffer: usize) -> f64 {
    prefactor * (-clv.spectral_gap() * buffer as f64 * clv.step).exp()
}

fn check_buffer(clv: &ClvBasis, buffer: usize) -> Result<()> {
    let w = clv.window_steps();
    if 2 * buffer >= w {
        return Err(Error::DegenerateWindow(format!(
            "buffer of {buffer} steps is at least half of the {w}-step CLV window"
        )));
    }
    Ok(())
}

fn require(lin: &Linearization, clv: &ClvBasis, kind: SystemKind) -> Result<()> {
    if lin.kind() != kind || clv.kind != kind {
        return Err(Error::InvalidInput(format!("expected a {kind:?} trajectory and CLV basis")));
    }
    if clv.end() > lin.steps() || clv.dim() != lin.dim() {
        return Err(Error::InvalidInput("CLV basis does not belong to this trajectory".into()));
    }
    Ok(())
}

/// Adjoint truncation prefactor `C_alpha |J_u|_inf / gap`.
fn adjoint_prefactor(lin: &Linearization, clv: &ClvBasis) -> f64 {
    let sys = lin.system();
    let traj = lin.trajectory();
    let ju = (clv.start..=clv.end())
        .map(|i| sys.objective_grad_u(traj.state(i), traj.parameter).amax())
        .fold(0.0, f64::max);
    clv.c_alpha() * ju / clv.spectral_gap()
}

/// Coefficients of `g_i` in the dual frame, `Z_i^{-1} g_i`, for `i` over the
/// window; `g` is indexed by absolute step.
fn clv_coefficients(clv: &ClvBasis, g: impl Fn(usize) -> DVector<f64>) -> Result<VecSeries> {
    let m = clv.dim();
    let mut out = VecSeries::with_capacity(m, clv.frames.len());
    for i in clv.start..=clv.end() {
        let y = clv.dual_frame(i)?;
        out.push(y.tr_mul(&g(i)).as_slice());
    }
    Ok(out)
}

fn frame_coefficients(clv: &ClvBasis, g: impl Fn(usize) -> DVector<f64>) -> VecSeries {
    let m = clv.dim();
    let mut out = VecSeries::with_capacity(m, clv.frames.len());
    for i in clv.start..=clv.end() {
        out.push(clv.frame(i).tr_mul(&g(i)).as_slice());
    }
    out
}

fn growth_factor(clv: &ClvBasis, k: usize, j: usize) -> f64 {
    clv.log_growth.get(k)[j].exp()
}

fn combine(basis: &dyn Fn(usize) -> DMatrix<f64>, coeffs: &VecSeries, keep: &[bool]) -> VecSeries {
    let mut out = VecSeries::with_capacity(coeffs.dim(), coeffs.len());
    for k in 0..coeffs.len() {
        let mut c = coeffs.vector(k);
        crate::tangent::select(&mut c, keep);
        out.push((basis(k) * c).as_slice());
    }
    out
}

/// Builds `v_pm` and `eta` over the CLV window of a flow.
///
/// The stable part integrates `P^- f_s` forward from the window start and
/// the unstable part integrates `-P^+ f_s` backward from the window end.
pub fn tangent_shadowing_flow(lin: &Linearization, clv: &ClvBasis, buffer: usize) -> Result<TangentShadowing> {
    tangent_shadowing_flow_with(lin, clv, buffer, TRUNCATION_TOLERANCE)
}

pub fn tangent_shadowing_flow_with(lin: &Linearization, clv: &ClvBasis, buffer: usize, tolerance: f64) -> Result<TangentShadowing> {
    require(lin, clv, SystemKind::Flow)?;
    check_buffer(clv, buffer)?;
    let estimate = truncation(clv, 1.0, buffer);
    if !(estimate <= tolerance) {
        return Err(Error::Truncation { estimate, tolerance });
    }
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let h = traj.step;
    let m = clv.dim();
    let w = clv.window_steps();
    let a = clv_coefficients(clv, |i| sys.rhs_jac_s(traj.state(i), s))?;

    let mut c = VecSeries::zeros(m, w + 1);
    for j in (0..m).filter(|&j| Some(j) != clv.neutral_index) {
        if clv.is_unstable(j) {
            for k in (0..w).rev() {
                let g = growth_factor(clv, k, j);
                let next = c.get(k + 1)[j];
                c.get_mut(k)[j] = next / g - 0.5 * h * (a.get(k)[j] + a.get(k + 1)[j] / g);
            }
        } else {
            for k in 0..w {
                let g = growth_factor(clv, k, j);
                let prev = c.get(k)[j];
                c.get_mut(k + 1)[j] = g * prev + 0.5 * h * (a.get(k)[j] * g + a.get(k + 1)[j]);
            }
        }
    }
    let keep: Vec<bool> = (0..m).map(|j| Some(j) != clv.neutral_index).collect();
    let v_pm = combine(&|k| clv.frames.matrix(k), &c, &keep);

    let eta = (0..=w)
        .map(|k| match clv.neutral_index {
            None => 0.0,
            Some(n) => {
                let i = clv.start + k;
                let f = lin.drift(i);
                let ff = f.norm_squared();
                if ff == 0.0 {
                    0.0
                } else {
                    -a.get(k)[n] * clv.frame(i).column(n).dot(&f) / ff
                }
            }
        })
        .collect();

    Ok(TangentShadowing {
        start: clv.start,
        step: h,
        v_pm,
        eta,
        buffer,
        window: (clv.start + buffer, clv.end() - buffer),
        truncation_estimate: estimate,
    })
}

/// Builds `vbar = vbar_pm + vbar_0` over the CLV window of a flow.
///
/// The stable part integrates `P̄^- J_u` backward from the window end, the
/// unstable part integrates `-P̄^+ J_u` forward from the window start (so it
/// vanishes there), and `vbar_0 = -(J - <J>) ybar / <ybar, f>`.
pub fn adjoint_shadowing_flow(lin: &Linearization, clv: &ClvBasis, adj: &AdjointClvBasis, buffer: usize) -> Result<AdjointShadowing> {
    adjoint_shadowing_flow_with(lin, clv, adj, buffer, TRUNCATION_TOLERANCE)
}

pub fn adjoint_shadowing_flow_with(
    lin: &Linearization,
    clv: &ClvBasis,
    adj: &AdjointClvBasis,
    buffer: usize,
    tolerance: f64,
) -> Result<AdjointShadowing> {
    require(lin, clv, SystemKind::Flow)?;
    check_buffer(clv, buffer)?;
    if adj.start != clv.start || adj.end() != clv.end() {
        return Err(Error::InvalidInput("adjoint CLV basis does not match the tangent basis".into()));
    }
    let estimate = truncation(clv, adjoint_prefactor(lin, clv), buffer);
    if !(estimate <= tolerance) {
        return Err(Error::Truncation { estimate, tolerance });
    }
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let h = traj.step;
    let m = clv.dim();
    let w = clv.window_steps();
    let b = frame_coefficients(clv, |i| sys.objective_grad_u(traj.state(i), s));

    let mut d = VecSeries::zeros(m, w + 1);
    for j in (0..m).filter(|&j| Some(j) != clv.neutral_index) {
        if clv.is_unstable(j) {
            for k in 0..w {
                let g = growth_factor(clv, k, j);
                let prev = d.get(k)[j];
                d.get_mut(k + 1)[j] = prev / g - 0.5 * h * (b.get(k)[j] / g + b.get(k + 1)[j]);
            }
        } else {
            for k in (0..w).rev() {
                let g = growth_factor(clv, k, j);
                let next = d.get(k + 1)[j];
                d.get_mut(k)[j] = g * next + 0.5 * h * (b.get(k)[j] + g * b.get(k + 1)[j]);
            }
        }
    }
    let keep: Vec<bool> = (0..m).map(|j| Some(j) != clv.neutral_index).collect();
    let v_bar_pm = combine(&|k| adj.dual(clv.start + k), &d, &keep);

    let mean_objective = traj.time_average(|u| sys.objective(u, s));
    let mut v_bar_0 = VecSeries::zeros(m, w + 1);
    if let Some(ybar) = &adj.neutral {
        for k in 0..=w {
            let i = clv.start + k;
            let y = ybar.vector(k);
            let f = lin.drift(i);
            let jt = sys.objective(traj.state(i), s) - mean_objective;
            v_bar_0.set(k, (y * (-jt / ybar.view(k).dot(&f))).as_slice());
        }
    }
    let mut v_bar = VecSeries::with_capacity(m, w + 1);
    for k in 0..=w {
        v_bar.push((v_bar_pm.vector(k) + v_bar_0.vector(k)).as_slice());
    }

    Ok(AdjointShadowing {
        start: clv.start,
        step: h,
        v_bar,
        v_bar_pm,
        v_bar_0,
        buffer,
        window: (clv.start, clv.end() - buffer),
        truncation_estimate: estimate,
        mean_objective,
        diagnostics: None,
    })
}

fn map_buffer(clv: &ClvBasis, buffer: Option<usize>, prefactor: f64) -> Result<(usize, f64)> {
    let n = clv.window_steps();
    match buffer {
        Some(b) => {
            check_buffer(clv, b)?;
            let estimate = truncation(clv, prefactor, b);
            if !(estimate <= TRUNCATION_TOLERANCE) {
                return Err(Error::Truncation { estimate, tolerance: TRUNCATION_TOLERANCE });
            }
            Ok((b, estimate))
        }
        None => {
            // Clamp rather than fail: the finite-N sums are exact objects in
            // their own right, only the semi-infinite reading needs a buffer.
            let b = minimal_buffer(clv, prefactor, TRUNCATION_TOLERANCE).min(n.saturating_sub(1) / 2);
            Ok((b, truncation(clv, prefactor, b)))
        }
    }
}

/// `v_{Ni} = sum_{l<i} D P^- f_{sl} - sum_{l>=i} D P^+ f_{sl}` for
/// `i = 0 ..= N` over the CLV window of a map. `buffer = None` picks the
/// smallest buffer meeting the default truncation tolerance.
pub fn tangent_shadowing_map(lin: &Linearization, clv: &ClvBasis, buffer: Option<usize>) -> Result<MapShadowing> {
    require(lin, clv, SystemKind::Map)?;
    let (buffer, estimate) = map_buffer(clv, buffer, 1.0)?;
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let m = clv.dim();
    let n = clv.window_steps();
    // a(l + 1) = Z_{l+1}^{-1} f_s(u_l): the forcing of step l lands at l + 1.
    let mut a = VecSeries::zeros(m, n + 1);
    for l in 0..n {
        let i = clv.start + l;
        let y = clv.dual_frame(i + 1)?;
        a.set(l + 1, y.tr_mul(&sys.rhs_jac_s(traj.state(i), s)).as_slice());
    }
    let mut c = VecSeries::zeros(m, n + 1);
    for j in 0..m {
        if clv.is_unstable(j) {
            for i in (0..n).rev() {
                let g = growth_factor(clv, i, j);
                let next = c.get(i + 1)[j];
                c.get_mut(i)[j] = (next - a.get(i + 1)[j]) / g;
            }
        } else {
            for i in 0..n {
                let g = growth_factor(clv, i, j);
                let prev = c.get(i)[j];
                c.get_mut(i + 1)[j] = g * prev + a.get(i + 1)[j];
            }
        }
    }
    let values = combine(&|k| clv.frames.matrix(k), &c, &vec![true; m]);
    Ok(MapShadowing {
        direction: MapDirection::Tangent,
        start: clv.start,
        values,
        buffer,
        window: (clv.start + buffer, clv.end() - buffer),
        truncation_estimate: estimate,
        diagnostics: None,
    })
}

/// `vbar_{Nl} = sum_{i>=l} D̄ P̄^- J_{ui} - sum_{i<l} D̄ P̄^+ J_{ui}` for
/// `l = 0 ..= N` over the CLV window of a map.
pub fn adjoint_shadowing_map(lin: &Linearization, clv: &ClvBasis, adj: &AdjointClvBasis, buffer: Option<usize>) -> Result<MapShadowing> {
    require(lin, clv, SystemKind::Map)?;
    if adj.start != clv.start || adj.end() != clv.end() {
        return Err(Error::InvalidInput("adjoint CLV basis does not match the tangent basis".into()));
    }
    let (buffer, estimate) = map_buffer(clv, buffer, adjoint_prefactor(lin, clv))?;
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let m = clv.dim();
    let n = clv.window_steps();
    let b = frame_coefficients(clv, |i| sys.objective_grad_u(traj.state(i), s));
    let mut d = VecSeries::zeros(m, n + 1);
    for j in 0..m {
        if clv.is_unstable(j) {
            for l in 0..n {
                let g = growth_factor(clv, l, j);
                let prev = d.get(l)[j];
                d.get_mut(l + 1)[j] = (prev - b.get(l)[j]) / g;
            }
        } else {
            for l in (0..n).rev() {
                let g = growth_factor(clv, l, j);
                let next = d.get(l + 1)[j];
                d.get_mut(l)[j] = b.get(l)[j] + g * next;
            }
        }
    }
    let values = combine(&|k| adj.dual(clv.start + k), &d, &vec![true; m]);
    Ok(MapShadowing {
        direction: MapDirection::Adjoint,
        start: clv.start,
        values,
        buffer,
        window: (clv.start, clv.end() - buffer),
        truncation_estimate: estimate,
        diagnostics: None,
    })
}

/// One scalar per defining property of an adjoint shadowing direction.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// Flows: worst `|(vbar_k - A_k^T vbar_{k+1}) / h - (J_u(k) + A_k^T J_u(k+1)) / 2|`.
    /// Maps: worst `|vbar_l - f_ul^T vbar_{l+1} - J_ul|` relative to the
    /// largest of `|vbar|`, `|J_u|`.
    pub adjoint_residual: f64,
    /// Flows: trapezoid error bound for the neutral part,
    /// `h^2/12 max|J'''| max(|ybar| / |<ybar, f>|)`. Maps: 0.
    pub residual_tolerance: f64,
    /// `|P̄^+ vbar| / |vbar|` at the window start.
    pub unstable_component_at_0: f64,
    pub sup_norm: f64,
    /// Largest `|vbar|` over the last quarter of the trusted window divided
    /// by the largest over the first quarter.
    pub growth_ratio: f64,
    /// Flows: `|avg <vbar, f>| / avg(|vbar| |f|)` over the trusted window.
    pub f_inner_product_avg: Option<f64>,
    /// Flows: `max |<vbar_pm, f>| / (|vbar_pm| |f|)`.
    pub pm_f_inner_product_max: Option<f64>,
    /// Flows: the average of `J` substituted for the infinite-time one.
    pub mean_objective: Option<f64>,
    pub window: (usize, usize),
}

/// Pass/fail limits applied to [`Diagnostics`].
#[derive(Clone, Debug, Serialize)]
pub struct Thresholds {
    /// Flow residual limit as a multiple of the quadrature tolerance.
    pub residual_factor: f64,
    /// Map residual limit (relative).
    pub map_residual: f64,
    pub unstable_component_flow: f64,
    pub unstable_component_map: f64,
    pub growth_ratio: f64,
    pub f_inner_product_avg: f64,
    pub pm_f_inner_product: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            residual_factor: 10.0,
            map_residual: 1e-10,
            unstable_component_flow: 1e-6,
            unstable_component_map: 1e-8,
            growth_ratio: 2.0,
            f_inner_product_avg: 0.05,
            pm_f_inner_product: 1e-6,
        }
    }
}

/// One named pass/fail line of a property report.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl PropertyCheck {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

impl Diagnostics {
    pub fn checks(&self, t: &Thresholds) -> Vec<PropertyCheck> {
        let flow = self.f_inner_product_avg.is_some();
        let mut out = vec![
            if flow {
                PropertyCheck::at_most(
                    "adjoint-equation-residual",
                    self.adjoint_residual,
                    t.residual_factor * self.residual_tolerance,
                )
            } else {
                PropertyCheck::at_most("adjoint-equation-residual", self.adjoint_residual, t.map_residual)
            },
            PropertyCheck::at_most(
                "unstable-component-at-start",
                self.unstable_component_at_0,
                if flow { t.unstable_component_flow } else { t.unstable_component_map },
            ),
            PropertyCheck::at_most("bounded-growth-ratio", self.growth_ratio, t.growth_ratio),
        ];
        if let (Some(avg), Some(pm)) = (self.f_inner_product_avg, self.pm_f_inner_product_max) {
            out.push(PropertyCheck::at_most("averaged-f-inner-product", avg, t.f_inner_product_avg));
            out.push(PropertyCheck::at_most("pointwise-pm-f-orthogonality", pm, t.pm_f_inner_product));
        }
        out
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn norms_over(values: &VecSeries, offset: usize, window: (usize, usize)) -> Vec<f64> {
    (window.0..=window.1).map(|i| values.view(i - offset).norm()).collect()
}

fn growth_and_sup(norms: &[f64]) -> (f64, f64) {
    let sup = norms.iter().cloned().fold(0.0, f64::max);
    let q = (norms.len() / 4).max(1);
    let first = norms[..q].iter().cloned().fold(0.0, f64::max);
    let last = norms[norms.len() - q..].iter().cloned().fold(0.0, f64::max);
    (sup, ratio(last, first))
}

/// Evaluates the defining properties of an adjoint shadowing direction of a
/// flow over its trusted window.
pub fn verify_flow(shadow: &AdjointShadowing, lin: &Linearization, clv: &ClvBasis, adj: &AdjointClvBasis) -> Result<Diagnostics> {
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let h = traj.step;
    let (w0, w1) = shadow.window;
    if w1 <= w0 {
        return Err(Error::EmptyWindow);
    }
    let off = shadow.start;
    let ju = |i: usize| sys.objective_grad_u(traj.state(i), s);

    let mut residual = 0.0_f64;
    for i in w0..w1 {
        let a = lin.step_matrix(i);
        let r = shadow.v_bar.vector(i - off)
            - a.tr_mul(&shadow.v_bar.vector(i + 1 - off))
            - (ju(i) + a.tr_mul(&ju(i + 1))) * (0.5 * h);
        residual = residual.max(r.norm() / h);
    }

    // Trapezoid error bound for the neutral term.
    let mut tol = 0.0;
    if let Some(ybar) = &adj.neutral {
        let jv: Vec<f64> = (w0..=w1).map(|i| sys.objective(traj.state(i), s)).collect();
        let d3 = jv.windows(4).map(|q| (q[3] - 3.0 * q[2] + 3.0 * q[1] - q[0]).abs()).fold(0.0, f64::max) / h.powi(3);
        let scale = (w0..=w1)
            .map(|i| {
                let y = ybar.view(i - adj.start);
                y.norm() / y.dot(&lin.drift(i)).abs()
            })
            .fold(0.0, f64::max);
        tol = h * h / 12.0 * d3 * scale;
    }

    let v0 = shadow.v_bar.vector(w0 - off);
    let unstable = adjoint_project(adj, clv, w0, Subspace::Unstable, v0.as_slice())?;
    let unstable_component_at_0 = ratio(unstable.norm(), v0.norm());

    let (sup_norm, growth_ratio) = growth_and_sup(&norms_over(&shadow.v_bar, off, shadow.window));

    let mut inner = 0.0;
    let mut scale = 0.0;
    let mut pm_max = 0.0_f64;
    for i in w0..=w1 {
        let f = lin.drift(i);
        let v = shadow.v_bar.view(i - off);
        inner += v.dot(&f);
        scale += v.norm() * f.norm();
        let p = shadow.v_bar_pm.view(i - off);
        pm_max = pm_max.max(ratio(p.dot(&f).abs(), p.norm() * f.norm()));
    }

    Ok(Diagnostics {
        adjoint_residual: residual,
        residual_tolerance: tol,
        unstable_component_at_0,
        sup_norm,
        growth_ratio,
        f_inner_product_avg: Some(ratio(inner.abs(), scale)),
        pm_f_inner_product_max: Some(pm_max),
        mean_objective: Some(shadow.mean_objective),
        window: shadow.window,
    })
}

/// Evaluates the defining properties of an adjoint shadowing sequence of a
/// map. The recursion is checked on the interior steps `1 ..= N-1` of the
/// trusted window; `vbar_0` enters only through the unstable-component test.
pub fn verify_map(shadow: &MapShadowing, lin: &Linearization, clv: &ClvBasis, adj: &AdjointClvBasis) -> Result<Diagnostics> {
    if shadow.direction != MapDirection::Adjoint {
        return Err(Error::InvalidInput("property checks apply to adjoint sequences".into()));
    }
    let sys = lin.system();
    let traj = lin.trajectory();
    let s = traj.parameter;
    let (w0, w1) = shadow.window;
    if w1 <= w0 {
        return Err(Error::EmptyWindow);
    }
    let off = shadow.start;
    let mut residual = 0.0_f64;
    let mut scale = 0.0_f64;
    for l in w0..=w1 {
        let ju = sys.objective_grad_u(traj.state(l), s);
        scale = scale.max(ju.norm()).max(shadow.values.view(l - off).norm());
        if l > w0 && l < w1 {
            let r = shadow.values.vector(l - off) - lin.step_matrix(l).tr_mul(&shadow.values.vector(l + 1 - off)) - ju;
            residual = residual.max(r.norm());
        }
    }
    let v0 = shadow.values.vector(w0 - off);
    let unstable = adjoint_project(adj, clv, w0, Subspace::Unstable, v0.as_slice())?;
    let (sup_norm, growth_ratio) = growth_and_sup(&norms_over(&shadow.values, off, shadow.window));
    Ok(Diagnostics {
        adjoint_residual: ratio(residual, scale),
        residual_tolerance: 0.0,
        unstable_component_at_0: ratio(unstable.norm(), v0.norm()),
        sup_norm,
        growth_ratio,
        f_inner_product_avg: None,
        pm_f_inner_product_max: None,
        mean_objective: None,
        window: shadow.window,
    })
}

/// Either kind of adjoint shadowing result.
pub enum Shadow<'a> {
    Flow(&'a AdjointShadowing),
    Map(&'a MapShadowing),
}

/// Dispatches to [`verify_flow`] or [`verify_map`].
pub fn verify_properties(shadow: Shadow<'_>, lin: &Linearization, clv: &ClvBasis, adj: &AdjointClvBasis) -> Result<Diagnostics> {
    match shadow {
        Shadow::Flow(s) => verify_flow(s, lin, clv, adj),
        Shadow::Map(s) => verify_map(s, lin, clv, adj),
    }
}

/// Adds `epsilon` times the leading unstable adjoint CLV to a flow's adjoint
/// shadowing direction, as the homogeneous adjoint solution that equals
/// `epsilon * zbar_1` at `lag` steps into the window.
///
/// The result still solves the adjoint equation, but it has grown by roughly
/// `exp(lambda_1 * lag * h)` at the window start, which is what the
/// unstable-component test must catch.
pub fn inject_unstable_fault(shadow: &mut AdjointShadowing, clv: &ClvBasis, adj: &AdjointClvBasis, epsilon: f64, lag: usize) -> Result<()> {
    if clv.n_unstable == 0 {
        return Err(Error::InvalidInput("no unstable direction to perturb".into()));
    }
    let j = (0..clv.dim()).find(|&j| clv.is_unstable(j)).unwrap();
    let w = shadow.len() - 1;
    if lag > w {
        return Err(Error::InvalidInput(format!("lag {lag} exceeds the {w}-step window")));
    }
    // Coefficient phi(k) of the unnormalized dual vector y_j(k).
    let mut phi = vec![0.0; w + 1];
    phi[lag] = epsilon / adj.dual_scale.get(lag)[j];
    for k in (0..lag).rev() {
        phi[k] = phi[k + 1] * growth_factor(clv, k, j);
    }
    for k in lag..w {
        phi[k + 1] = phi[k] / growth_factor(clv, k, j);
    }
    for (k, p) in phi.iter().enumerate() {
        let add = adj.dual(shadow.start + k).column(j) * *p;
        let v = shadow.v_bar.vector(k) + &add;
        shadow.v_bar.set(k, v.as_slice());
        let v = shadow.v_bar_pm.vector(k) + &add;
        shadow.v_bar_pm.set(k, v.as_slice());
    }
    shadow.diagnostics = None;
    Ok(())
}

/// Adds `epsilon` times the leading unstable adjoint CLV to `vbar_0` of a
/// map's adjoint sequence, leaving `vbar_1 ..= vbar_N` untouched.
pub fn inject_unstable_fault_map(shadow: &mut MapShadowing, clv: &ClvBasis, adj: &AdjointClvBasis, epsilon: f64) -> Result<()> {
    if clv.n_unstable == 0 {
        return Err(Error::InvalidInput("no unstable direction to perturb".into()));
    }
    let j = (0..clv.dim()).find(|&j| clv.is_unstable(j)).unwrap();
    let v = shadow.values.vector(0) + adj.frame(shadow.start).column(j) * epsilon;
    shadow.values.set(0, v.as_slice());
    shadow.diagnostics = None;
    Ok(())
}
