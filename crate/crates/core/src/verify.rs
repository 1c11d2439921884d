//! Randomized property suite over one trajectory: projector identities,
//! duality of the tangent and adjoint frames, defining properties of the
//! adjoint shadowing direction, and agreement of the tangent and adjoint
//! sensitivity formulas.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{adjoint_clv_growth, adjoint_project, adjoint_propagate, neutral_project_via_y, AdjointClvBasis};
use crate::dynamics::SystemKind;
use crate::error::Result;
use crate::sensitivity::{
    relative_difference, sensitivity_adjoint_flow, sensitivity_adjoint_map, sensitivity_tangent_flow, sensitivity_tangent_map,
};
use crate::shadowing::{
    adjoint_shadowing_flow, adjoint_shadowing_map, default_flow_buffer, inject_unstable_fault, inject_unstable_fault_map,
    tangent_shadowing_flow, tangent_shadowing_map, verify_flow, verify_map, PropertyCheck, Thresholds,
};
use crate::tangent::{project, propagate, ClvBasis, Linearization, Subspace};

pub const PARTITION_TOL: f64 = 1e-10;
pub const IDEMPOTENCE_TOL: f64 = 1e-12;
pub const COMMUTATION_TOL: f64 = 1e-6;
pub const BIORTHOGONALITY_TOL: f64 = 1e-8;
pub const NEUTRAL_FORMULA_TOL: f64 = 1e-8;
pub const FLOW_PAIRING_TOL: f64 = 1e-5;
pub const MAP_PAIRING_TOL: f64 = 1e-12;
pub const EXPONENT_TOL: f64 = 0.02;
pub const MAP_IDENTITY_TOL: f64 = 1e-10;
pub const FLOW_AGREEMENT_TOL: f64 = 1e-5;
/// `|P v| / (C_alpha |v|)` limit; equality holds for orthogonal frames, so
/// allow for roundoff.
pub const PROJECTION_BOUND: f64 = 1.0 + 1e-10;

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    /// Random draws per sampled property.
    pub samples: usize,
    pub seed: u64,
    /// Shadowing buffer for flows in steps; `None` picks the minimal one.
    /// Maps always use the minimal buffer.
    pub buffer: Option<usize>,
    /// Corrupt the adjoint shadowing direction with this multiple of the
    /// leading unstable adjoint CLV before its properties are checked.
    pub inject_fault: Option<f64>,
    pub thresholds: Thresholds,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { samples: 100, seed: 0, buffer: None, inject_fault: None, thresholds: Thresholds::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub system: String,
    pub kind: SystemKind,
    pub parameter: f64,
    pub fault_injected: Option<f64>,
    pub checks: Vec<PropertyCheck>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn random_vector(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

fn rel(a: &DVector<f64>, b: &DVector<f64>, scale: f64) -> f64 {
    let d = (a - b).norm();
    if d == 0.0 {
        0.0
    } else {
        d / scale
    }
}

/// Subspaces exercised by the projector properties: each single CLV plus
/// the unions.
fn subspaces(clv: &ClvBasis) -> Vec<Subspace> {
    let mut out: Vec<Subspace> = (0..clv.dim()).map(Subspace::Clv).collect();
    for s in Subspace::ALL_SUMS {
        if clv.mask(s).is_ok() {
            out.push(s);
        }
    }
    out
}

/// Default segment length for two-point properties: about three e-foldings
/// of the leading exponent, at most a quarter of the window.
fn segment_steps(clv: &ClvBasis) -> usize {
    let lead = clv.exponents.iter().map(|l| l.abs()).fold(0.0, f64::max).max(1e-3);
    let want = (3.0 / (lead * clv.step)).ceil() as usize;
    want.clamp(1, (clv.window_steps() / 4).max(1))
}

fn random_segment(rng: &mut ChaCha8Rng, clv: &ClvBasis, len: usize) -> (usize, usize) {
    let l = rng.random_range(1..=len);
    let i1 = clv.start + rng.random_range(0..=clv.window_steps() - l);
    (i1, i1 + l)
}

/// Lag for flow fault injection: long enough for the leading unstable
/// adjoint CLV to grow by about 1e4 on its way back to the window start.
pub fn default_fault_lag(clv: &ClvBasis) -> usize {
    let lead = clv.exponents.first().copied().unwrap_or(1.0).max(1e-3);
    (((1e4f64).ln() / (lead * clv.step)).ceil() as usize).min(clv.window_steps() / 2)
}

/// Runs every property of the suite. Numerical errors abort the run;
/// violated properties are reported as failing checks.
pub fn run_suite(lin: &Linearization, clv: &ClvBasis, adj: &AdjointClvBasis, opts: &SuiteOptions) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let m = clv.dim();
    let n = opts.samples.max(1);
    let subs = subspaces(clv);
    let seg = segment_steps(clv);
    let c_alpha = clv.c_alpha();
    let point = |rng: &mut ChaCha8Rng| clv.start + rng.random_range(0..=clv.window_steps());
    let mut checks = Vec::new();

    // Tangent projectors.
    let (mut partition, mut idem, mut bound, mut adj_partition, mut adj_bound) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..n {
        let i = point(&mut rng);
        let v = random_vector(&mut rng, m);
        let norm = v.norm();
        let mut sum = DVector::zeros(m);
        let mut adj_sum = DVector::zeros(m);
        for j in 0..m {
            sum += project(clv, i, Subspace::Clv(j), v.as_slice())?;
            adj_sum += adjoint_project(adj, clv, i, Subspace::Clv(j), v.as_slice())?;
        }
        partition = partition.max(rel(&sum, &v, norm));
        adj_partition = adj_partition.max(rel(&adj_sum, &v, norm));
        for &s in &subs {
            let p = project(clv, i, s, v.as_slice())?;
            let pp = project(clv, i, s, p.as_slice())?;
            idem = idem.max(rel(&pp, &p, p.norm().max(norm)));
            bound = bound.max(p.norm() / (c_alpha * norm));
            let q = adjoint_project(adj, clv, i, s, v.as_slice())?;
            adj_bound = adj_bound.max(q.norm() / (c_alpha * norm));
        }
    }
    checks.push(PropertyCheck::at_most("partition-of-identity", partition, PARTITION_TOL));
    checks.push(PropertyCheck::at_most("projection-idempotence", idem, IDEMPOTENCE_TOL));
    checks.push(PropertyCheck::at_most("projection-bound", bound, PROJECTION_BOUND));
    checks.push(PropertyCheck::at_most("adjoint-partition-of-identity", adj_partition, PARTITION_TOL));
    checks.push(PropertyCheck::at_most("adjoint-projection-bound", adj_bound, PROJECTION_BOUND));

    // Propagation commutes with projection, in both directions.
    let (mut comm, mut adj_comm) = (0.0_f64, 0.0_f64);
    for _ in 0..n {
        let (i1, i2) = random_segment(&mut rng, clv, seg);
        let v = random_vector(&mut rng, m);
        let pv = propagate(lin, i1, i2, v.as_slice())?;
        let w = random_vector(&mut rng, m);
        let bw = adjoint_propagate(lin, i2, i1, w.as_slice())?;
        for &s in &subs {
            let a = propagate(lin, i1, i2, project(clv, i1, s, v.as_slice())?.as_slice())?;
            let b = project(clv, i2, s, pv.as_slice())?;
            comm = comm.max(rel(&a, &b, pv.norm()));
            let a = adjoint_propagate(lin, i2, i1, adjoint_project(adj, clv, i2, s, w.as_slice())?.as_slice())?;
            let b = adjoint_project(adj, clv, i1, s, bw.as_slice())?;
            adj_comm = adj_comm.max(rel(&a, &b, bw.norm()));
        }
    }
    checks.push(PropertyCheck::at_most("tangent-commutation", comm, COMMUTATION_TOL));
    checks.push(PropertyCheck::at_most("adjoint-commutation", adj_comm, COMMUTATION_TOL));

    // Adjoint and tangent projections onto different CLVs are orthogonal.
    let mut biorth = 0.0_f64;
    for _ in 0..n {
        let i = point(&mut rng);
        let v = random_vector(&mut rng, m);
        let w = random_vector(&mut rng, m);
        for a in 0..m {
            let pw = adjoint_project(adj, clv, i, Subspace::Clv(a), w.as_slice())?;
            for b in (0..m).filter(|&b| b != a) {
                let pv = project(clv, i, Subspace::Clv(b), v.as_slice())?;
                biorth = biorth.max(pw.dot(&pv).abs() / (w.norm() * v.norm()));
            }
        }
    }
    checks.push(PropertyCheck::at_most("biorthogonality", biorth, BIORTHOGONALITY_TOL));

    // <wbar, w> is constant along paired homogeneous solutions.
    let mut pairing = 0.0_f64;
    for _ in 0..n {
        let (i1, i2) = random_segment(&mut rng, clv, seg);
        let v = random_vector(&mut rng, m);
        let w = random_vector(&mut rng, m);
        let v2 = propagate(lin, i1, i2, v.as_slice())?;
        let w1 = adjoint_propagate(lin, i2, i1, w.as_slice())?;
        let (p1, p2) = (w1.dot(&v), w.dot(&v2));
        pairing = pairing.max((p1 - p2).abs() / (w1.norm() * v.norm()).max(w.norm() * v2.norm()));
    }
    let pairing_tol = if clv.kind == SystemKind::Flow { FLOW_PAIRING_TOL } else { MAP_PAIRING_TOL };
    checks.push(PropertyCheck::at_most("pairing-constancy", pairing, pairing_tol));
    if let Some(drift) = adj.pairing_drift {
        checks.push(PropertyCheck::at_most("neutral-pairing-constancy", drift, FLOW_PAIRING_TOL));
    }

    // Closed-form neutral adjoint projection.
    if adj.neutral.is_some() {
        let mut worst = 0.0_f64;
        for _ in 0..n {
            let i = point(&mut rng);
            let v = random_vector(&mut rng, m);
            let y = adj.neutral_at(i).expect("neutral adjoint CLV");
            let a = neutral_project_via_y(v.as_slice(), lin.drift(i).as_slice(), y.as_slice())?;
            let b = adjoint_project(adj, clv, i, Subspace::Neutral, v.as_slice())?;
            worst = worst.max(rel(&a, &b, a.norm().max(b.norm()).max(f64::MIN_POSITIVE)));
        }
        checks.push(PropertyCheck::at_most("neutral-projection-formula", worst, NEUTRAL_FORMULA_TOL));
    }

    // Adjoint CLVs grow backward at the tangent exponents.
    let (rates, _) = adjoint_clv_growth(adj, lin);
    let dev = rates.iter().zip(&clv.exponents).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(PropertyCheck::at_most("adjoint-exponents", dev, EXPONENT_TOL));

    if clv.kind == SystemKind::Flow {
        let near_zero = clv.exponents.iter().filter(|l| l.abs() <= clv.neutral_tolerance).count();
        let single = near_zero == 1 && clv.neutral_index.is_some();
        checks.push(PropertyCheck { name: "single-neutral-exponent".into(), value: near_zero as f64, threshold: 1.0, pass: single });
    }

    // Adjoint shadowing direction and the sensitivity identity.
    match clv.kind {
        SystemKind::Flow => {
            let buffer = match opts.buffer {
                Some(b) => b,
                None => default_flow_buffer(lin, clv),
            };
            let tangent = tangent_shadowing_flow(lin, clv, buffer)?;
            let mut shadow = adjoint_shadowing_flow(lin, clv, adj, buffer)?;
            let st = sensitivity_tangent_flow(lin, &tangent)?;
            let sa = sensitivity_adjoint_flow(lin, &shadow)?;
            if let Some(eps) = opts.inject_fault {
                inject_unstable_fault(&mut shadow, clv, adj, eps, default_fault_lag(clv))?;
            }
            checks.extend(verify_flow(&shadow, lin, clv, adj)?.checks(&opts.thresholds));
            checks.push(PropertyCheck::at_most("tangent-adjoint-agreement", relative_difference(st.value, sa.value), FLOW_AGREEMENT_TOL));
        }
        SystemKind::Map => {
            let tangent = tangent_shadowing_map(lin, clv, None)?;
            let mut shadow = adjoint_shadowing_map(lin, clv, adj, None)?;
            let st = sensitivity_tangent_map(lin, &tangent)?;
            let sa = sensitivity_adjoint_map(lin, &shadow)?;
            if let Some(eps) = opts.inject_fault {
                inject_unstable_fault_map(&mut shadow, clv, adj, eps)?;
            }
            checks.extend(verify_map(&shadow, lin, clv, adj)?.checks(&opts.thresholds));
            checks.push(PropertyCheck::at_most("tangent-adjoint-identity", relative_difference(st.value, sa.value), MAP_IDENTITY_TOL));
        }
    }

    Ok(Report {
        schema: 1,
        system: lin.system().name().to_string(),
        kind: clv.kind,
        parameter: lin.trajectory().parameter,
        fault_injected: opts.inject_fault,
        checks,
    })
}
