//! Map shadowing sequences against direct evaluation of their defining sums.

use adjshadow::adjoint::{adjoint_project, dual_basis};
use adjshadow::dynamics::{attractor_trajectory, CatMap, System};
use adjshadow::sensitivity::{sensitivity_adjoint_map, sensitivity_tangent_map};
use adjshadow::shadowing::{adjoint_shadowing_map, tangent_shadowing_map};
use adjshadow::tangent::{compute_clvs, project, ClvBasis, ClvOptions, Linearization, Subspace};
use adjshadow::Trajectory;
use nalgebra::{DMatrix, DVector};

const PHI: f64 = 1.618_033_988_749_895;

fn trajectory(s: f64, u0: [f64; 2], n: usize) -> Trajectory {
    attractor_trajectory(&CatMap, &u0, s, 1.0, 200.0, n).unwrap()
}

fn clvs(lin: &Linearization, head: usize, tail: usize) -> ClvBasis {
    compute_clvs(lin, &ClvOptions { transient_steps: Some((head, tail)), ..Default::default() }).unwrap()
}

fn projector(clv: &ClvBasis, i: usize, which: Subspace) -> DMatrix<f64> {
    let m = clv.dim();
    let mut p = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        p.set_column(j, &project(clv, i, which, &e).unwrap());
    }
    p
}

fn jac(traj: &Trajectory, i: usize) -> DMatrix<f64> {
    CatMap.rhs_jac_u(traj.state(i), traj.parameter)
}

fn f_s(traj: &Trajectory, i: usize) -> DVector<f64> {
    CatMap.rhs_jac_s(traj.state(i), traj.parameter)
}

fn j_u(traj: &Trajectory, i: usize) -> DVector<f64> {
    CatMap.objective_grad_u(traj.state(i), traj.parameter)
}

/// `v_k = sum_{l<k} A..A P^-_{l+1} f_s(u_l) - sum_{l>=k} (A_l..A_k)^{-1} P^+_{l+1} f_s(u_l)`,
/// re-projecting after every step so rounding never leaks into the growing
/// direction.
fn tangent_direct(traj: &Trajectory, clv: &ClvBasis) -> Vec<DVector<f64>> {
    let (a, n) = (clv.start, clv.window_steps());
    let pm: Vec<_> = (0..=n).map(|k| projector(clv, a + k, Subspace::Stable)).collect();
    let pp: Vec<_> = (0..=n).map(|k| projector(clv, a + k, Subspace::Unstable)).collect();
    let mut out = vec![DVector::zeros(2); n + 1];
    for l in 0..n {
        let mut w = &pm[l + 1] * f_s(traj, a + l);
        out[l + 1] += &w;
        for k in l + 2..=n {
            w = &pm[k] * (jac(traj, a + k - 1) * w);
            out[k] += &w;
        }
        let mut w = &pp[l + 1] * f_s(traj, a + l);
        for k in (0..=l).rev() {
            w = &pp[k] * jac(traj, a + k).lu().solve(&w).unwrap();
            out[k] -= &w;
        }
    }
    out
}

/// `vbar_l = sum_{l<=i<N} (A_{i-1}..A_l)^T P̄^-_i J_u(u_i) - sum_{i<l} (A_{l-1}..A_i)^{-T} P̄^+_i J_u(u_i)`.
fn adjoint_direct(traj: &Trajectory, clv: &ClvBasis) -> Vec<DVector<f64>> {
    let (a, n) = (clv.start, clv.window_steps());
    let pm: Vec<_> = (0..=n).map(|k| projector(clv, a + k, Subspace::Stable).transpose()).collect();
    let pp: Vec<_> = (0..=n).map(|k| projector(clv, a + k, Subspace::Unstable).transpose()).collect();
    let mut out = vec![DVector::zeros(2); n + 1];
    for i in 0..n {
        let mut w = &pm[i] * j_u(traj, a + i);
        out[i] += &w;
        for l in (0..i).rev() {
            w = &pm[l] * (jac(traj, a + l).transpose() * w);
            out[l] += &w;
        }
        let mut w = &pp[i] * j_u(traj, a + i);
        for l in i + 1..=n {
            w = &pp[l] * jac(traj, a + l - 1).transpose().lu().solve(&w).unwrap();
            out[l] -= &w;
        }
    }
    out
}

fn max_gap(a: &[DVector<f64>], values: &adjshadow::series::VecSeries) -> f64 {
    a.iter().enumerate().map(|(k, v)| (v - values.vector(k)).amax()).fold(0.0, f64::max)
}

#[test]
fn tangent_sequence_matches_direct_sums() {
    for s in [0.0, 0.08] {
        let traj = trajectory(s, [0.21, 0.67], 400);
        let lin = Linearization::new(&CatMap, &traj).unwrap();
        let clv = clvs(&lin, 100, 100);
        let shadow = tangent_shadowing_map(&lin, &clv, None).unwrap();
        let direct = tangent_direct(&traj, &clv);
        assert!(max_gap(&direct, &shadow.values) < 1e-12, "s = {s}");
    }
}

#[test]
fn adjoint_sequence_matches_direct_sums() {
    for s in [0.0, 0.08] {
        let traj = trajectory(s, [0.44, 0.05], 400);
        let lin = Linearization::new(&CatMap, &traj).unwrap();
        let clv = clvs(&lin, 100, 100);
        let adj = dual_basis(&clv, &lin).unwrap();
        let shadow = adjoint_shadowing_map(&lin, &clv, &adj, None).unwrap();
        let direct = adjoint_direct(&traj, &clv);
        assert!(max_gap(&direct, &shadow.values) < 1e-12, "s = {s}");
    }
}

#[test]
fn three_step_window_written_out_by_hand() {
    let traj = trajectory(0.1, [0.3, 0.9], 203);
    let lin = Linearization::new(&CatMap, &traj).unwrap();
    let clv = clvs(&lin, 100, 100);
    assert_eq!(clv.window_steps(), 3);
    let a = clv.start;
    let ai = |k: usize| jac(&traj, a + k).try_inverse().unwrap();
    let (a1, a2) = (jac(&traj, a + 1), jac(&traj, a + 2));
    let (i0, i1, i2) = (ai(0), ai(1), ai(2));
    let pp = |k: usize| projector(&clv, a + k, Subspace::Unstable);
    let pm = |k: usize| projector(&clv, a + k, Subspace::Stable);
    let f = |l: usize| f_s(&traj, a + l);
    let v = [
        -(&i0 * pp(1) * f(0)) - &i0 * &i1 * pp(2) * f(1) - &i0 * &i1 * &i2 * pp(3) * f(2),
        pm(1) * f(0) - &i1 * pp(2) * f(1) - &i1 * &i2 * pp(3) * f(2),
        &a1 * pm(1) * f(0) + pm(2) * f(1) - &i2 * pp(3) * f(2),
        &a2 * &a1 * pm(1) * f(0) + &a2 * pm(2) * f(1) + pm(3) * f(2),
    ];
    let shadow = tangent_shadowing_map(&lin, &clv, None).unwrap();
    assert!(max_gap(&v, &shadow.values) < 1e-13);

    let t = |m: DMatrix<f64>| m.transpose();
    let (a0t, a1t) = (t(jac(&traj, a)), t(jac(&traj, a + 1)));
    let (i0t, i1t, i2t) = (t(i0), t(i1), t(i2));
    let g = |i: usize| j_u(&traj, a + i);
    let vbar = [
        t(pm(0)) * g(0) + &a0t * t(pm(1)) * g(1) + &a0t * &a1t * t(pm(2)) * g(2),
        -(&i0t * t(pp(0)) * g(0)) + t(pm(1)) * g(1) + &a1t * t(pm(2)) * g(2),
        -(&i1t * &i0t * t(pp(0)) * g(0)) - &i1t * t(pp(1)) * g(1) + t(pm(2)) * g(2),
        -(&i2t * &i1t * &i0t * t(pp(0)) * g(0)) - &i2t * &i1t * t(pp(1)) * g(1) - &i2t * t(pp(2)) * g(2),
    ];
    let adj = dual_basis(&clv, &lin).unwrap();
    let shadow = adjoint_shadowing_map(&lin, &clv, &adj, None).unwrap();
    assert!(max_gap(&vbar, &shadow.values) < 1e-13);
}

#[test]
fn tangent_and_adjoint_sums_are_equal() {
    for n in [100, 10_000] {
        let traj = trajectory(0.05, [0.6, 0.2], n + 200);
        let lin = Linearization::new(&CatMap, &traj).unwrap();
        let clv = clvs(&lin, 100, 100);
        let adj = dual_basis(&clv, &lin).unwrap();
        let t = sensitivity_tangent_map(&lin, &tangent_shadowing_map(&lin, &clv, None).unwrap()).unwrap();
        let a = sensitivity_adjoint_map(&lin, &adjoint_shadowing_map(&lin, &clv, &adj, None).unwrap()).unwrap();
        assert!((t.value - a.value).abs() <= 1e-10 * t.value.abs().max(1.0), "N = {n}: {} vs {}", t.value, a.value);
    }
}

#[test]
fn unperturbed_cat_map_clvs_are_eigenvectors() {
    let traj = trajectory(0.0, [0.1, 0.7], 300);
    let lin = Linearization::new(&CatMap, &traj).unwrap();
    let clv = clvs(&lin, 50, 50);
    let adj = dual_basis(&clv, &lin).unwrap();
    let up = DVector::from_vec(vec![PHI, 1.0]).normalize();
    let down = DVector::from_vec(vec![1.0, -PHI]).normalize();
    assert!((clv.exponents[0] - (PHI * PHI).ln()).abs() < 1e-12);
    assert!((clv.exponents[1] + (PHI * PHI).ln()).abs() < 1e-12);
    for i in [clv.start, clv.start + 77, clv.end()] {
        let z = clv.frame(i);
        assert!(z.column(0).dot(&up).abs() > 1.0 - 1e-12);
        assert!(z.column(1).dot(&down).abs() > 1.0 - 1e-12);
        // the matrix is symmetric, so left and right eigenvectors coincide
        let y = adj.frame(i);
        assert!(y.column(0).dot(&up).abs() > 1.0 - 1e-12);
        assert!(y.column(1).dot(&down).abs() > 1.0 - 1e-12);
        let d = adj.dual(i);
        assert!((d.transpose() * z - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}

#[test]
fn adjoint_stable_projection_is_a_rank_one_formula() {
    let traj = trajectory(0.07, [0.5, 0.5], 300);
    let lin = Linearization::new(&CatMap, &traj).unwrap();
    let clv = clvs(&lin, 50, 50);
    let adj = dual_basis(&clv, &lin).unwrap();
    for i in (clv.start..=clv.end()).step_by(17) {
        let w = j_u(&traj, i);
        // P̄^- w = zbar_2 <z_2, w> / <zbar_2, z_2>
        let (z2, y2) = (clv.frame(i).column(1).into_owned(), adj.frame(i).column(1).into_owned());
        let expect = &y2 * (z2.dot(&w) / y2.dot(&z2));
        let got = adjoint_project(&adj, &clv, i, Subspace::Stable, w.as_slice()).unwrap();
        assert!((got - expect).amax() < 1e-12 * w.amax().max(1.0));
    }
}

#[test]
fn interior_adjoint_values_do_not_depend_on_the_window_length() {
    let short = trajectory(0.05, [0.33, 0.81], 400);
    let long = trajectory(0.05, [0.33, 0.81], 800);
    let run = |traj: &Trajectory| {
        let lin = Linearization::new(&CatMap, traj).unwrap();
        let clv = clvs(&lin, 50, 50);
        let adj = dual_basis(&clv, &lin).unwrap();
        (clv.start, adjoint_shadowing_map(&lin, &clv, &adj, None).unwrap())
    };
    let (a, s) = run(&short);
    let (b, l) = run(&long);
    assert_eq!(a, b);
    let buffer = s.buffer;
    for i in a..short.steps() - 50 - buffer {
        let gap = (DVector::from_column_slice(s.at(i)) - DVector::from_column_slice(l.at(i))).amax();
        assert!(gap <= 1e-8, "step {i}: {gap}");
    }
}

#[test]
fn truncation_error_decays_with_the_spectral_gap() {
    let short = trajectory(0.05, [0.12, 0.48], 300);
    let long = trajectory(0.05, [0.12, 0.48], 600);
    let run = |traj: &Trajectory| {
        let lin = Linearization::new(&CatMap, traj).unwrap();
        let clv = clvs(&lin, 50, 50);
        let adj = dual_basis(&clv, &lin).unwrap();
        (clv.clone(), adjoint_shadowing_map(&lin, &clv, &adj, None).unwrap())
    };
    let (clv, s) = run(&short);
    let (_, l) = run(&long);
    let err = |d: usize| {
        let i = clv.end() - d;
        (DVector::from_column_slice(s.at(i)) - DVector::from_column_slice(l.at(i))).norm()
    };
    let b = 8;
    let decay = (clv.spectral_gap() * b as f64).exp();
    // one step of slack for the fluctuating local growth
    let bound = decay / (clv.spectral_gap() * 1.5).exp();
    assert!(err(b) / err(2 * b) >= bound, "{} / {} vs {bound}", err(b), err(2 * b));
}

#[test]
fn unperturbed_cat_map_shadowing_value_matches_closed_form() {
    // With s = 0 the directions are constant and the sums reduce to Fourier
    // coefficients of J and f_s along the eigenvectors: 1 / (2 sqrt5 phi^2).
    let expect = 1.0 / (2.0 * 5f64.sqrt() * PHI * PHI);
    let traj = trajectory(0.0, [0.2718, 0.3141], 100_000);
    let lin = Linearization::new(&CatMap, &traj).unwrap();
    let clv = clvs(&lin, 100, 100);
    let r = sensitivity_tangent_map(&lin, &tangent_shadowing_map(&lin, &clv, None).unwrap()).unwrap();
    assert!((r.value - expect).abs() <= 3.0 * r.stderr, "{} +- {} vs {expect}", r.value, r.stderr);
}
