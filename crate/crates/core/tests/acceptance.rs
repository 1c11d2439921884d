//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Always exits 0 so the workspace test run stays green while still showing
//! failures; set `ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

use std::time::{Duration, Instant};

use adjshadow::adjoint::dual_basis;
use adjshadow::dynamics::{attractor_trajectory, CatMap, Lorenz63};
use adjshadow::sensitivity::{
    finite_difference_oracle, relative_difference, sensitivity_adjoint_flow, sensitivity_adjoint_map, sensitivity_tangent_flow,
    sensitivity_tangent_map, FdOptions, InitialState, SensitivityResult,
};
use adjshadow::shadowing::{
    adjoint_shadowing_flow, adjoint_shadowing_map, default_flow_buffer, inject_unstable_fault_map, tangent_shadowing_flow,
    tangent_shadowing_map, verify_flow, verify_map, Diagnostics, Thresholds,
};
use adjshadow::tangent::{compute_clvs, ClvBasis, ClvOptions, Linearization};
use adjshadow::verify::{run_suite, Report, SuiteOptions};
use adjshadow::{AdjointClvBasis, Trajectory};

/// Fixed before any acceptance run; reused for every random draw.
const SEED: u64 = 2024;
const LORENZ_H: f64 = 1e-3;
const CAT_S: f64 = 0.05;

struct Outcome {
    passed: Vec<bool>,
}

impl Outcome {
    fn line(&mut self, n: usize, pass: bool, took: Duration, budget: Duration, what: &str) {
        let pass = pass && took <= budget;
        self.passed.push(pass);
        println!(
            "{} criterion {n}: {what} [{:.1} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn detail(text: impl AsRef<str>) {
    println!("    {}", text.as_ref());
}

fn cat_trajectory(s: f64, n: usize) -> Trajectory {
    attractor_trajectory(&CatMap, &[0.2718, 0.3141], s, 1.0, 1000.0, n).unwrap()
}

fn cat_opts() -> ClvOptions {
    ClvOptions { transient_steps: Some((100, 100)), ..Default::default() }
}

fn lorenz_trajectory(duration: f64) -> Trajectory {
    attractor_trajectory(&Lorenz63::default(), &[1.0, 1.0, 1.0], 28.0, LORENZ_H, 100.0, (duration / LORENZ_H).round() as usize).unwrap()
}

/// Both flow sensitivities and the adjoint diagnostics on one trajectory.
fn lorenz_pipeline(lin: &Linearization, clv: &ClvBasis, adj: &AdjointClvBasis) -> (SensitivityResult, SensitivityResult, Diagnostics) {
    let b = default_flow_buffer(lin, clv);
    let t = sensitivity_tangent_flow(lin, &tangent_shadowing_flow(lin, clv, b).unwrap()).unwrap();
    let shadow = adjoint_shadowing_flow(lin, clv, adj, b).unwrap();
    let a = sensitivity_adjoint_flow(lin, &shadow).unwrap();
    (t, a, verify_flow(&shadow, lin, clv, adj).unwrap())
}

fn separation(a: &SensitivityResult, b: &SensitivityResult) -> f64 {
    (a.value - b.value).abs() / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

fn report_checks(label: &str, r: &Report) {
    for c in &r.checks {
        detail(format!("{label} {:<32} {:>11.3e} <= {:.3e} {}", c.name, c.value, c.threshold, if c.pass { "ok" } else { "FAILED" }));
    }
}

fn main() {
    let mut out = Outcome { passed: Vec::new() };
    let secs = Duration::from_secs;
    let lorenz = Lorenz63::default();

    // 1. exact discrete identity on the perturbed cat map
    let t0 = Instant::now();
    let mut ok = true;
    for n in [100, 10_000] {
        let traj = cat_trajectory(CAT_S, n + 200);
        let lin = Linearization::new(&CatMap, &traj).unwrap();
        let clv = compute_clvs(&lin, &cat_opts()).unwrap();
        let adj = dual_basis(&clv, &lin).unwrap();
        let t = sensitivity_tangent_map(&lin, &tangent_shadowing_map(&lin, &clv, None).unwrap()).unwrap();
        let a = sensitivity_adjoint_map(&lin, &adjoint_shadowing_map(&lin, &clv, &adj, None).unwrap()).unwrap();
        let rel = relative_difference(t.value, a.value);
        detail(format!("N = {n}: tangent {:.15} adjoint {:.15} relative {rel:.2e}", t.value, a.value));
        ok &= rel <= 1e-10;
    }
    out.line(1, ok, t0.elapsed(), secs(10), "cat-map tangent and adjoint sums agree to 1e-10");

    // Shared Lorenz run, T = 2000.
    let t0 = Instant::now();
    let traj = lorenz_trajectory(2000.0);
    let lin = Linearization::new(&lorenz, &traj).unwrap();
    let clv = compute_clvs(&lin, &ClvOptions::default()).unwrap();
    let adj = dual_basis(&clv, &lin).unwrap();
    let (lt, la, ldiag) = lorenz_pipeline(&lin, &clv, &adj);
    let lorenz_time = t0.elapsed();

    // 2. tangent/adjoint flow equivalence
    let rel = relative_difference(lt.value, la.value);
    detail(format!("tangent {:.9} +- {:.4} adjoint {:.9} +- {:.4} relative {rel:.2e}", lt.value, lt.stderr, la.value, la.stderr));
    out.line(2, rel <= 1e-5, lorenz_time, secs(300), "Lorenz T=2000 tangent and adjoint estimates agree to 1e-5");

    // 3. oracle agreement
    let t0 = Instant::now();
    let cat_traj = cat_trajectory(0.0, 100_200);
    let cat_lin = Linearization::new(&CatMap, &cat_traj).unwrap();
    let cat_clv = compute_clvs(&cat_lin, &cat_opts()).unwrap();
    let cat_adj = dual_basis(&cat_clv, &cat_lin).unwrap();
    let ca = sensitivity_adjoint_map(&cat_lin, &adjoint_shadowing_map(&cat_lin, &cat_clv, &cat_adj, None).unwrap()).unwrap();
    let cat_fd = finite_difference_oracle(
        &CatMap,
        0.0,
        &FdOptions {
            ds: 0.01,
            horizon: 1e7,
            spinup: 1000.0,
            step: 1.0,
            n_ensemble: 10,
            seed: SEED,
            initial: InitialState::Around { center: vec![0.5, 0.5], radius: 0.5 },
        },
    )
    .unwrap();
    let cat_sep = separation(&ca, &cat_fd);
    detail(format!(
        "cat map s=0: adjoint {:.5} +- {:.5}, fd {:.5} +- {:.5}, separation {cat_sep:.2} combined stderr",
        ca.value, ca.stderr, cat_fd.value, cat_fd.stderr
    ));
    let lorenz_fd = finite_difference_oracle(
        &lorenz,
        28.0,
        &FdOptions {
            ds: 0.5,
            horizon: 5000.0,
            spinup: 100.0,
            step: LORENZ_H,
            n_ensemble: 10,
            seed: SEED,
            initial: InitialState::Around { center: vec![1.0, 1.0, 1.0], radius: 1.0 },
        },
    )
    .unwrap();
    let lorenz_sep = separation(&la, &lorenz_fd);
    detail(format!(
        "Lorenz: adjoint {:.5} +- {:.5}, fd {:.5} +- {:.5}, separation {lorenz_sep:.2} combined stderr",
        la.value, la.stderr, lorenz_fd.value, lorenz_fd.stderr
    ));
    let cat_ok = cat_sep <= 2.0;
    let lorenz_ok = (0.91..=1.11).contains(&la.value) && lorenz_sep <= 2.0;
    detail(format!("cat map {} / Lorenz {}", if cat_ok { "ok" } else { "FAILED" }, if lorenz_ok { "ok" } else { "FAILED" }));
    out.line(3, cat_ok && lorenz_ok, t0.elapsed() + lorenz_time, secs(900), "shadowing sensitivities agree with the finite-difference oracle");

    // 4. adjoint shadowing direction properties
    let t0 = Instant::now();
    let th = Thresholds::default();
    let mut ok = true;
    for c in ldiag.checks(&th) {
        detail(format!("Lorenz T=2000 {:<30} {:>11.3e} <= {:.3e}", c.name, c.value, c.threshold));
        ok &= c.pass;
    }
    let mut avgs = Vec::new();
    for duration in [500.0, 1000.0] {
        let traj = lorenz_trajectory(duration);
        let lin = Linearization::new(&lorenz, &traj).unwrap();
        let clv = compute_clvs(&lin, &ClvOptions::default()).unwrap();
        let adj = dual_basis(&clv, &lin).unwrap();
        avgs.push(lorenz_pipeline(&lin, &clv, &adj).2.f_inner_product_avg.unwrap());
    }
    avgs.push(ldiag.f_inner_product_avg.unwrap());
    let decreasing = avgs.windows(2).all(|w| w[1] < w[0]);
    detail(format!("|<vbar, f>| average at T = 500, 1000, 2000: {} decreasing: {decreasing}", avgs.iter().map(|a| format!("{a:.3e}")).collect::<Vec<_>>().join(", ")));
    ok &= decreasing;
    let traj = cat_trajectory(CAT_S, 10_200);
    let clin = Linearization::new(&CatMap, &traj).unwrap();
    let cclv = compute_clvs(&clin, &cat_opts()).unwrap();
    let cadj = dual_basis(&cclv, &clin).unwrap();
    let mut cshadow = adjoint_shadowing_map(&clin, &cclv, &cadj, None).unwrap();
    let cdiag = verify_map(&cshadow, &clin, &cclv, &cadj).unwrap();
    for c in cdiag.checks(&th) {
        detail(format!("cat map {:<30} {:>11.3e} <= {:.3e}", c.name, c.value, c.threshold));
        ok &= c.pass;
    }
    ok &= cdiag.adjoint_residual <= 1e-10;
    out.line(4, ok, t0.elapsed() + lorenz_time, secs(600), "adjoint shadowing directions satisfy their defining properties");

    // 5. property suite
    let t0 = Instant::now();
    let opts = SuiteOptions { samples: 100, seed: SEED, ..Default::default() };
    let lorenz_report = run_suite(&lin, &clv, &adj, &opts).unwrap();
    report_checks("Lorenz", &lorenz_report);
    let cat_report = run_suite(&clin, &cclv, &cadj, &opts).unwrap();
    report_checks("cat map", &cat_report);
    out.line(5, lorenz_report.passed() && cat_report.passed(), t0.elapsed(), secs(600), "projection, pairing and exponent properties over 100 samples");

    // 6. spectra
    let t0 = Instant::now();
    let target = [0.906, 0.0, -14.57];
    let tol = [0.02, 0.005, 0.2];
    let lorenz_ok = (0..3).all(|j| (clv.exponents[j] - target[j]).abs() <= tol[j]);
    let neutral = clv.exponents.iter().filter(|l| l.abs() <= clv.neutral_tolerance).count();
    let cat_ok = (cat_clv.exponents[0] - 0.9624).abs() <= 1e-3 && (cat_clv.exponents[1] + 0.9624).abs() <= 1e-3;
    detail(format!("Lorenz exponents {:?}, {neutral} within {:.4} of zero", clv.exponents, clv.neutral_tolerance));
    detail(format!("cat map exponents {:?}", cat_clv.exponents));
    out.line(6, lorenz_ok && cat_ok && neutral == 1, t0.elapsed() + lorenz_time, secs(300), "CLV spectra match the reference values");

    // 7. fault detection
    let t0 = Instant::now();
    let faulty = run_suite(&lin, &clv, &adj, &SuiteOptions { inject_fault: Some(1e-6), ..opts.clone() }).unwrap();
    let failing: Vec<&str> = faulty.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    detail(format!("Lorenz with fault: failing checks {failing:?}"));
    let lorenz_ok = failing == ["unstable-component-at-start"];
    inject_unstable_fault_map(&mut cshadow, &cclv, &cadj, 1e-6).unwrap();
    let cat_failing: Vec<String> =
        verify_map(&cshadow, &clin, &cclv, &cadj).unwrap().checks(&th).into_iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let t = sensitivity_tangent_map(&clin, &tangent_shadowing_map(&clin, &cclv, None).unwrap()).unwrap();
    let a = sensitivity_adjoint_map(&clin, &cshadow).unwrap();
    let rel = relative_difference(t.value, a.value);
    detail(format!("cat map with fault: failing checks {cat_failing:?}, identity relative {rel:.2e}"));
    let cat_ok = cat_failing == ["unstable-component-at-start"] && rel <= 1e-10;
    out.line(7, lorenz_ok && cat_ok, t0.elapsed(), secs(600), "an unstable fault is caught while the discrete identity still holds");

    let n_pass = out.passed.iter().filter(|p| **p).count();
    println!("{n_pass}/{} criteria passed", out.passed.len());
    if n_pass < out.passed.len() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
