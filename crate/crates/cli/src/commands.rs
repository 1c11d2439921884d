use std::fs;
use std::path::{Path, PathBuf};

use adjshadow::adjoint::{dual_basis, AdjointClvBasis};
use adjshadow::dynamics::attractor_trajectory;
use adjshadow::io::{save_clv, write_json, write_series_csv, write_trajectory_csv, ExponentsRecord, SCHEMA};
use adjshadow::sensitivity::{
    finite_difference_oracle, relative_difference, sensitivity_adjoint_flow, sensitivity_adjoint_map, sensitivity_tangent_flow,
    sensitivity_tangent_map, FdOptions, InitialState, Method, SensitivityResult,
};
use adjshadow::shadowing::{
    adjoint_shadowing_flow, adjoint_shadowing_map, default_flow_buffer, tangent_shadowing_flow, tangent_shadowing_map, verify_flow,
    verify_map, Diagnostics, PropertyCheck, Thresholds,
};
use adjshadow::tangent::compute_clvs;
use adjshadow::verify::{run_suite, SuiteOptions};
use adjshadow::{ClvBasis, Error, Linearization, SystemKind, Trajectory};
use serde::Serialize;

use crate::config::{kind_name, Experiment, Format};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    NothingToDo(String),
    Core(Error),
    Property(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "invalid-config",
            CliError::NothingToDo(_) => "nothing-to-do",
            CliError::Core(e) => e.code(),
            CliError::Property(_) => "property-failure",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::NothingToDo(m) | CliError::Property(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    /// 0 success, 2 invalid configuration, 3 numerical failure, 4 property
    /// failure, 1 anything else (I/O).
    pub fn exit_status(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::NothingToDo(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(Error::Io(_) | Error::Csv(_) | Error::Json(_)) => 1,
            CliError::Core(_) => 2,
            CliError::Property(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn out_dir(exp: &Experiment) -> Result<&Path> {
    fs::create_dir_all(&exp.out).map_err(Error::from)?;
    Ok(&exp.out)
}

fn file(exp: &Experiment, name: &str) -> Result<PathBuf> {
    Ok(out_dir(exp)?.join(name))
}

fn trajectory(exp: &Experiment) -> Result<Trajectory> {
    Ok(attractor_trajectory(exp.system.as_ref(), &exp.u0, exp.parameter, exp.step, exp.spinup, exp.steps)?)
}

struct Pipeline<'a> {
    lin: Linearization<'a>,
    clv: ClvBasis,
    adj: AdjointClvBasis,
}

fn pipeline<'a>(exp: &'a Experiment, traj: &'a Trajectory) -> Result<Pipeline<'a>> {
    let lin = Linearization::new(exp.system.as_ref(), traj)?;
    let clv = compute_clvs(&lin, &exp.clv)?;
    let adj = dual_basis(&clv, &lin)?;
    Ok(Pipeline { lin, clv, adj })
}

fn print_checks(checks: &[PropertyCheck]) {
    for c in checks {
        println!("{} {:<32} {:.3e} <= {:.3e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
}

fn failures(checks: &[PropertyCheck]) -> Option<String> {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        None
    } else {
        Some(format!("{} check(s) failed: {}", failed.len(), failed.join(", ")))
    }
}

pub fn clv(exp: &Experiment) -> Result<()> {
    let traj = trajectory(exp)?;
    let lin = Linearization::new(exp.system.as_ref(), &traj)?;
    let clv = compute_clvs(&lin, &exp.clv)?;
    let record = ExponentsRecord::new(exp.system.name(), exp.parameter, &clv);
    write_json(&file(exp, "exponents.json")?, &record)?;
    if exp.wants(Format::Csv) {
        save_clv(out_dir(exp)?, &clv)?;
        write_trajectory_csv(&file(exp, "trajectory.csv")?, &traj)?;
    }
    for (j, l) in clv.exponents.iter().enumerate() {
        let tag = if Some(j) == clv.neutral_index {
            " neutral"
        } else if clv.is_unstable(j) {
            " unstable"
        } else {
            ""
        };
        println!("lambda_{} = {l:.6}{tag}", j + 1);
    }
    println!("min angle {:.4e} rad, unstable dimension {}", clv.min_angle, clv.n_unstable);
    Ok(())
}

#[derive(Serialize)]
struct ShadowRecord<'a> {
    schema: u32,
    system: &'a str,
    parameter: f64,
    kind: SystemKind,
    buffer: usize,
    window: (usize, usize),
    truncation_estimate: f64,
    diagnostics: &'a Diagnostics,
    checks: &'a [PropertyCheck],
}

pub fn shadow(exp: &Experiment) -> Result<()> {
    let traj = trajectory(exp)?;
    let p = pipeline(exp, &traj)?;
    let (diag, buffer, window, trunc) = match exp.kind() {
        SystemKind::Flow => {
            let b = exp.buffer.unwrap_or_else(|| default_flow_buffer(&p.lin, &p.clv));
            let t = tangent_shadowing_flow(&p.lin, &p.clv, b)?;
            let a = adjoint_shadowing_flow(&p.lin, &p.clv, &p.adj, b)?;
            if exp.wants(Format::Csv) {
                write_series_csv(&file(exp, "tangent_shadowing.csv")?, &t.v_pm, t.start, t.step, "v")?;
                write_series_csv(&file(exp, "adjoint_shadowing.csv")?, &a.v_bar, a.start, a.step, "vbar")?;
            }
            (verify_flow(&a, &p.lin, &p.clv, &p.adj)?, b, a.window, a.truncation_estimate)
        }
        SystemKind::Map => {
            let t = tangent_shadowing_map(&p.lin, &p.clv, exp.buffer)?;
            let a = adjoint_shadowing_map(&p.lin, &p.clv, &p.adj, exp.buffer)?;
            if exp.wants(Format::Csv) {
                write_series_csv(&file(exp, "tangent_shadowing.csv")?, &t.values, t.start, 1.0, "v")?;
                write_series_csv(&file(exp, "adjoint_shadowing.csv")?, &a.values, a.start, 1.0, "vbar")?;
            }
            (verify_map(&a, &p.lin, &p.clv, &p.adj)?, a.buffer, a.window, a.truncation_estimate)
        }
    };
    let checks = diag.checks(&Thresholds::default());
    let record = ShadowRecord {
        schema: SCHEMA,
        system: exp.system.name(),
        parameter: exp.parameter,
        kind: exp.kind(),
        buffer,
        window,
        truncation_estimate: trunc,
        diagnostics: &diag,
        checks: &checks,
    };
    write_json(&file(exp, "shadowing.json")?, &record)?;
    print_checks(&checks);
    match failures(&checks) {
        Some(msg) => Err(CliError::Property(msg)),
        None => Ok(()),
    }
}

fn fd_options(exp: &Experiment) -> FdOptions {
    let initial = match exp.kind() {
        SystemKind::Map => InitialState::Around { center: vec![0.5; exp.u0.len()], radius: 0.5 },
        SystemKind::Flow => InitialState::Around { center: exp.u0.clone(), radius: 1.0 },
    };
    FdOptions {
        ds: exp.fd_ds,
        horizon: exp.fd_horizon,
        spinup: exp.fd_spinup,
        step: exp.fd_step,
        n_ensemble: exp.ensemble,
        seed: exp.seed,
        initial,
    }
}

#[derive(Serialize)]
struct Comparison {
    a: Method,
    b: Method,
    relative_difference: f64,
    /// `|a - b|` in units of the combined standard error.
    separation: f64,
}

#[derive(Serialize)]
struct SensitivityTable<'a> {
    schema: u32,
    records: &'a [SensitivityResult],
    comparison: &'a [Comparison],
}

#[derive(Serialize)]
struct Record<'a> {
    schema: u32,
    #[serde(flatten)]
    result: &'a SensitivityResult,
}

pub fn sens(exp: &Experiment) -> Result<()> {
    if exp.methods.is_empty() {
        return Err(CliError::NothingToDo("sensitivity.methods is empty".into()));
    }
    let needs_pipeline = exp.methods.iter().any(|m| *m != Method::FiniteDifference);
    let traj = if needs_pipeline { Some(trajectory(exp)?) } else { None };
    let pipe = match &traj {
        Some(t) => Some(pipeline(exp, t)?),
        None => None,
    };
    let mut results = Vec::new();
    for &method in &exp.methods {
        let r = match method {
            Method::FiniteDifference => finite_difference_oracle(exp.system.as_ref(), exp.parameter, &fd_options(exp))?,
            _ => {
                let p = pipe.as_ref().expect("pipeline built for shadowing methods");
                match method {
                    Method::TangentFlow => {
                        let b = exp.buffer.unwrap_or_else(|| default_flow_buffer(&p.lin, &p.clv));
                        sensitivity_tangent_flow(&p.lin, &tangent_shadowing_flow(&p.lin, &p.clv, b)?)?
                    }
                    Method::AdjointFlow => {
                        let b = exp.buffer.unwrap_or_else(|| default_flow_buffer(&p.lin, &p.clv));
                        sensitivity_adjoint_flow(&p.lin, &adjoint_shadowing_flow(&p.lin, &p.clv, &p.adj, b)?)?
                    }
                    Method::TangentMap => sensitivity_tangent_map(&p.lin, &tangent_shadowing_map(&p.lin, &p.clv, exp.buffer)?)?,
                    Method::AdjointMap => {
                        sensitivity_adjoint_map(&p.lin, &adjoint_shadowing_map(&p.lin, &p.clv, &p.adj, exp.buffer)?)?
                    }
                    Method::FiniteDifference => unreachable!(),
                }
            }
        };
        if exp.wants(Format::Json) {
            write_json(&file(exp, &format!("sensitivity-{}.json", method.tag()))?, &Record { schema: SCHEMA, result: &r })?;
        }
        results.push(r);
    }

    let mut comparison = Vec::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            let (a, b) = (&results[i], &results[j]);
            let se = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
            comparison.push(Comparison {
                a: a.method,
                b: b.method,
                relative_difference: relative_difference(a.value, b.value),
                separation: if se > 0.0 { (a.value - b.value).abs() / se } else { f64::INFINITY },
            });
        }
    }
    if exp.wants(Format::Json) {
        // Infinite separations are not representable in JSON.
        let table = SensitivityTable { schema: SCHEMA, records: &results, comparison: &comparison };
        let mut value = serde_json::to_value(&table).map_err(Error::from)?;
        for c in value["comparison"].as_array_mut().into_iter().flatten() {
            if c["separation"].is_null() {
                c["separation"] = serde_json::Value::String("inf".into());
            }
        }
        write_json(&file(exp, "sensitivities.json")?, &value)?;
    }
    if exp.wants(Format::Csv) {
        let mut text = String::from("method,value,stderr,horizon,system,parameter\n");
        for r in &results {
            text.push_str(&format!("{},{},{},{},{},{}\n", r.method, r.value, r.stderr, r.horizon, r.system, r.parameter));
        }
        fs::write(file(exp, "sensitivities.csv")?, text).map_err(Error::from)?;
        let mut text = String::from("method_a,method_b,relative_difference,separation\n");
        for c in &comparison {
            text.push_str(&format!("{},{},{},{}\n", c.a, c.b, c.relative_difference, c.separation));
        }
        fs::write(file(exp, "comparison.csv")?, text).map_err(Error::from)?;
    }

    println!("{:<18} {:>14} {:>12} {:>10}", "method", "value", "stderr", "horizon");
    for r in &results {
        println!("{:<18} {:>14.8} {:>12.3e} {:>10}", r.method.tag(), r.value, r.stderr, r.horizon);
    }
    for c in &comparison {
        println!("{} vs {}: relative difference {:.3e}, {:.2} combined stderr", c.a, c.b, c.relative_difference, c.separation);
    }
    Ok(())
}

pub fn fd(exp: &Experiment) -> Result<()> {
    let r = finite_difference_oracle(exp.system.as_ref(), exp.parameter, &fd_options(exp))?;
    write_json(&file(exp, "fd.json")?, &Record { schema: SCHEMA, result: &r })?;
    println!("d<J>/ds = {:.8} +- {:.3e} ({} members, {} {})", r.value, r.stderr, exp.ensemble, kind_name(exp.kind()), r.system);
    Ok(())
}

pub fn verify(exp: &Experiment) -> Result<()> {
    let traj = trajectory(exp)?;
    let p = pipeline(exp, &traj)?;
    let opts = SuiteOptions {
        samples: exp.verify.samples,
        seed: exp.seed,
        buffer: match exp.kind() {
            SystemKind::Flow => exp.buffer,
            SystemKind::Map => None,
        },
        inject_fault: exp.verify.inject_fault.then_some(exp.verify.fault_epsilon),
        thresholds: Thresholds::default(),
    };
    let report = run_suite(&p.lin, &p.clv, &p.adj, &opts)?;
    write_json(&file(exp, "verify.json")?, &report)?;
    print_checks(&report.checks);
    match failures(&report.checks) {
        Some(msg) => Err(CliError::Property(msg)),
        None => Ok(()),
    }
}
