//! Experiment configuration (TOML). See `example.toml` at the crate root for
//! an annotated example.

use std::path::PathBuf;

use adjshadow::dynamics::{builtin, builtin_names, default_spinup, steps_for};
use adjshadow::sensitivity::Method;
use adjshadow::{System, SystemKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub clv: ClvSection,
    #[serde(default)]
    pub shadowing: ShadowingSection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    pub parameter: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub u0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    pub spinup: Option<f64>,
    pub horizon: f64,
    pub step: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClvSection {
    pub neutral_tolerance: Option<f64>,
    pub qr_stride: Option<usize>,
    pub transient_fractions: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowingSection {
    /// Time units for flows, steps for maps.
    pub buffer: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    pub methods: Vec<String>,
    pub fd_ds: Option<f64>,
    pub fd_horizon: Option<f64>,
    pub fd_spinup: Option<f64>,
    pub fd_step: Option<f64>,
    pub ensemble: usize,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self { methods: Vec::new(), fd_ds: None, fd_horizon: None, fd_spinup: None, fd_step: None, ensemble: 10 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec!["json".into(), "csv".into()] }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub inject_fault: bool,
    pub fault_epsilon: f64,
    pub samples: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { inject_fault: false, fault_epsilon: 1e-6, samples: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

/// A validated configuration with defaults resolved.
pub struct Experiment {
    pub system: Box<dyn System>,
    pub parameter: f64,
    pub u0: Vec<f64>,
    pub seed: u64,
    pub spinup: f64,
    /// Integration step; 1 for maps.
    pub step: f64,
    pub steps: usize,
    pub clv: adjshadow::ClvOptions,
    /// Buffer in steps, if given.
    pub buffer: Option<usize>,
    pub methods: Vec<Method>,
    pub fd_ds: f64,
    pub fd_horizon: f64,
    pub fd_spinup: f64,
    pub fd_step: f64,
    pub ensemble: usize,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub verify: VerifySection,
}

impl Experiment {
    pub fn kind(&self) -> SystemKind {
        self.system.kind()
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn positive(name: &str, x: f64) -> Result<f64, String> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{name} must be a positive number, got {x}"))
    }
}

fn non_negative(name: &str, x: f64) -> Result<f64, String> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("{name} must be non-negative, got {x}"))
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    toml::from_str(text).map_err(|e| e.message().replace('\n', " "))
}

/// Checks every field and fills in defaults. Nothing is written here.
pub fn resolve(cfg: ExperimentConfig, over: &Overrides) -> Result<Experiment, String> {
    let system = builtin(&cfg.system.name)
        .ok_or_else(|| format!("unknown system `{}`; known: {}", cfg.system.name, builtin_names().join(", ")))?;
    let kind = system.kind();
    let m = system.dim();
    let parameter = cfg.system.parameter;
    if !parameter.is_finite() {
        return Err("system.parameter must be finite".into());
    }
    let t = &cfg.trajectory;
    let seed = over.seed.unwrap_or(t.seed);
    let horizon = positive("trajectory.horizon", t.horizon)?;
    let step = match kind {
        SystemKind::Flow => positive("trajectory.step", t.step.unwrap_or(1e-3))?,
        SystemKind::Map => {
            if t.step.is_some_and(|h| h != 1.0) {
                return Err("trajectory.step must be omitted or 1 for maps".into());
            }
            1.0
        }
    };
    let steps = steps_for(kind, horizon, step);
    if steps < 8 {
        return Err(format!("trajectory of {steps} steps is too short; increase trajectory.horizon"));
    }
    let spinup = non_negative("trajectory.spinup", t.spinup.unwrap_or_else(|| default_spinup(kind)))?;
    let u0 = match &t.u0 {
        Some(u) => {
            if u.len() != m {
                return Err(format!("trajectory.u0 has {} entries, {} has dimension {m}", u.len(), cfg.system.name));
            }
            if !u.iter().all(|x| x.is_finite()) {
                return Err("trajectory.u0 must be finite".into());
            }
            u.clone()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match kind {
                SystemKind::Map => (0..m).map(|_| rng.random::<f64>()).collect(),
                SystemKind::Flow => (0..m).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            }
        }
    };

    let mut clv = adjshadow::ClvOptions::default();
    if let Some(tol) = cfg.clv.neutral_tolerance {
        clv.neutral_tolerance = Some(positive("clv.neutral_tolerance", tol)?);
    }
    if let Some(stride) = cfg.clv.qr_stride {
        if stride == 0 {
            return Err("clv.qr_stride must be at least 1".into());
        }
        clv.qr_stride = Some(stride);
    }
    if let Some([a, b]) = cfg.clv.transient_fractions {
        for x in [a, b] {
            if !(0.0..=0.25).contains(&x) {
                return Err(format!("clv.transient_fractions must lie in [0, 0.25], got {x}"));
            }
        }
        clv.transient_fractions = (a, b);
    }

    let buffer = match cfg.shadowing.buffer {
        None => None,
        Some(b) => Some((non_negative("shadowing.buffer", b)? / step).round() as usize),
    };

    let mut methods = Vec::new();
    for name in &cfg.sensitivity.methods {
        let method: Method = name.parse().map_err(|_| {
            let known: Vec<&str> = Method::ALL.iter().map(|m| m.tag()).collect();
            format!("unknown sensitivity method `{name}`; known: {}", known.join(", "))
        })?;
        if !method.supports(kind) {
            return Err(format!("method `{name}` does not apply to {} systems", kind_name(kind)));
        }
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    let s = &cfg.sensitivity;
    let fd_ds = positive("sensitivity.fd_ds", s.fd_ds.unwrap_or(match kind {
        SystemKind::Flow => 0.5,
        SystemKind::Map => 0.01,
    }))?;
    let fd_horizon = positive("sensitivity.fd_horizon", s.fd_horizon.unwrap_or(horizon))?;
    let fd_spinup = non_negative("sensitivity.fd_spinup", s.fd_spinup.unwrap_or(spinup))?;
    let fd_step = match kind {
        SystemKind::Flow => positive("sensitivity.fd_step", s.fd_step.unwrap_or(step))?,
        SystemKind::Map => 1.0,
    };
    if s.ensemble == 0 {
        return Err("sensitivity.ensemble must be at least 1".into());
    }

    let mut formats = Vec::new();
    match over.format {
        Some(f) => formats.push(f),
        None => {
            for f in &cfg.output.formats {
                let f = match f.as_str() {
                    "json" => Format::Json,
                    "csv" => Format::Csv,
                    other => return Err(format!("unknown output format `{other}`; use json or csv")),
                };
                if !formats.contains(&f) {
                    formats.push(f);
                }
            }
        }
    }
    if cfg.verify.samples == 0 {
        return Err("verify.samples must be at least 1".into());
    }
    positive("verify.fault_epsilon", cfg.verify.fault_epsilon)?;

    Ok(Experiment {
        system,
        parameter,
        u0,
        seed,
        spinup,
        step,
        steps,
        clv,
        buffer,
        methods,
        fd_ds,
        fd_horizon,
        fd_spinup,
        fd_step,
        ensemble: s.ensemble,
        out: over.out.clone().unwrap_or(cfg.output.directory),
        formats,
        verify: cfg.verify,
    })
}

pub fn kind_name(kind: SystemKind) -> &'static str {
    match kind {
        SystemKind::Flow => "flow",
        SystemKind::Map => "map",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../example.toml");

    #[test]
    fn annotated_example_is_valid() {
        let cfg = parse(EXAMPLE).unwrap();
        let e = resolve(cfg, &Overrides::default()).unwrap();
        assert_eq!(e.system.name(), "lorenz63");
        assert_eq!(e.steps, 2_000_000);
    }

    #[test]
    fn negative_horizon_is_rejected() {
        let cfg = parse("[system]\nname = \"catmap\"\nparameter = 0.0\n[trajectory]\nhorizon = -5\n").unwrap();
        assert!(resolve(cfg, &Overrides::default()).err().unwrap().contains("horizon"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[system]\nname = \"catmap\"\nparameter = 0.0\nextra = 1\n[trajectory]\nhorizon = 5\n").is_err());
    }

    #[test]
    fn methods_must_match_the_system_kind() {
        let cfg = parse(
            "[system]\nname = \"catmap\"\nparameter = 0.0\n[trajectory]\nhorizon = 100\n[sensitivity]\nmethods = [\"adjoint-flow\"]\n",
        )
        .unwrap();
        assert!(resolve(cfg, &Overrides::default()).is_err());
    }

    #[test]
    fn seed_override_changes_the_drawn_start() {
        let text = "[system]\nname = \"catmap\"\nparameter = 0.0\n[trajectory]\nhorizon = 100\n";
        let a = resolve(parse(text).unwrap(), &Overrides::default()).unwrap();
        let b = resolve(parse(text).unwrap(), &Overrides { seed: Some(9), ..Default::default() }).unwrap();
        let c = resolve(parse(text).unwrap(), &Overrides::default()).unwrap();
        assert_ne!(a.u0, b.u0);
        assert_eq!(a.u0, c.u0);
    }
}
