use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{System, SystemKind};

/// The Lorenz 63 flow with the Rayleigh number `rho` as parameter and
/// objective `J = z`.
#[derive(Clone, Debug)]
pub struct Lorenz63 {
    pub sigma: f64,
    pub beta: f64,
}

impl Default for Lorenz63 {
    fn default() -> Self {
        Self { sigma: 10.0, beta: 8.0 / 3.0 }
    }
}

impl System for Lorenz63 {
    fn name(&self) -> &str {
        "lorenz63"
    }

    fn kind(&self) -> SystemKind {
        SystemKind::Flow
    }

    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, u: &[f64], rho: f64) -> DVector<f64> {
        let (x, y, z) = (u[0], u[1], u[2]);
        DVector::from_vec(vec![self.sigma * (y - x), x * (rho - z) - y, x * y - self.beta * z])
    }

    fn objective(&self, u: &[f64], _rho: f64) -> f64 {
        u[2]
    }

    fn rhs_jac_u(&self, u: &[f64], rho: f64) -> DMatrix<f64> {
        let (x, y, z) = (u[0], u[1], u[2]);
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(3, 3, &[
            -self.sigma, self.sigma, 0.0,
            rho - z, -1.0, -x,
            y, x, -self.beta,
        ]);
        m
    }

    fn rhs_jac_s(&self, u: &[f64], _rho: f64) -> DVector<f64> {
        DVector::from_vec(vec![0.0, u[0], 0.0])
    }

    fn objective_grad_u(&self, _u: &[f64], _rho: f64) -> DVector<f64> {
        DVector::from_vec(vec![0.0, 0.0, 1.0])
    }

    fn objective_grad_s(&self, _u: &[f64], _rho: f64) -> f64 {
        0.0
    }
}

/// Perturbed Arnold cat map on the unit torus,
/// `u' = M u + s g(u) mod 1` with `M = [[2, 1], [1, 1]]` and
/// `g(u) = (sin 2 pi u2, sin 2 pi u1) / (2 pi)`.
///
/// The objective is `J = cos 2 pi u1 + 0.5 sin 2 pi u2`. The Jacobian
/// `M + s Dg` has determinant at least `1 - 2|s| - s^2`, so the map stays a
/// diffeomorphism for `|s| <= 0.1`.
#[derive(Clone, Debug, Default)]
pub struct CatMap;

impl System for CatMap {
    fn name(&self) -> &str {
        "catmap"
    }

    fn kind(&self) -> SystemKind {
        SystemKind::Map
    }

    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, u: &[f64], s: f64) -> DVector<f64> {
        let g1 = (TAU * u[1]).sin() / TAU;
        let g2 = (TAU * u[0]).sin() / TAU;
        DVector::from_vec(vec![2.0 * u[0] + u[1] + s * g1, u[0] + u[1] + s * g2])
    }

    fn objective(&self, u: &[f64], _s: f64) -> f64 {
        (TAU * u[0]).cos() + 0.5 * (TAU * u[1]).sin()
    }

    fn rhs_jac_u(&self, u: &[f64], s: f64) -> DMatrix<f64> {
        let c1 = (TAU * u[0]).cos();
        let c2 = (TAU * u[1]).cos();
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0 + s * c2, 1.0 + s * c1, 1.0])
    }

    fn rhs_jac_s(&self, u: &[f64], _s: f64) -> DVector<f64> {
        DVector::from_vec(vec![(TAU * u[1]).sin() / TAU, (TAU * u[0]).sin() / TAU])
    }

    fn objective_grad_u(&self, u: &[f64], _s: f64) -> DVector<f64> {
        DVector::from_vec(vec![-TAU * (TAU * u[0]).sin(), 0.5 * TAU * (TAU * u[1]).cos()])
    }

    fn objective_grad_s(&self, _u: &[f64], _s: f64) -> f64 {
        0.0
    }

    fn wrap(&self, u: &mut [f64]) {
        for x in u {
            *x = x.rem_euclid(1.0);
            // rem_euclid rounds tiny negatives up to exactly 1.0
            if *x >= 1.0 {
                *x = 0.0;
            }
        }
    }
}

/// Constant-coefficient flow `du/dt = A (u - s c)` with objective `J = u1^2`.
///
/// The equilibrium `u* = s c` moves linearly with the parameter, so every
/// derivative of the long-time average is available in closed form.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    name: String,
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearSystem {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, c: DVector<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == c.len());
        Self { name: name.into(), a, c }
    }

    /// `A = diag(1, -2)`, `c = (1, 0.5)`.
    pub fn saddle() -> Self {
        Self::new("linear-saddle", DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0])), DVector::from_vec(vec![1.0, 0.5]))
    }

    /// `A = diag(-1, -2)`, `c = (1, 0.5)`.
    pub fn sink() -> Self {
        Self::new("linear-sink", DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0])), DVector::from_vec(vec![1.0, 0.5]))
    }

    /// Scalar `du/dt = -(u - s)`.
    pub fn decay() -> Self {
        Self::new("linear-decay", DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, 1.0))
    }

    pub fn equilibrium(&self, s: f64) -> Vec<f64> {
        (&self.c * s).as_slice().to_vec()
    }
}

impl System for LinearSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> SystemKind {
        SystemKind::Flow
    }

    fn dim(&self) -> usize {
        self.c.len()
    }

    fn rhs(&self, u: &[f64], s: f64) -> DVector<f64> {
        &self.a * (DVector::from_column_slice(u) - &self.c * s)
    }

    fn objective(&self, u: &[f64], _s: f64) -> f64 {
        u[0] * u[0]
    }

    fn rhs_jac_u(&self, _u: &[f64], _s: f64) -> DMatrix<f64> {
        self.a.clone()
    }

    fn rhs_jac_s(&self, _u: &[f64], _s: f64) -> DVector<f64> {
        -(&self.a * &self.c)
    }

    fn objective_grad_u(&self, u: &[f64], _s: f64) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        g[0] = 2.0 * u[0];
        g
    }

    fn objective_grad_s(&self, _u: &[f64], _s: f64) -> f64 {
        0.0
    }
}

/// Affine map `u' = A u + s c` with objective `J = u1`.
#[derive(Clone, Debug)]
pub struct LinearMap {
    name: String,
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearMap {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, c: DVector<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == c.len());
        Self { name: name.into(), a, c }
    }

    /// Scalar `u' = u / 2 + s`.
    pub fn contraction() -> Self {
        Self::new("linear-contraction", DMatrix::from_element(1, 1, 0.5), DVector::from_element(1, 1.0))
    }
}

impl System for LinearMap {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> SystemKind {
        SystemKind::Map
    }

    fn dim(&self) -> usize {
        self.c.len()
    }

    fn rhs(&self, u: &[f64], s: f64) -> DVector<f64> {
        &self.a * DVector::from_column_slice(u) + &self.c * s
    }

    fn objective(&self, u: &[f64], _s: f64) -> f64 {
        u[0]
    }

    fn rhs_jac_u(&self, _u: &[f64], _s: f64) -> DMatrix<f64> {
        self.a.clone()
    }

    fn rhs_jac_s(&self, _u: &[f64], _s: f64) -> DVector<f64> {
        self.c.clone()
    }

    fn objective_grad_u(&self, u: &[f64], _s: f64) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        g[0] = 1.0;
        g
    }

    fn objective_grad_s(&self, _u: &[f64], _s: f64) -> f64 {
        0.0
    }
}

type ObjFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], f64) -> DVector<f64> + Send + Sync>;

/// Replaces the objective of an existing system, keeping its dynamics.
#[derive(Clone)]
pub struct WithObjective<S> {
    inner: S,
    objective: ObjFn,
    grad_u: GradFn,
    grad_s: ObjFn,
}

impl<S: System> WithObjective<S> {
    pub fn new(
        inner: S,
        objective: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        grad_u: impl Fn(&[f64], f64) -> DVector<f64> + Send + Sync + 'static,
        grad_s: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { inner, objective: Arc::new(objective), grad_u: Arc::new(grad_u), grad_s: Arc::new(grad_s) }
    }

    /// `J(u, s) = s`.
    pub fn parameter(inner: S) -> Self {
        let m = inner.dim();
        Self::new(inner, |_, s| s, move |_, _| DVector::zeros(m), |_, _| 1.0)
    }

    /// `J(u, s) = c`.
    pub fn constant(inner: S, c: f64) -> Self {
        let m = inner.dim();
        Self::new(inner, move |_, _| c, move |_, _| DVector::zeros(m), |_, _| 0.0)
    }

    /// The inner objective multiplied by `c`.
    pub fn scaled(inner: S, c: f64) -> Self
    where
        S: Clone + 'static,
    {
        let (a, b, d) = (inner.clone(), inner.clone(), inner.clone());
        Self::new(
            inner,
            move |u, s| c * a.objective(u, s),
            move |u, s| b.objective_grad_u(u, s) * c,
            move |u, s| c * d.objective_grad_s(u, s),
        )
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: System> System for WithObjective<S> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn kind(&self) -> SystemKind {
        self.inner.kind()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rhs(&self, u: &[f64], s: f64) -> DVector<f64> {
        self.inner.rhs(u, s)
    }

    fn objective(&self, u: &[f64], s: f64) -> f64 {
        (self.objective)(u, s)
    }

    fn rhs_jac_u(&self, u: &[f64], s: f64) -> DMatrix<f64> {
        self.inner.rhs_jac_u(u, s)
    }

    fn rhs_jac_s(&self, u: &[f64], s: f64) -> DVector<f64> {
        self.inner.rhs_jac_s(u, s)
    }

    fn objective_grad_u(&self, u: &[f64], s: f64) -> DVector<f64> {
        (self.grad_u)(u, s)
    }

    fn objective_grad_s(&self, u: &[f64], s: f64) -> f64 {
        (self.grad_s)(u, s)
    }

    fn wrap(&self, u: &mut [f64]) {
        self.inner.wrap(u)
    }
}

const NAMES: [&str; 6] = ["lorenz63", "catmap", "linear-saddle", "linear-sink", "linear-decay", "linear-contraction"];

pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

/// Looks up a built-in system by its registry name.
pub fn builtin(name: &str) -> Option<Box<dyn System>> {
    Some(match name {
        "lorenz63" => Box::new(Lorenz63::default()),
        "catmap" => Box::new(CatMap),
        "linear-saddle" => Box::new(LinearSystem::saddle()),
        "linear-sink" => Box::new(LinearSystem::sink()),
        "linear-decay" => Box::new(LinearSystem::decay()),
        "linear-contraction" => Box::new(LinearMap::contraction()),
        _ => return None,
    })
}

/// Default spin-up: 100 time units for flows, 1000 steps for maps.
pub fn default_spinup(kind: SystemKind) -> f64 {
    match kind {
        SystemKind::Flow => 100.0,
        SystemKind::Map => 1000.0,
    }
}
