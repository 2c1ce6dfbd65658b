//! Explicit time integration of the rescaled nonlocal equation
//!
//! ```text
//! u_t = λ²(J_λ * u - u) + λ^{d(1-q)+2} (G_λ * N(u) - N(u)),   N(u) = |u|^{q-1} u,
//! ```
//!
//! and of its local limit `U_t = AΔU - B·∇N(U)`.
//!
//! `J * u - u` is bounded by `2‖u‖_∞`, so explicit Euler or RK4 with
//! `dt ~ 1 / (2λ² + 2qλ^{d(1-q)+2}‖u‖_∞^{q-1})` is stable; no implicit machinery is needed.
//! Both convolution differences have exactly zero discrete mass because the kernels are
//! renormalised on the grid, so mass is conserved to roundoff.

use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;

use crate::diagnostics;
use crate::error::{LabError, Result};
use crate::grid::{self, Field, Grid};
use crate::kernels::{self, DiscreteKernel, KernelSpec};
use crate::spectral::{self, FftPlan};

/// Relative change in `‖u‖_∞` that triggers re-evaluation of an automatic step.
const DT_REFRESH: f64 = 0.1;

/// Roundoff allowance on top of the sup-norm growth bound.
const SUP_SLACK: f64 = 1e-12;

/// Stable CFL number of classical RK4 on the imaginary axis, ≈ 2√2.
const RK4_IMAG_STABILITY: f64 = 2.8;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub q: f64,
    pub lambda: f64,
    pub j_spec: KernelSpec,
    pub g_spec: KernelSpec,
    pub dim: usize,
}

impl ModelParams {
    pub fn new(q: f64, lambda: f64, j_spec: KernelSpec, g_spec: KernelSpec) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(LabError::InvalidArgument(format!("q = {q} must exceed 1")));
        }
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(LabError::InvalidArgument(format!("λ = {lambda} must be >= 1")));
        }
        if j_spec.dim() != g_spec.dim() {
            return Err(LabError::InvalidArgument("J and G live in different dimensions".into()));
        }
        let dim = j_spec.dim();
        Ok(ModelParams {
            q,
            lambda,
            j_spec,
            g_spec,
            dim,
        })
    }

    /// Same model at another scale.
    pub fn at_scale(&self, lambda: f64) -> Result<Self> {
        ModelParams::new(self.q, lambda, self.j_spec.clone(), self.g_spec.clone())
    }

    /// `λ²`
    pub fn diffusion_prefactor(&self) -> f64 {
        self.lambda * self.lambda
    }

    /// `λ^{d(1-q)+2}`
    pub fn convection_prefactor(&self) -> f64 {
        self.lambda.powf(self.dim as f64 * (1.0 - self.q) + 2.0)
    }

    /// `q = 1 + 1/d`, to within 1e-12.
    pub fn is_critical(&self) -> bool {
        (self.q - (1.0 + 1.0 / self.dim as f64)).abs() < 1e-12
    }
}

/// `N(u) = |u|^{q-1} u`, with `N(0) = 0` for every `q > 1`.
pub fn nonlinearity(v: f64, q: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if q == 2.0 {
        v.abs() * v
    } else {
        v.abs().powf(q - 1.0) * v
    }
}

/// A model with both kernels discretised on one grid at the model's scale.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    j: DiscreteKernel,
    g: DiscreteKernel,
}

impl Model {
    pub fn new(params: ModelParams, grid: &Grid) -> Result<Self> {
        if params.dim != grid.dim() {
            return Err(LabError::GridMismatch);
        }
        let j = kernels::discretize(&params.j_spec, grid, params.lambda)?;
        let g = kernels::discretize(&params.g_spec, grid, params.lambda)?;
        Ok(Model { params, j, g })
    }

    /// Wraps pre-discretised kernels, which must share a grid and the model's scale.
    pub fn from_kernels(params: ModelParams, j: DiscreteKernel, g: DiscreteKernel) -> Result<Self> {
        if j.grid() != g.grid() || j.grid().dim() != params.dim {
            return Err(LabError::GridMismatch);
        }
        let tol = 1e-12 * params.lambda;
        if (j.scale() - params.lambda).abs() > tol || (g.scale() - params.lambda).abs() > tol {
            return Err(LabError::InvalidArgument("kernel scale differs from λ".into()));
        }
        Ok(Model { params, j, g })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        self.j.grid()
    }

    pub fn j(&self) -> &DiscreteKernel {
        &self.j
    }

    pub fn g(&self) -> &DiscreteKernel {
        &self.g
    }

    pub fn rhs(&self, u: &Field) -> Result<Field> {
        rhs(u, &self.params, &self.j, &self.g)
    }

    /// Bound on the growth rate of `‖u‖_∞` under the right-hand side.
    pub fn rate_bound(&self, sup: f64) -> f64 {
        let p = &self.params;
        2.0 * p.diffusion_prefactor() + 2.0 * p.q * p.convection_prefactor() * sup.powf(p.q - 1.0)
    }

    /// `safety / rate_bound(sup)`.
    pub fn auto_dt(&self, sup: f64, safety: f64) -> f64 {
        safety / self.rate_bound(sup)
    }
}

/// `λ²(J_λ * u - u) + λ^{d(1-q)+2}(G_λ * N(u) - N(u))`.
pub fn rhs(u: &Field, params: &ModelParams, j: &DiscreteKernel, g: &DiscreteKernel) -> Result<Field> {
    if j.grid() != u.grid() || g.grid() != u.grid() {
        return Err(LabError::GridMismatch);
    }
    let q = params.q;
    let nu = u.map(|v| nonlinearity(v, q));
    let ju = kernels::convolve(j, u)?;
    let gn = kernels::convolve(g, &nu)?;
    let (a, b) = (params.diffusion_prefactor(), params.convection_prefactor());
    let values = u
        .values()
        .iter()
        .zip(ju.values())
        .zip(nu.values().iter().zip(gn.values()))
        .map(|((&u, &ju), (&n, &gn))| a * (ju - u) + b * (gn - n))
        .collect();
    Ok(Field::from_raw(*u.grid(), values, u.time()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl FromStr for Scheme {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(LabError::Parse(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Auto,
    Fixed(f64),
}

impl FromStr for TimeStep {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(TimeStep::Auto);
        }
        match s.parse::<f64>() {
            Ok(dt) if dt > 0.0 && dt.is_finite() => Ok(TimeStep::Fixed(dt)),
            _ => Err(LabError::Parse(format!("time step `{s}` is neither `auto` nor a positive number"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: TimeStep,
    pub safety: f64,
    pub t_end: f64,
    pub record_times: Vec<f64>,
}

impl StepperConfig {
    /// RK4 with automatic steps, recording on the geometric grid from `t = 1`.
    pub fn new(t_end: f64) -> Self {
        StepperConfig {
            scheme: Scheme::Rk4,
            dt: TimeStep::Auto,
            safety: 0.5,
            t_end,
            record_times: geometric_times(1.0, t_end),
        }
    }

    pub fn with_record_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_dt(mut self, dt: TimeStep) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(LabError::InvalidArgument(format!("t_end = {}", self.t_end)));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(LabError::InvalidArgument(format!("safety {} not in (0, 1]", self.safety)));
        }
        if self.record_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidArgument("record times must increase".into()));
        }
        if self.record_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(LabError::InvalidArgument("record times must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// `t_k = t_min 2^{k/2}` up to `t_end`, with `t_end` appended if it is not hit exactly.
pub fn geometric_times(t_min: f64, t_end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(t_min > 0.0) || t_end < t_min {
        if t_end > 0.0 {
            out.push(t_end);
        }
        return out;
    }
    let mut k = 0;
    loop {
        let t = t_min * 2f64.powf(k as f64 / 2.0);
        if t > t_end * (1.0 + 1e-12) {
            break;
        }
        out.push(t);
        k += 1;
    }
    if (out.last().copied().unwrap_or(0.0) - t_end).abs() > 1e-12 * t_end {
        out.push(t_end);
    }
    out
}

/// One Euler or RK4 step of the nonlocal equation, with the sup-norm growth check.
pub fn step(model: &Model, u: &Field, dt: f64, scheme: Scheme) -> Result<Field> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LabError::InvalidArgument(format!("dt = {dt}")));
    }
    let before = u.sup_norm();
    let next = match scheme {
        Scheme::Euler => u.add_scaled(dt, &model.rhs(u)?)?,
        Scheme::Rk4 => {
            let k1 = model.rhs(u)?;
            let k2 = model.rhs(&u.add_scaled(0.5 * dt, &k1)?)?;
            let k3 = model.rhs(&u.add_scaled(0.5 * dt, &k2)?)?;
            let k4 = model.rhs(&u.add_scaled(dt, &k3)?)?;
            rk4_combine(u, dt, &k1, &k2, &k3, &k4)
        }
    }
    .with_time(u.time() + dt);
    check_growth(&next, before, dt * model.rate_bound(before))?;
    Ok(next)
}

fn rk4_combine(u: &Field, dt: f64, k1: &Field, k2: &Field, k3: &Field, k4: &Field) -> Field {
    let c = dt / 6.0;
    let values = (0..u.values().len())
        .map(|i| {
            u.values()[i]
                + c * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i])
        })
        .collect();
    Field::from_raw(*u.grid(), values, u.time())
}

fn check_growth(next: &Field, before: f64, rate_dt: f64) -> Result<()> {
    let after = next.sup_norm();
    let allowed = before * (1.0 + 10.0 * rate_dt) + SUP_SLACK * before;
    if !next.is_finite() || after > allowed {
        return Err(LabError::StabilityViolation {
            time: next.time(),
            before,
            after,
        });
    }
    Ok(())
}

/// What [`evolve`] records at every record time, plus the tail overflow guard.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    /// Extra `L^p` norms beyond `L¹`, `L²` and `L^∞`.
    pub p_list: Vec<f64>,
    pub tail_radii: Vec<f64>,
    /// Largest `∫_{|x| > L/2} |u|` tolerated before reporting a domain overflow.
    pub tail_tol: f64,
    /// Keep a copy of the field at every record time.
    pub keep_snapshots: bool,
}

impl Default for Monitor {
    fn default() -> Self {
        Monitor {
            p_list: Vec::new(),
            tail_radii: Vec::new(),
            tail_tol: 1e-6,
            keep_snapshots: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub linf: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub lp_norms: Vec<(f64, Vec<f64>)>,
    /// Dissipation `λ² ∬ J_λ(x-y)(u(x)-u(y))²` (or `2A∫|∇U|²` for the local equation).
    pub energy: Vec<f64>,
    pub tails: Vec<(f64, Vec<f64>)>,
    /// `‖∂_t u‖_{H^{-1}}`.
    pub dudt_hminus1: Vec<f64>,
    pub snapshots: Vec<Field>,
}

impl TrajectoryRecord {
    fn new(monitor: &Monitor) -> Self {
        TrajectoryRecord {
            lp_norms: monitor.p_list.iter().map(|&p| (p, Vec::new())).collect(),
            tails: monitor.tail_radii.iter().map(|&r| (r, Vec::new())).collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The recorded `L^p` series, if `p` was monitored (1, 2 and ∞ always are).
    pub fn lp_series(&self, p: f64) -> Option<&[f64]> {
        if p == 1.0 {
            Some(&self.l1)
        } else if p == 2.0 {
            Some(&self.l2)
        } else if p == f64::INFINITY {
            Some(&self.linf)
        } else {
            self.lp_norms
                .iter()
                .find(|(q, _)| (q - p).abs() < 1e-12)
                .map(|(_, v)| v.as_slice())
        }
    }

    pub fn tail_series(&self, radius: f64) -> Option<&[f64]> {
        self.tails
            .iter()
            .find(|(r, _)| (r - radius).abs() < 1e-12 * radius.max(1.0))
            .map(|(_, v)| v.as_slice())
    }

    /// Snapshot recorded at time `t`, if snapshots were kept.
    pub fn snapshot_at(&self, t: f64) -> Option<&Field> {
        self.snapshots
            .iter()
            .find(|f| (f.time() - t).abs() <= 1e-9 * t.max(1.0))
    }

    fn push(&mut self, u: &Field, energy: f64, dudt: f64, keep: bool) -> Result<()> {
        self.times.push(u.time());
        self.mass.push(grid::mass(u));
        self.linf.push(u.sup_norm());
        self.l1.push(grid::lp_norm(u, 1.0)?);
        self.l2.push(grid::lp_norm(u, 2.0)?);
        for (p, series) in self.lp_norms.iter_mut() {
            series.push(grid::lp_norm(u, *p)?);
        }
        self.energy.push(energy);
        for (r, series) in self.tails.iter_mut() {
            series.push(grid::tail_mass(u, *r)?);
        }
        self.dudt_hminus1.push(dudt);
        if keep {
            self.snapshots.push(u.clone());
        }
        Ok(())
    }

    /// CSV with columns `t, mass, linf, l1, l2, lp_<p>…, energy, tail_<R>…, dudt_hm1`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["t", "mass", "linf", "l1", "l2"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        header.extend(self.lp_norms.iter().map(|(p, _)| format!("lp_{p}")));
        header.push("energy".into());
        header.extend(self.tails.iter().map(|(r, _)| format!("tail_{r}")));
        header.push("dudt_hm1".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i], self.mass[i], self.linf[i], self.l1[i], self.l2[i]];
            row.extend(self.lp_norms.iter().map(|(_, v)| v[i]));
            row.push(self.energy[i]);
            row.extend(self.tails.iter().map(|(_, v)| v[i]));
            row.push(self.dudt_hminus1[i]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// The pieces [`integrate`] needs from a particular equation.
trait Dynamics {
    fn grid(&self) -> &Grid;
    /// Largest stable step for the current state.
    fn auto_dt(&self, u: &Field, safety: f64) -> f64;
    fn advance(&self, u: &Field, dt: f64, scheme: Scheme) -> Result<Field>;
    /// `(energy, ‖u_t‖_{H^{-1}})` at `u`.
    fn observe(&self, u: &Field) -> Result<(f64, f64)>;
}

impl Dynamics for Model {
    fn grid(&self) -> &Grid {
        Model::grid(self)
    }

    fn auto_dt(&self, u: &Field, safety: f64) -> f64 {
        Model::auto_dt(self, u.sup_norm(), safety)
    }

    fn advance(&self, u: &Field, dt: f64, scheme: Scheme) -> Result<Field> {
        step(self, u, dt, scheme)
    }

    fn observe(&self, u: &Field) -> Result<(f64, f64)> {
        let energy = diagnostics::nonlocal_energy(u, &self.j, self.params.lambda)?;
        let dudt = diagnostics::dudt_hminus1(u, &self.rhs(u)?);
        Ok((energy, dudt))
    }
}

fn integrate<D: Dynamics>(
    dynamics: &D,
    u0: &Field,
    stepper: &StepperConfig,
    monitor: &Monitor,
) -> Result<(TrajectoryRecord, Field)> {
    stepper.validate()?;
    let grid = *dynamics.grid();
    if u0.grid() != &grid {
        return Err(LabError::GridMismatch);
    }
    if !u0.is_finite() {
        return Err(LabError::InvalidField("initial data is not finite".into()));
    }
    let half = grid.half_width();
    if let Some(r) = monitor.tail_radii.iter().find(|r| !(**r > 0.0 && **r < half)) {
        return Err(LabError::InvalidArgument(format!("tail radius {r} outside (0, {half})")));
    }
    let mut record = TrajectoryRecord::new(monitor);
    let start = u0.time();
    let mut u = u0.clone();
    let t_end = stepper.t_end;
    let eps = 1e-12 * t_end.max(1.0);

    let mut targets: Vec<f64> = stepper
        .record_times
        .iter()
        .copied()
        .filter(|&t| t >= start - eps && t <= t_end + eps)
        .collect();
    if targets.last().is_none_or(|&t| t < t_end - eps) && t_end > start + eps {
        targets.push(t_end);
    }
    let recorded = |t: f64| stepper.record_times.iter().any(|&r| (r - t).abs() <= eps);

    let mut dt_sup = f64::NAN;
    let mut dt_auto = 0.0;
    for target in targets {
        while u.time() < target - eps {
            let dt = match stepper.dt {
                TimeStep::Fixed(dt) => dt,
                TimeStep::Auto => {
                    let sup = u.sup_norm();
                    if !(dt_sup.is_finite() && (sup - dt_sup).abs() <= DT_REFRESH * dt_sup) {
                        dt_sup = sup;
                        dt_auto = dynamics.auto_dt(&u, stepper.safety);
                    }
                    dt_auto
                }
            };
            let remaining = target - u.time();
            let (h, land) = if dt >= remaining - eps { (remaining, true) } else { (dt, false) };
            u = dynamics.advance(&u, h, stepper.scheme)?;
            if land {
                u = u.with_time(target);
            }
            let tail = grid::abs_tail_mass(&u, 0.5 * half);
            if !(tail < monitor.tail_tol) {
                return Err(LabError::DomainOverflow {
                    time: u.time(),
                    radius: 0.5 * half,
                    tail,
                    tol: monitor.tail_tol,
                });
            }
        }
        if recorded(target) {
            let (energy, dudt) = dynamics.observe(&u)?;
            record.push(&u, energy, dudt, monitor.keep_snapshots)?;
        }
    }
    Ok((record, u))
}

/// Integrates the nonlocal equation from `u0.time()` to `stepper.t_end`, recording at
/// every record time in that range.
pub fn evolve(
    u0: &Field,
    model: &Model,
    stepper: &StepperConfig,
    monitor: &Monitor,
) -> Result<(TrajectoryRecord, Field)> {
    integrate(model, u0, stepper, monitor)
}

/// The local limit `U_t = AΔU - B·∇N(U)`, stepped by integrating-factor RK4 in
/// Fourier space: diffusion is integrated exactly and RK4 only sees the convection.
struct LocalModel {
    grid: Grid,
    a: f64,
    b: Vec<f64>,
    q: f64,
    plan: FftPlan,
    ksq: Vec<f64>,
    /// `-i B·κ` per bin, zeroed at the Nyquist bins.
    convect: Vec<Complex64>,
    kappa_max: f64,
}

impl LocalModel {
    fn new(grid: &Grid, a: f64, b: &[f64], q: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(LabError::InvalidArgument(format!("diffusivity A = {a} must be positive")));
        }
        if b.len() != grid.dim() || b.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidArgument("B must have one finite entry per axis".into()));
        }
        if !(q > 1.0 && q.is_finite()) {
            return Err(LabError::InvalidArgument(format!("q = {q} must exceed 1")));
        }
        let n = grid.n_per_axis();
        let kappa = spectral::wavenumbers(grid);
        let sym = |k: usize| if k == n / 2 { 0.0 } else { kappa[k] };
        let convect = match grid.dim() {
            1 => (0..n).map(|k| Complex64::new(0.0, -b[0] * sym(k))).collect(),
            _ => {
                let mut out = Vec::with_capacity(n * n);
                for kx in 0..n {
                    for ky in 0..n {
                        out.push(Complex64::new(0.0, -(b[0] * sym(kx) + b[1] * sym(ky))));
                    }
                }
                out
            }
        };
        Ok(LocalModel {
            grid: *grid,
            a,
            b: b.to_vec(),
            q,
            plan: FftPlan::new(grid),
            ksq: spectral::wavenumber_sq(grid),
            convect,
            kappa_max: std::f64::consts::PI / grid.spacing(),
        })
    }

    fn b_norm(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn convection_rate(&self, sup: f64) -> f64 {
        self.q * self.b_norm() * sup.powf(self.q - 1.0) * self.kappa_max
    }

    /// Spectrum of `-B·∇N(u)` for the state with spectrum `vh`.
    fn convection_hat(&self, vh: &[Complex64]) -> Vec<Complex64> {
        let u = self.plan.inverse_real(vh.to_vec());
        let nu: Vec<f64> = u.iter().map(|&v| nonlinearity(v, self.q)).collect();
        let mut s = self.plan.forward(&nu);
        for (x, c) in s.iter_mut().zip(&self.convect) {
            *x *= c;
        }
        s
    }

    fn rhs(&self, u: &Field) -> Field {
        let vh = self.plan.forward(u.values());
        let mut out = self.convection_hat(&vh);
        for ((o, v), k2) in out.iter_mut().zip(&vh).zip(&self.ksq) {
            *o -= self.a * k2 * v;
        }
        Field::from_raw(self.grid, self.plan.inverse_real(out), u.time())
    }
}

impl Dynamics for LocalModel {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn auto_dt(&self, u: &Field, safety: f64) -> f64 {
        let rate = self.convection_rate(u.sup_norm());
        if rate > 0.0 {
            safety * RK4_IMAG_STABILITY / rate
        } else {
            f64::INFINITY
        }
    }

    fn advance(&self, u: &Field, dt: f64, scheme: Scheme) -> Result<Field> {
        let before = u.sup_norm();
        let vh = self.plan.forward(u.values());
        let e: Vec<f64> = self.ksq.iter().map(|k2| (-self.a * k2 * dt).exp()).collect();
        let out = match scheme {
            Scheme::Euler => {
                let a = self.convection_hat(&vh);
                (0..vh.len()).map(|i| e[i] * (vh[i] + dt * a[i])).collect()
            }
            Scheme::Rk4 => {
                let e2: Vec<f64> = self.ksq.iter().map(|k2| (-0.5 * self.a * k2 * dt).exp()).collect();
                let a = self.convection_hat(&vh);
                let sb: Vec<Complex64> = (0..vh.len()).map(|i| e2[i] * (vh[i] + 0.5 * dt * a[i])).collect();
                let b = self.convection_hat(&sb);
                let sc: Vec<Complex64> = (0..vh.len()).map(|i| e2[i] * vh[i] + 0.5 * dt * b[i]).collect();
                let c = self.convection_hat(&sc);
                let sd: Vec<Complex64> = (0..vh.len()).map(|i| e[i] * vh[i] + dt * e2[i] * c[i]).collect();
                let d = self.convection_hat(&sd);
                (0..vh.len())
                    .map(|i| {
                        e[i] * vh[i]
                            + dt / 6.0 * (e[i] * a[i] + 2.0 * e2[i] * (b[i] + c[i]) + d[i])
                    })
                    .collect()
            }
        };
        let next = Field::from_raw(self.grid, self.plan.inverse_real(out), u.time() + dt);
        check_growth(&next, before, dt * self.convection_rate(before))?;
        Ok(next)
    }

    fn observe(&self, u: &Field) -> Result<(f64, f64)> {
        let grads = spectral::gradient(u);
        let w = self.grid.cell_volume();
        let dirichlet: f64 = grads
            .iter()
            .map(|g| w * g.values().iter().map(|v| v * v).sum::<f64>())
            .sum();
        let dudt = diagnostics::dudt_hminus1(u, &self.rhs(u));
        Ok((2.0 * self.a * dirichlet, dudt))
    }
}

/// Integrates the local limit equation `U_t = AΔU - B·∇(|U|^{q-1}U)` with the same
/// recording contract as [`evolve`]. The energy column holds `2A∫|∇U|²`, the limit
/// of the nonlocal dissipation.
///
/// With `B = 0` the automatic step covers each record interval in one exact heat step.
pub fn solve_local_reference(
    u0: &Field,
    a: f64,
    b: &[f64],
    q: f64,
    stepper: &StepperConfig,
    monitor: &Monitor,
) -> Result<(TrajectoryRecord, Field)> {
    let model = LocalModel::new(u0.grid(), a, b, q)?;
    integrate(&model, u0, stepper, monitor)
}

/// Initial data menu.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// Centred normal density with the given variance.
    Gaussian { variance: f64 },
    /// `0.7 bump(x - 2) + 0.3 bump(x + 3)` along the first axis, with the unit bump
    /// `exp(-1/(1-|x|²))`.
    TwoBump,
}

impl FromStr for InitialData {
    type Err = LabError;

    /// `gaussian`, `gaussian:<variance>` or `two_bump`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_matches('"');
        let mut parts = s.splitn(2, ':');
        match (parts.next(), parts.next()) {
            (Some("gaussian"), None) => Ok(InitialData::Gaussian { variance: 1.0 }),
            (Some("gaussian"), Some(v)) => match v.trim().parse::<f64>() {
                Ok(variance) if variance > 0.0 && variance.is_finite() => {
                    Ok(InitialData::Gaussian { variance })
                }
                _ => Err(LabError::Parse(format!("gaussian variance `{v}`"))),
            },
            (Some("two_bump"), None) => Ok(InitialData::TwoBump),
            _ => Err(LabError::Parse(format!("unknown initial data `{s}`"))),
        }
    }
}

impl std::fmt::Display for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialData::Gaussian { variance } => write!(f, "gaussian:{variance}"),
            InitialData::TwoBump => write!(f, "two_bump"),
        }
    }
}

impl InitialData {
    fn profile(&self, x: &[f64]) -> f64 {
        match self {
            InitialData::Gaussian { variance } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (-r2 / (2.0 * variance)).exp()
            }
            InitialData::TwoBump => {
                let rest: f64 = x[1..].iter().map(|v| v * v).sum();
                let bump = |c: f64| {
                    let s2 = (x[0] - c).powi(2) + rest;
                    if s2 < 1.0 {
                        (-1.0 / (1.0 - s2)).exp()
                    } else {
                        0.0
                    }
                };
                0.7 * bump(2.0) + 0.3 * bump(-3.0)
            }
        }
    }

    /// Samples the datum with discrete mass exactly `mass`, at time 0.
    pub fn sample(&self, grid: &Grid, mass: f64) -> Result<Field> {
        let raw = Field::from_fn(grid, |x| self.profile(x));
        let m = grid::mass(&raw);
        if !(m > 0.0) {
            return Err(LabError::InvalidArgument(format!("{self} has no mass on this grid")));
        }
        Ok(raw.scaled(mass / m))
    }

    /// The rescaled datum `φ_λ(x) = λ^d φ(λx)`, sampled with discrete mass `mass`.
    pub fn sample_rescaled(&self, grid: &Grid, mass: f64, lambda: f64) -> Result<Field> {
        let raw = Field::from_fn(grid, |x| {
            let y: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            self.profile(&y)
        });
        let m = grid::mass(&raw);
        if !(m > 0.0) {
            return Err(LabError::InvalidArgument(format!("{self} has no mass on this grid")));
        }
        Ok(raw.scaled(mass / m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::mass;

    fn line(n: usize, l: f64) -> Grid {
        Grid::new(1, n, l).unwrap()
    }

    fn model(grid: &Grid, q: f64, lambda: f64) -> Model {
        let params = ModelParams::new(
            q,
            lambda,
            KernelSpec::gaussian(1.0, 1).unwrap(),
            KernelSpec::shifted_bump(1.0, 1.0, 1).unwrap(),
        )
        .unwrap();
        Model::new(params, grid).unwrap()
    }

    #[test]
    fn prefactors() {
        let j = KernelSpec::gaussian(1.0, 1).unwrap();
        let p = ModelParams::new(3.0, 2.0, j.clone(), j.clone()).unwrap();
        assert_eq!(p.diffusion_prefactor(), 4.0);
        assert!((p.convection_prefactor() - 1.0).abs() < 1e-15);
        assert!(ModelParams::new(2.0, 1.0, j.clone(), j.clone()).unwrap().is_critical());
        assert!(ModelParams::new(1.0, 1.0, j.clone(), j.clone()).is_err());
        assert!(ModelParams::new(2.0, 0.5, j.clone(), j).is_err());
    }

    #[test]
    fn rhs_vanishes_on_constants() {
        let g = line(256, 10.0);
        let m = model(&g, 2.0, 1.0);
        assert!(m.rhs(&Field::zeros(&g)).unwrap().sup_norm() == 0.0);
        assert!(m.rhs(&Field::constant(&g, 0.7)).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn rhs_matches_direct_summation() {
        let g = line(128, 8.0);
        let m = model(&g, 2.0, 1.0);
        let u = InitialData::TwoBump.sample(&g, 1.0).unwrap();
        let fast = m.rhs(&u).unwrap();
        let nu = u.map(|v| nonlinearity(v, 2.0));
        let ju = kernels::convolve_direct(m.j(), &u).unwrap();
        let gn = kernels::convolve_direct(m.g(), &nu).unwrap();
        for i in 0..g.len() {
            let slow = (ju.values()[i] - u.values()[i]) + (gn.values()[i] - nu.values()[i]);
            assert!((fast.values()[i] - slow).abs() < 1e-12);
        }
        assert!(mass(&fast).abs() < 1e-14);
    }

    #[test]
    fn step_preserves_mass_and_constants() {
        let g = line(512, 20.0);
        let m = model(&g, 2.0, 1.0);
        let u = InitialData::Gaussian { variance: 1.0 }.sample(&g, 1.0).unwrap();
        let dt = m.auto_dt(u.sup_norm(), 0.5);
        for scheme in [Scheme::Euler, Scheme::Rk4] {
            let v = step(&m, &u, dt, scheme).unwrap();
            assert!((mass(&v) - 1.0).abs() < 1e-13);
            assert!((v.time() - dt).abs() < 1e-15);
        }
        let c = Field::constant(&g, 0.3);
        let v = step(&m, &c, dt, Scheme::Rk4).unwrap();
        assert!(v.values().iter().all(|x| (x - 0.3).abs() < 1e-14));
        let z = step(&m, &Field::zeros(&g), dt, Scheme::Rk4).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn oversized_step_is_flagged() {
        let g = line(256, 10.0);
        let m = model(&g, 2.0, 4.0);
        let u = InitialData::Gaussian { variance: 0.5 }.sample(&g, 1.0).unwrap();
        let err = (0..50)
            .try_fold(u, |u, _| step(&m, &u, 2.0, Scheme::Euler))
            .unwrap_err();
        assert!(matches!(err, LabError::StabilityViolation { .. }));
    }

    #[test]
    fn geometric_record_times() {
        let t = geometric_times(1.0, 4.0);
        assert_eq!(t.len(), 5);
        assert!((t[1] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(*t.last().unwrap(), 4.0);
        assert_eq!(geometric_times(1.0, 3.0).last(), Some(&3.0));
    }

    #[test]
    fn evolve_with_no_time_returns_input() {
        let g = line(256, 10.0);
        let m = model(&g, 2.0, 1.0);
        let u = InitialData::Gaussian { variance: 1.0 }.sample(&g, 1.0).unwrap();
        let stepper = StepperConfig::new(0.0).with_record_times(vec![]);
        let (rec, out) = evolve(&u, &m, &stepper, &Monitor::default()).unwrap();
        assert!(rec.is_empty());
        assert_eq!(out, u);
    }

    #[test]
    fn evolve_conserves_mass_and_contracts() {
        let g = line(1024, 60.0);
        let m = model(&g, 2.0, 1.0);
        let u = InitialData::TwoBump.sample(&g, 1.0).unwrap();
        let stepper = StepperConfig::new(16.0);
        let monitor = Monitor {
            p_list: vec![3.0],
            tail_radii: vec![5.0],
            ..Monitor::default()
        };
        let (rec, out) = evolve(&u, &m, &stepper, &monitor).unwrap();
        assert_eq!(rec.times, geometric_times(1.0, 16.0));
        assert_eq!(out.time(), 16.0);
        for w in rec.linf.windows(2).chain(rec.l1.windows(2)) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for m in &rec.mass {
            assert!((m - 1.0).abs() < 1e-12);
        }
        assert!(out.min_value() > -1e-12);
        assert_eq!(rec.lp_series(3.0).unwrap().len(), rec.len());
        assert!(rec.energy.iter().all(|e| *e >= 0.0));
        let mut csv = Vec::new();
        rec.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("t,mass,linf,l1,l2,lp_3,energy,tail_5,dudt_hm1\n"));
        assert_eq!(text.lines().count(), rec.len() + 1);
    }

    #[test]
    fn tail_monitor_trips() {
        let g = line(256, 10.0);
        let m = model(&g, 2.0, 1.0);
        let u = InitialData::Gaussian { variance: 1.0 }.sample(&g, 1.0).unwrap();
        let err = evolve(&u, &m, &StepperConfig::new(50.0), &Monitor::default()).unwrap_err();
        assert!(matches!(err, LabError::DomainOverflow { .. }));
    }

    #[test]
    fn local_heat_matches_gaussian_spreading() {
        let g = line(1024, 20.0);
        let normal = |x: f64, var: f64| (2.0 * std::f64::consts::PI * var).powf(-0.5) * (-x * x / (2.0 * var)).exp();
        let u0 = Field::from_fn(&g, |x| normal(x[0], 0.5));
        let stepper = StepperConfig::new(2.0).with_record_times(vec![1.0, 2.0]);
        let (rec, u) = solve_local_reference(&u0, 0.7, &[0.0], 2.0, &stepper, &Monitor::default()).unwrap();
        assert_eq!(rec.len(), 2);
        for (i, v) in u.values().iter().enumerate() {
            assert!((v - normal(g.coord(i), 0.5 + 2.0 * 0.7 * 2.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn local_burgers_conserves_mass() {
        let g = line(1024, 20.0);
        let u0 = InitialData::Gaussian { variance: 0.5 }.sample(&g, 1.0).unwrap();
        let (_, u) = solve_local_reference(&u0, 1.0, &[1.0], 2.0, &StepperConfig::new(1.0), &Monitor::default()).unwrap();
        assert!((mass(&u) - 1.0).abs() < 1e-10);
        assert!(u.min_value() > -1e-10);
        let (_, z) = solve_local_reference(&Field::zeros(&g), 1.0, &[1.0], 2.0, &StepperConfig::new(1.0), &Monitor::default()).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn initial_data_parsing() {
        assert_eq!("gaussian:0.25".parse::<InitialData>().unwrap(), InitialData::Gaussian { variance: 0.25 });
        assert_eq!("two_bump".parse::<InitialData>().unwrap(), InitialData::TwoBump);
        assert!("gaussian:-1".parse::<InitialData>().is_err());
        assert!("delta".parse::<InitialData>().is_err());
        let g = line(256, 10.0);
        let f = InitialData::TwoBump.sample(&g, 2.5).unwrap();
        assert!((mass(&f) - 2.5).abs() < 1e-13);
    }
}
