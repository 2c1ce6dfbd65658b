//! Self-similar asymptotic profiles `U(t, x) = t^{-d/2} f_m(x/√t)`.
//!
//! Above the critical exponent (or with `B = 0`) the profile is the heat kernel with
//! diffusivity `A`. At `q = 1 + 1/d` it is the source solution of
//! `U_t = AΔU - B·∇(|U|^{q-1}U)`, available here for `d = 1, q = 2` in closed form
//! (Cole–Hopf) and as a numerical solve of the local equation.

use std::io::Write;
use std::str::FromStr;

use statrs::function::erf::erfc;

use crate::error::{LabError, Result};
use crate::grid::{self, Field, Grid};
use crate::solver::{self, Monitor, StepperConfig};
use crate::spectral;

/// Start time of the numerical source solution.
pub const REFERENCE_T0: f64 = 1e-3;

/// `L¹` agreement required between the closed form and the numerical solve.
pub const CROSS_CHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Heat,
    BurgersSource,
    ReferenceNumeric,
}

impl FromStr for ProfileKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "heat" => Ok(ProfileKind::Heat),
            "burgers_source" => Ok(ProfileKind::BurgersSource),
            "reference_numeric" => Ok(ProfileKind::ReferenceNumeric),
            other => Err(LabError::Parse(format!("unknown profile kind `{other}`"))),
        }
    }
}

impl ProfileKind {
    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Heat => "heat",
            ProfileKind::BurgersSource => "burgers_source",
            ProfileKind::ReferenceNumeric => "reference_numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub m: f64,
    pub a: f64,
    pub b: Vec<f64>,
    pub q: f64,
    /// 1 at the critical exponent, 0 above it.
    pub alpha: u8,
    pub kind: ProfileKind,
}

impl ProfileSpec {
    /// Subcritical exponents `q < 1 + 1/d` have no profile of this form and are rejected.
    pub fn new(m: f64, a: f64, b: Vec<f64>, q: f64, kind: ProfileKind) -> Result<Self> {
        let d = b.len();
        if !(d == 1 || d == 2) {
            return Err(LabError::InvalidArgument("B must have one entry per axis (d = 1 or 2)".into()));
        }
        if !(a > 0.0 && a.is_finite()) || !m.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidArgument(format!("profile parameters m = {m}, A = {a}")));
        }
        let critical = 1.0 + 1.0 / d as f64;
        if q < critical - 1e-12 {
            return Err(LabError::UnsupportedProfile(format!(
                "q = {q} is subcritical for d = {d}"
            )));
        }
        let alpha = u8::from((q - critical).abs() < 1e-12);
        Ok(ProfileSpec {
            m,
            a,
            b,
            q,
            alpha,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// The same parameters with a different construction.
    pub fn with_kind(&self, kind: ProfileKind) -> Self {
        ProfileSpec {
            kind,
            ..self.clone()
        }
    }

    /// JSON metadata for the profile sidecar file.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "m": self.m,
            "A": self.a,
            "B": self.b,
            "q": self.q,
            "alpha": self.alpha,
            "kind": self.kind.name(),
        })
    }

    pub fn write_sidecar<W: Write>(&self, mut out: W) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.metadata())
            .map_err(|e| LabError::Parse(e.to_string()))?;
        writeln!(out, "{text}")?;
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!("profile time t = {t} must be positive")))
    }
}

/// `m (4πAt)^{-d/2} exp(-|x|²/(4At))`, tagged with time `t`.
pub fn heat_profile(spec: &ProfileSpec, t: f64, grid: &Grid) -> Result<Field> {
    check_time(t)?;
    if grid.dim() != spec.dim() {
        return Err(LabError::GridMismatch);
    }
    let s = 4.0 * spec.a * t;
    let amp = spec.m * (std::f64::consts::PI * s).powf(-(grid.dim() as f64) / 2.0);
    Ok(Field::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        amp * (-r2 / s).exp()
    })
    .with_time(t))
}

/// Closed-form source solution of `U_t = A U_xx - B (U²)_x` with mass `m`, at `(t, x)`.
///
/// With `R = Bm/A` and `ξ = x/√(4At)`,
/// `U = m (e^R - 1)/R · e^{-ξ²} / (√(4πAt) (1 + ½(e^R - 1) erfc ξ))`.
/// `R → 0` recovers the heat kernel; negative `R` uses `U_B(x) = U_{-B}(-x)`.
pub fn burgers_closed_form(m: f64, a: f64, b: f64, t: f64, x: f64) -> f64 {
    let r = b * m / a;
    if r < 0.0 {
        return burgers_closed_form(m, a, -b, t, -x);
    }
    let s = (4.0 * a * t).sqrt();
    let xi = x / s;
    let gauss = (-xi * xi).exp() / (std::f64::consts::PI.sqrt() * s);
    if r == 0.0 {
        return m * gauss;
    }
    let em1 = r.exp_m1();
    if r > 1.0 {
        // divide through by e^R - 1 to avoid overflow for large R
        m / r * gauss / (1.0 / em1 + 0.5 * erfc(xi))
    } else {
        m * (em1 / r) * gauss / (1.0 + 0.5 * em1 * erfc(xi))
    }
}

fn burgers_supported(spec: &ProfileSpec) -> Result<()> {
    if spec.dim() != 1 || (spec.q - 2.0).abs() > 1e-12 {
        return Err(LabError::UnsupportedProfile(format!(
            "source solution only for d = 1, q = 2 (got d = {}, q = {})",
            spec.dim(),
            spec.q
        )));
    }
    Ok(())
}

/// The critical-case source solution at time `t`.
///
/// `BurgersSource` evaluates the closed form. `ReferenceNumeric` starts from the
/// closed form at [`REFERENCE_T0`] and integrates the local equation to `t`, which is
/// independent of the closed form's evaluation at `t`.
pub fn burgers_source_profile(spec: &ProfileSpec, t: f64, grid: &Grid) -> Result<Field> {
    check_time(t)?;
    burgers_supported(spec)?;
    if grid.dim() != 1 {
        return Err(LabError::GridMismatch);
    }
    let (m, a, b) = (spec.m, spec.a, spec.b[0]);
    let closed = |t: f64| Field::from_fn(grid, |x| burgers_closed_form(m, a, b, t, x[0])).with_time(t);
    match spec.kind {
        ProfileKind::ReferenceNumeric if t > REFERENCE_T0 => {
            let u0 = closed(REFERENCE_T0);
            let stepper = StepperConfig::new(t).with_record_times(vec![]);
            let monitor = Monitor {
                tail_tol: f64::INFINITY,
                ..Monitor::default()
            };
            let (_, u) = solver::solve_local_reference(&u0, a, &spec.b, 2.0, &stepper, &monitor)?;
            Ok(u.with_time(t))
        }
        _ => Ok(closed(t)),
    }
}

/// `L¹` distance between the closed form and the numerical source solution at `t`;
/// fails with [`LabError::ProfileCrossCheck`] above [`CROSS_CHECK_TOL`].
pub fn cross_check_burgers(spec: &ProfileSpec, t: f64, grid: &Grid) -> Result<f64> {
    let closed = burgers_source_profile(&spec.with_kind(ProfileKind::BurgersSource), t, grid)?;
    let numeric = burgers_source_profile(&spec.with_kind(ProfileKind::ReferenceNumeric), t, grid)?;
    let distance = grid::lp_norm(&closed.sub(&numeric)?, 1.0)?;
    if distance > CROSS_CHECK_TOL {
        return Err(LabError::ProfileCrossCheck {
            distance,
            tol: CROSS_CHECK_TOL,
        });
    }
    Ok(distance)
}

/// The profile the asymptotic theory predicts for `spec`: the heat kernel when
/// `α = 0` or `B = 0`, the source solution otherwise. `spec.kind` is honoured
/// when it names the heat profile explicitly.
pub fn asymptotic_profile(spec: &ProfileSpec, t: f64, grid: &Grid) -> Result<Field> {
    let drift = spec.b.iter().any(|v| *v != 0.0);
    match spec.kind {
        ProfileKind::Heat => heat_profile(spec, t, grid),
        _ if spec.alpha == 0 || !drift => heat_profile(spec, t, grid),
        _ => burgers_source_profile(spec, t, grid),
    }
}

/// `A Δf + ½ x·∇f + (d/2) f - α B·∇(|f|^{q-1} f)`, with derivatives taken spectrally
/// and `x·∇f` formed pointwise.
pub fn profile_residual(f: &Field, spec: &ProfileSpec) -> Result<Field> {
    let g = *f.grid();
    if g.dim() != spec.dim() {
        return Err(LabError::GridMismatch);
    }
    let d = g.dim();
    let lap = spectral::laplacian(f);
    let grads = spectral::gradient(f);
    let nf = f.map(|v| solver::nonlinearity(v, spec.q));
    let ngrads = spectral::gradient(&nf);
    let alpha = spec.alpha as f64;
    let values = (0..g.len())
        .map(|i| {
            let x = g.point(i);
            let mut r = spec.a * lap.values()[i] + 0.5 * d as f64 * f.values()[i];
            for axis in 0..d {
                r += 0.5 * x[axis] * grads[axis].values()[i];
                r -= alpha * spec.b[axis] * ngrads[axis].values()[i];
            }
            r
        })
        .collect();
    Field::new(g, values, f.time())
}
