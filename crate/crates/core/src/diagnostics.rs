//! Evaluators for the quantities the lab reports on: nonlocal energies, the BBM
//! functional, decay fits, renormalised asymptotic errors, kernel-limit checks and
//! tail bounds.
//!
//! The estimates being checked carry no explicit constants, so most checks are relative:
//! uniformity across λ, monotonicity in t, or convergence orders.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::grid::{self, Field, Grid};
use crate::kernels::{self, DiscreteKernel, KernelSpec};
use crate::solver::{self, Model, Scheme, TrajectoryRecord};
use crate::spectral;
use crate::sum;

/// `λ² ∬ K(x-y)(u(x)-u(y))² dx dy`, through `2(∫u² - ∫u (K*u))` for a mass-one kernel.
pub fn nonlocal_energy(u: &Field, k: &DiscreteKernel, lambda: f64) -> Result<f64> {
    if k.grid() != u.grid() {
        return Err(LabError::GridMismatch);
    }
    let ku = kernels::convolve(k, u)?;
    let v = u.values();
    let w = u.grid().cell_volume();
    let s = sum::pairwise_by(v.len(), |i| v[i] * (v[i] - ku.values()[i]));
    Ok((lambda * lambda * 2.0 * w * s).max(0.0))
}

/// The same functional by direct double summation over all pairs, `O(N²)`.
/// Rows run in parallel; each row and the row totals are summed in fixed order.
pub fn nonlocal_energy_direct(u: &Field, k: &DiscreteKernel, lambda: f64) -> Result<f64> {
    if k.grid() != u.grid() {
        return Err(LabError::GridMismatch);
    }
    let g = *u.grid();
    let n = g.n_per_axis() as i64;
    let v = u.values();
    let rows: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let [ix, iy] = g.unravel(i);
            sum::pairwise_by(v.len(), |j| {
                let [jx, jy] = g.unravel(j);
                let off = [
                    (ix as i64 - jx as i64).rem_euclid(n),
                    (iy as i64 - jy as i64).rem_euclid(n),
                ];
                let d = v[i] - v[j];
                k.value_at_offset(off) * d * d
            })
        })
        .collect();
    let w = g.cell_volume();
    Ok(lambda * lambda * w * w * sum::pairwise(&rows))
}

/// `n^p ∬ ρ_n(x-y)|f(x)-f(y)|^p dx dy` with `ρ` discretised at scale `n`.
///
/// Compact kernels are summed directly over their support. A non-compact kernel is
/// only accepted for `p = 2`, where the energy identity applies.
pub fn bbm_functional(f: &Field, rho: &DiscreteKernel, n: f64, p: f64) -> Result<f64> {
    if rho.grid() != f.grid() {
        return Err(LabError::GridMismatch);
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(LabError::InvalidArgument(format!("p = {p} must be >= 1")));
    }
    if !rho.is_compact() {
        if p != 2.0 {
            return Err(LabError::NonCompactKernel);
        }
        return nonlocal_energy(f, rho, n);
    }
    let g = *f.grid();
    let m = g.n_per_axis() as i64;
    let support = rho.support();
    let v = f.values();
    let rows: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let [ix, iy] = g.unravel(i);
            sum::pairwise_by(support.len(), |s| {
                let (off, w) = support[s];
                let jx = (ix as i64 - off[0]).rem_euclid(m) as usize;
                let j = match g.dim() {
                    1 => jx,
                    _ => jx * m as usize + (iy as i64 - off[1]).rem_euclid(m) as usize,
                };
                let d = (v[i] - v[j]).abs();
                w * if p == 2.0 { d * d } else { d.powf(p) }
            })
        })
        .collect();
    let w = g.cell_volume();
    Ok(n.powf(p) * w * w * sum::pairwise(&rows))
}

/// `∫|∇f|^p` with the gradient taken spectrally.
pub fn gradient_lp_integral(f: &Field, p: f64) -> f64 {
    let grads = spectral::gradient(f);
    let w = f.grid().cell_volume();
    w * sum::pairwise_by(f.values().len(), |i| {
        let s: f64 = grads.iter().map(|g| g.values()[i] * g.values()[i]).sum();
        s.sqrt().powf(p)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletReport {
    pub p: f64,
    pub n_list: Vec<f64>,
    pub functional: Vec<f64>,
    /// `(∫ρ|z|^p) ∫|∇f|^p`, with the moment taken from each `ρ_n` on the grid.
    pub bound: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Checks `n^p ∬ρ_n|f(x)-f(y)|^p ≤ (∫ρ|z|^p)∫|∇f|^p · (1 + tol)` for every `n`.
/// A vanishing bound with a vanishing functional counts as ratio 0.
pub fn dirichlet_domination_check(
    f: &Field,
    rho: &KernelSpec,
    n_list: &[f64],
    p: f64,
    tol: f64,
) -> Result<DirichletReport> {
    let grad = gradient_lp_integral(f, p);
    let mut report = DirichletReport {
        p,
        n_list: n_list.to_vec(),
        functional: Vec::new(),
        bound: Vec::new(),
        ratios: Vec::new(),
        max_ratio: 0.0,
        pass: true,
    };
    for &n in n_list {
        let rho_n = kernels::discretize(rho, f.grid(), n)?;
        let value = bbm_functional(f, &rho_n, n, p)?;
        let bound = n.powf(p) * kernels::absolute_moment(&rho_n, p) * grad;
        let ratio = if bound > 0.0 {
            value / bound
        } else if value <= 1e-300 {
            0.0
        } else {
            f64::INFINITY
        };
        report.functional.push(value);
        report.bound.push(bound);
        report.ratios.push(ratio);
        report.max_ratio = report.max_ratio.max(ratio);
    }
    report.pass = report.max_ratio <= 1.0 + tol;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares power law `y ≈ e^{intercept} t^{slope}` over samples with
/// `t ∈ [window.0, window.1]`; at least five samples are required.
pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<FitResult> {
    const NEEDED: usize = 5;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= window.0 && **t <= window.1 && **t > 0.0 && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < NEEDED {
        return Err(LabError::InsufficientSamples {
            found: pts.len(),
            needed: NEEDED,
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy <= 1e-28 * k {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        window,
    })
}

/// Fits `log ‖u(t)‖_p` against `log t`.
pub fn decay_fit(record: &TrajectoryRecord, p: f64, window: (f64, f64)) -> Result<FitResult> {
    let series = record
        .lp_series(p)
        .ok_or_else(|| LabError::InvalidArgument(format!("L^{p} norm was not recorded")))?;
    fit_power_law(&record.times, series, window)
}

/// The decay exponent `-(d/2)(1 - 1/p)`.
pub fn predicted_decay_exponent(dim: usize, p: f64) -> f64 {
    -(dim as f64 / 2.0) * (1.0 - 1.0 / p)
}

fn check_times(u: &Field, v: &Field) -> Result<()> {
    u.check_grid(v)?;
    let (a, b) = (u.time(), v.time());
    if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
        return Err(LabError::TimeTagMismatch { left: a, right: b });
    }
    Ok(())
}

/// `t^{(d/2)(1-1/p)} ‖u(t) - U(t)‖_p`.
pub fn renormalized_error(u: &Field, profile: &Field, p: f64) -> Result<f64> {
    check_times(u, profile)?;
    let t = u.time();
    let d = u.grid().dim() as f64;
    let expo = if p.is_infinite() { d / 2.0 } else { (d / 2.0) * (1.0 - 1.0 / p) };
    Ok(t.powf(expo) * grid::lp_norm(&u.sub(profile)?, p)?)
}

/// Both sides of `‖w‖_p ≤ ‖w‖₁^{1/(2p-1)} (‖u‖_{2p} + ‖U‖_{2p})^{(2p-2)/(2p-1)}`,
/// `w = u - U`, the interpolation step that lifts `L¹` convergence to `L^p`.
pub fn interpolation_bound(u: &Field, profile: &Field, p: f64) -> Result<(f64, f64)> {
    check_times(u, profile)?;
    let w = u.sub(profile)?;
    let lhs = grid::lp_norm(&w, p)?;
    let l1 = grid::lp_norm(&w, 1.0)?;
    let s = grid::lp_norm(u, 2.0 * p)? + grid::lp_norm(profile, 2.0 * p)?;
    let rhs = l1.powf(1.0 / (2.0 * p - 1.0)) * s.powf((2.0 * p - 2.0) / (2.0 * p - 1.0));
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelLimitReport {
    pub lambdas: Vec<f64>,
    pub errors: Vec<f64>,
    /// Per-λ bound, for checks that carry one.
    pub bounds: Vec<f64>,
    /// Least-squares order `-d log err / d log λ`; `None` when some error vanishes.
    pub order: Option<f64>,
    pub pass: bool,
}

fn fitted_order(lambdas: &[f64], errors: &[f64]) -> Option<f64> {
    if lambdas.len() < 2 || errors.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let k = lambdas.len() as f64;
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

/// `err(λ) = ‖λ²(J_λ*ψ - ψ) - AΔψ‖_∞` for each λ, with the fitted order in `1/λ`.
/// Passes when the errors decrease strictly (or all vanish).
pub fn kernel_limit_check_j(j: &KernelSpec, psi: &Field, a: f64, lambdas: &[f64]) -> Result<KernelLimitReport> {
    let lap = spectral::laplacian(psi).scaled(a);
    let mut errors = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let k = kernels::discretize(j, psi.grid(), lambda)?;
        let op = kernels::nonlocal_operator(&k, psi, lambda)?;
        errors.push(op.sub(&lap)?.sup_norm());
    }
    let pass = errors.iter().all(|e| *e == 0.0) || errors.windows(2).all(|w| w[1] < w[0]);
    Ok(KernelLimitReport {
        lambdas: lambdas.to_vec(),
        order: fitted_order(lambdas, &errors),
        errors,
        bounds: Vec::new(),
        pass,
    })
}

/// Largest pointwise Frobenius norm of the spectral derivatives of total order `k`.
fn derivative_sup(psi: &Field, k: u32) -> f64 {
    let d = psi.grid().dim();
    let orders: Vec<Vec<u32>> = match d {
        1 => vec![vec![k]],
        _ => (0..=k).map(|i| vec![i, k - i]).collect(),
    };
    // multiplicity of each mixed partial among all k-fold index tuples
    let binom = |i: u32| -> f64 {
        (1..=i).fold(1.0, |acc, j| acc * (k - i + j) as f64 / j as f64)
    };
    let parts: Vec<(f64, Field)> = orders
        .iter()
        .map(|o| (binom(o[0]), spectral::derivative(psi, o)))
        .collect();
    (0..psi.values().len())
        .map(|i| {
            parts
                .iter()
                .map(|(m, f)| m * f.values()[i] * f.values()[i])
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Checks `|λ(G̃_λ*ψ - ψ) - B·∇ψ| ≤ λ^{-1}‖D²ψ‖_∞ (1 + tol) + 10h²‖D⁴ψ‖_∞` for each λ,
/// where `G̃(z) = G(-z)` and `B` is the first moment of `G`.
pub fn kernel_limit_check_g(
    g: &KernelSpec,
    psi: &Field,
    b: &[f64],
    lambdas: &[f64],
    tol: f64,
) -> Result<KernelLimitReport> {
    let grid = *psi.grid();
    if b.len() != grid.dim() {
        return Err(LabError::InvalidArgument("B needs one entry per axis".into()));
    }
    let grads = spectral::gradient(psi);
    let drift = grads
        .iter()
        .zip(b)
        .fold(Field::zeros(&grid).with_time(psi.time()), |acc, (gr, bj)| {
            acc.add_scaled(*bj, gr).expect("same grid")
        });
    let d2 = derivative_sup(psi, 2);
    let floor = 10.0 * grid.spacing().powi(2) * derivative_sup(psi, 4);
    let roundoff = 1e-12 * psi.sup_norm();
    let mirrored = g.mirrored();
    let mut errors = Vec::new();
    let mut bounds = Vec::new();
    for &lambda in lambdas {
        let k = kernels::discretize(&mirrored, &grid, lambda)?;
        let conv = kernels::convolve(&k, psi)?;
        let op = conv.sub(psi)?.scaled(lambda);
        errors.push(op.sub(&drift)?.sup_norm());
        bounds.push(d2 / lambda * (1.0 + tol) + floor + lambda * roundoff);
    }
    let pass = errors.iter().zip(&bounds).all(|(e, b)| e <= b);
    Ok(KernelLimitReport {
        lambdas: lambdas.to_vec(),
        order: fitted_order(lambdas, &errors),
        errors,
        bounds,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    /// Least admissible constant per λ.
    pub per_lambda: Vec<(f64, f64)>,
    /// Least constant valid for every sample.
    pub c: f64,
    /// Ratio of the largest to the smallest per-λ constant.
    pub spread: f64,
    /// Samples violating the inequality with the global constant.
    pub violations: usize,
    pub pass: bool,
}

/// Fits the least `C` with `∫_{|x|>2R} u_λ(t) ≤ ∫_{|x|>R} φ + C(t/R² + √t/R)` over all
/// recorded `(λ, t, R)`, and accepts when the per-λ constants agree within `max_spread`.
pub fn tail_bound_check(
    runs: &[(f64, &TrajectoryRecord)],
    phi: &Field,
    r_list: &[f64],
    t_list: &[f64],
    max_spread: f64,
) -> Result<TailReport> {
    let mut per_lambda = Vec::new();
    let mut samples = Vec::new();
    for &(lambda, rec) in runs {
        let mut c_lambda: f64 = 0.0;
        for &r in r_list {
            let series = rec.tail_series(2.0 * r).ok_or_else(|| {
                LabError::InvalidArgument(format!("tail at {} was not recorded", 2.0 * r))
            })?;
            let initial = grid::tail_mass(phi, r)?;
            for &t in t_list {
                let i = rec
                    .times
                    .iter()
                    .position(|s| (s - t).abs() <= 1e-9 * t.max(1.0))
                    .ok_or_else(|| LabError::InvalidArgument(format!("time {t} was not recorded")))?;
                let scale = t / (r * r) + t.sqrt() / r;
                let excess = series[i] - initial;
                c_lambda = c_lambda.max(excess.max(0.0) / scale);
                samples.push((excess, scale));
            }
        }
        per_lambda.push((lambda, c_lambda));
    }
    let c = per_lambda.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = per_lambda.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = if c == 0.0 { 1.0 } else if lo > 0.0 { c / lo } else { f64::INFINITY };
    let violations = samples
        .iter()
        .filter(|(excess, scale)| *excess > c * scale * (1.0 + 1e-12))
        .count();
    Ok(TailReport {
        per_lambda,
        c,
        spread,
        violations,
        pass: violations == 0 && spread <= max_spread,
    })
}

/// `‖rhs‖_{H^{-1}}`, where `rhs` is the time derivative evaluated at `u`.
pub fn dudt_hminus1(_u: &Field, rhs: &Field) -> f64 {
    grid::h_minus1_norm(rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub lambda: f64,
    pub t_window: (f64, f64),
    /// Left-rectangle time integral of `per_time` over the window.
    pub value: f64,
    pub per_time: Vec<(f64, f64)>,
}

/// Left-rectangle quadrature of recorded samples on `[t1, t2]`; the window ends must
/// be sample times.
pub fn time_integral(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<(f64, Vec<(f64, f64)>)> {
    let tol = 1e-9 * window.1.abs().max(1.0);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - tol && **t <= window.1 + tol)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 2 {
        return Err(LabError::InsufficientSamples {
            found: pts.len(),
            needed: 2,
        });
    }
    let value = pts.windows(2).map(|w| w[0].1 * (w[1].0 - w[0].0)).sum();
    Ok((value, pts))
}

/// Time-integrated nonlocal energy over `window`.
pub fn energy_report(record: &TrajectoryRecord, lambda: f64, window: (f64, f64)) -> Result<EnergyReport> {
    let (value, per_time) = time_integral(&record.times, &record.energy, window)?;
    Ok(EnergyReport {
        lambda,
        t_window: window,
        value,
        per_time,
    })
}

/// Time-integrated `‖∂_t u‖²_{H^{-1}}` over `window`, in the same report shape.
pub fn dudt_report(record: &TrajectoryRecord, lambda: f64, window: (f64, f64)) -> Result<EnergyReport> {
    let sq: Vec<f64> = record.dudt_hminus1.iter().map(|v| v * v).collect();
    let (value, per_time) = time_integral(&record.times, &sq, window)?;
    Ok(EnergyReport {
        lambda,
        t_window: window,
        value,
        per_time,
    })
}

/// Empirical temporal order of `scheme` by step doubling: integrates to `t_end` with
/// `dt`, `dt/2`, `dt/4` and returns `log₂(‖u_dt - u_{dt/2}‖ / ‖u_{dt/2} - u_{dt/4}‖)` in sup norm.
pub fn step_doubling_order(model: &Model, u0: &Field, t_end: f64, dt: f64, scheme: Scheme) -> Result<f64> {
    let run = |h: f64| -> Result<Field> {
        let steps = (t_end / h).round() as usize;
        let mut u = u0.clone();
        for _ in 0..steps {
            u = solver::step(model, &u, h, scheme)?;
        }
        Ok(u)
    };
    let a = run(dt)?;
    let b = run(dt / 2.0)?;
    let c = run(dt / 4.0)?;
    let e1 = a.sub(&b)?.sup_norm();
    let e2 = b.sub(&c)?.sup_norm();
    Ok((e1 / e2).log2())
}

/// `(∫ρ|z|²/d) ∫|∇f|²`, the `p = 2` limit of the BBM functional as `n → ∞`, with the
/// kernel moment taken on `grid` at scale one.
pub fn bbm_limit_p2(f: &Field, rho: &KernelSpec, moment_grid: &Grid) -> Result<f64> {
    let k = kernels::discretize(rho, moment_grid, 1.0)?;
    let moment = kernels::absolute_moment(&k, 2.0);
    Ok(moment / f.grid().dim() as f64 * gradient_lp_integral(f, 2.0))
}
