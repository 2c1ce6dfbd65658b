//! Kernel families, their mass-one discretisations and periodic convolution.
//!
//! A [`KernelSpec`] is an analytic, mass-one density. [`discretize`] samples it at
//! scale λ, `K_λ(x) = λ^d K(λ x)`, and renormalises so that the discrete mass is one.
//! That renormalisation is what makes `J * u - u` exactly mean-free on the grid.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::grid::{Field, Grid};
use crate::spectral::FftPlan;
use crate::sum;

/// Minimum number of grid spacings the effective width of a kernel must cover.
pub const MIN_RESOLUTION_POINTS: f64 = 4.0;

/// Total point count at which [`convolve`] switches from direct summation to the DFT.
pub const SPECTRAL_THRESHOLD: usize = 256;

/// Moments below this magnitude count as zero in [`check_symmetry`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// Normal density with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// `C exp(-1 / (1 - |z/r|²))` on `|z| < r`.
    Bump { radius: f64 },
    /// A bump translated by `shift` along the first axis.
    ShiftedBump { radius: f64, shift: f64 },
    /// Piecewise-linear one-dimensional profile through `(z, value)` samples.
    Table { samples: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    dim: usize,
}

fn bump_profile(s2: f64) -> f64 {
    if s2 < 1.0 {
        (-1.0 / (1.0 - s2)).exp()
    } else {
        0.0
    }
}

/// `∫_{|s|<1} exp(-1/(1-|s|²)) ds` in dimension 1 and 2.
///
/// The integrand is flat to all orders at the boundary, so the trapezoid rule
/// converges faster than any power of the step.
fn bump_normalizer(dim: usize) -> f64 {
    static C1: OnceLock<f64> = OnceLock::new();
    static C2: OnceLock<f64> = OnceLock::new();
    const PANELS: usize = 20_000;
    let h = 1.0 / PANELS as f64;
    match dim {
        1 => *C1.get_or_init(|| {
            let half = sum::pairwise_by(PANELS, |i| bump_profile((i as f64 * h).powi(2)));
            h * (2.0 * half - bump_profile(0.0))
        }),
        _ => *C2.get_or_init(|| {
            let radial = h * sum::pairwise_by(PANELS, |i| {
                let s = i as f64 * h;
                s * bump_profile(s * s)
            });
            2.0 * std::f64::consts::PI * radial
        }),
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(LabError::InvalidArgument(format!("kernel dimension {dim}")));
        }
        match &family {
            KernelFamily::Gaussian { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                return Err(LabError::InvalidArgument(format!("gaussian sigma {sigma}")))
            }
            KernelFamily::Bump { radius } | KernelFamily::ShiftedBump { radius, .. }
                if !(*radius > 0.0 && radius.is_finite()) =>
            {
                return Err(LabError::InvalidArgument(format!("bump radius {radius}")))
            }
            KernelFamily::ShiftedBump { shift, .. } if !shift.is_finite() => {
                return Err(LabError::InvalidArgument(format!("bump shift {shift}")))
            }
            KernelFamily::Table { samples } => {
                if dim != 1 {
                    return Err(LabError::InvalidArgument(
                        "table kernels are one-dimensional".into(),
                    ));
                }
                if samples.len() < 2 {
                    return Err(LabError::InvalidArgument("table needs at least two samples".into()));
                }
                if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(LabError::InvalidArgument("table abscissae must increase".into()));
                }
                if samples.iter().any(|&(z, v)| !z.is_finite() || !(v >= 0.0) || !v.is_finite()) {
                    return Err(LabError::InvalidArgument(
                        "table values must be finite and nonnegative".into(),
                    ));
                }
                if table_mass(samples) <= 0.0 {
                    return Err(LabError::InvalidArgument("table has zero mass".into()));
                }
            }
            _ => {}
        }
        Ok(KernelSpec { family, dim })
    }

    pub fn gaussian(sigma: f64, dim: usize) -> Result<Self> {
        KernelSpec::new(KernelFamily::Gaussian { sigma }, dim)
    }

    pub fn bump(radius: f64, dim: usize) -> Result<Self> {
        KernelSpec::new(KernelFamily::Bump { radius }, dim)
    }

    pub fn shifted_bump(radius: f64, shift: f64, dim: usize) -> Result<Self> {
        KernelSpec::new(KernelFamily::ShiftedBump { radius, shift }, dim)
    }

    pub fn table(samples: Vec<(f64, f64)>) -> Result<Self> {
        KernelSpec::new(KernelFamily::Table { samples }, 1)
    }

    /// Loads a table kernel from a two-column `z,value` CSV file. A non-numeric
    /// first line is treated as a header.
    pub fn table_from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (a, b) = match (cols.next(), cols.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(LabError::Parse(format!("{}:{}: expected two columns", path.display(), lineno + 1))),
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(z), Ok(v)) => samples.push((z, v)),
                _ if lineno == 0 => continue,
                _ => return Err(LabError::Parse(format!("{}:{}: not a number", path.display(), lineno + 1))),
            }
        }
        KernelSpec::table(samples)
    }

    /// Parses `gaussian:σ`, `bump:r`, `shifted_bump:r:z0` or `table:<csv path>`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let text = text.trim().trim_matches('"');
        let mut parts = text.split(':');
        let name = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| LabError::Parse(format!("kernel `{text}`: `{s}` is not a number")))
        };
        match (name, rest.as_slice()) {
            ("gaussian", [s]) => KernelSpec::gaussian(num(s)?, dim),
            ("bump", [r]) => KernelSpec::bump(num(r)?, dim),
            ("shifted_bump", [r, z0]) => KernelSpec::shifted_bump(num(r)?, num(z0)?, dim),
            ("table", [path]) => {
                if dim != 1 {
                    return Err(LabError::InvalidArgument("table kernels are one-dimensional".into()));
                }
                KernelSpec::table_from_csv(Path::new(path))
            }
            _ => Err(LabError::Parse(format!("unrecognised kernel `{text}`"))),
        }
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mass-one density at `z` (a slice of length `dim`).
    pub fn eval(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        match &self.family {
            KernelFamily::Gaussian { sigma } => {
                let var = sigma * sigma;
                (2.0 * std::f64::consts::PI * var).powf(-(self.dim as f64) / 2.0)
                    * (-r2 / (2.0 * var)).exp()
            }
            KernelFamily::Bump { radius } => {
                bump_profile(r2 / (radius * radius))
                    / (bump_normalizer(self.dim) * radius.powi(self.dim as i32))
            }
            KernelFamily::ShiftedBump { radius, shift } => {
                let dx = z[0] - shift;
                let r2 = r2 - z[0] * z[0] + dx * dx;
                bump_profile(r2 / (radius * radius))
                    / (bump_normalizer(self.dim) * radius.powi(self.dim as i32))
            }
            KernelFamily::Table { samples } => table_eval(samples, z[0]) / table_mass(samples),
        }
    }

    /// Diameter of the region carrying the kernel's mass at scale one.
    pub fn effective_width(&self) -> f64 {
        match &self.family {
            KernelFamily::Gaussian { sigma } => 2.0 * sigma,
            KernelFamily::Bump { radius } | KernelFamily::ShiftedBump { radius, .. } => 2.0 * radius,
            KernelFamily::Table { samples } => {
                // span of the interpolant's support
                let first = samples.iter().position(|s| s.1 > 0.0).unwrap_or(0);
                let last = samples.iter().rposition(|s| s.1 > 0.0).unwrap_or(0);
                let lo = first.saturating_sub(1);
                let hi = (last + 1).min(samples.len() - 1);
                samples[hi].0 - samples[lo].0
            }
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self.family, KernelFamily::Gaussian { .. })
    }

    /// The reflected kernel `K̃(z) = K(-z)`.
    pub fn mirrored(&self) -> KernelSpec {
        let family = match &self.family {
            KernelFamily::ShiftedBump { radius, shift } => KernelFamily::ShiftedBump {
                radius: *radius,
                shift: -shift,
            },
            KernelFamily::Table { samples } => KernelFamily::Table {
                samples: samples.iter().rev().map(|&(z, v)| (-z, v)).collect(),
            },
            other => other.clone(),
        };
        KernelSpec {
            family,
            dim: self.dim,
        }
    }
}

fn table_eval(samples: &[(f64, f64)], z: f64) -> f64 {
    let first = samples[0];
    let last = samples[samples.len() - 1];
    if z < first.0 || z > last.0 {
        return 0.0;
    }
    let k = samples.partition_point(|s| s.0 <= z);
    if k == samples.len() {
        return last.1;
    }
    let (z0, v0) = samples[k - 1];
    let (z1, v1) = samples[k];
    v0 + (v1 - v0) * (z - z0) / (z1 - z0)
}

fn table_mass(samples: &[(f64, f64)]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum()
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            KernelFamily::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            KernelFamily::Bump { radius } => write!(f, "bump:{radius}"),
            KernelFamily::ShiftedBump { radius, shift } => write!(f, "shifted_bump:{radius}:{shift}"),
            KernelFamily::Table { samples } => write!(f, "table({} samples)", samples.len()),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = LabError;

    /// Parses a one-dimensional spec; use [`KernelSpec::parse`] for other dimensions.
    fn from_str(s: &str) -> Result<Self> {
        KernelSpec::parse(s, 1)
    }
}

/// A nonnegative, exactly mass-one kernel sampled on a grid at scale λ.
///
/// Values are stored in grid order, so the origin sits at index `n/2` along each axis.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    grid: Grid,
    values: Vec<f64>,
    scale: f64,
    source: Option<KernelSpec>,
    spectrum: Vec<Complex64>,
    plan: FftPlan,
}

impl DiscreteKernel {
    /// Builds a kernel from raw grid samples (origin at index `n/2`), renormalised to
    /// discrete mass one. No resolution check is applied.
    pub fn from_values(grid: &Grid, values: Vec<f64>, scale: f64) -> Result<Self> {
        DiscreteKernel::assemble(grid, values, scale, None)
    }

    fn assemble(grid: &Grid, mut values: Vec<f64>, scale: f64, source: Option<KernelSpec>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidArgument("kernel sample count does not match grid".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LabError::InvalidArgument("kernel samples must be finite and nonnegative".into()));
        }
        let raw_mass = grid.cell_volume() * sum::pairwise(&values);
        if !(raw_mass > 0.0) {
            return Err(LabError::InvalidArgument("kernel has no mass on this grid".into()));
        }
        for v in values.iter_mut() {
            *v /= raw_mass;
        }
        let plan = FftPlan::new(grid);
        let w = grid.cell_volume();
        let centred: Vec<f64> = (0..grid.len())
            .map(|idx| w * values[origin_shift(grid, idx)])
            .collect();
        let spectrum = plan.forward(&centred);
        Ok(DiscreteKernel {
            grid: *grid,
            values,
            scale,
            source,
            spectrum,
            plan,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn source(&self) -> Option<&KernelSpec> {
        self.source.as_ref()
    }

    /// Whether the kernel is treated as compactly supported. Raw grid samples count
    /// as compact.
    pub fn is_compact(&self) -> bool {
        self.source.as_ref().is_none_or(KernelSpec::is_compact)
    }

    /// Kernel value at the periodic displacement given in grid steps per axis.
    pub fn value_at_offset(&self, offset: [i64; 2]) -> f64 {
        let n = self.grid.n_per_axis() as i64;
        let half = n / 2;
        let i = (offset[0] + half).rem_euclid(n) as usize;
        match self.grid.dim() {
            1 => self.values[i],
            _ => {
                let j = (offset[1] + half).rem_euclid(n) as usize;
                self.values[i * n as usize + j]
            }
        }
    }

    /// Nonzero samples as `(offset in grid steps, value)` pairs.
    pub fn support(&self) -> Vec<([i64; 2], f64)> {
        let half = (self.grid.n_per_axis() / 2) as i64;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(idx, &v)| {
                let [i, j] = self.grid.unravel(idx);
                let off = match self.grid.dim() {
                    1 => [i as i64 - half, 0],
                    _ => [i as i64 - half, j as i64 - half],
                };
                (off, v)
            })
            .collect()
    }

    /// `h^d Σ K_i m(x_i)` for a weight function of the sample coordinates.
    fn moment<F: Fn([f64; 2]) -> f64>(&self, weight: F) -> f64 {
        let g = &self.grid;
        let v = &self.values;
        g.cell_volume() * sum::pairwise_by(v.len(), |i| v[i] * weight(g.point(i)))
    }
}

/// Grid index of the sample at periodic displacement `idx` (read as an offset from 0).
fn origin_shift(grid: &Grid, idx: usize) -> usize {
    let n = grid.n_per_axis();
    let [i, j] = grid.unravel(idx);
    let si = (i + n / 2) % n;
    match grid.dim() {
        1 => si,
        _ => si * n + (j + n / 2) % n,
    }
}

/// Samples `K_λ(x_i) = λ^d K(λ x_i)` and renormalises to discrete mass one.
pub fn discretize(spec: &KernelSpec, grid: &Grid, lambda: f64) -> Result<DiscreteKernel> {
    if !(lambda.is_finite() && lambda >= 1.0) {
        return Err(LabError::InvalidArgument(format!("kernel scale {lambda} must be >= 1")));
    }
    if spec.dim() != grid.dim() {
        return Err(LabError::GridMismatch);
    }
    let width = spec.effective_width() / lambda;
    if width < MIN_RESOLUTION_POINTS * grid.spacing() {
        return Err(LabError::UnderresolvedKernel {
            width,
            spacing: grid.spacing(),
        });
    }
    let d = grid.dim();
    let amp = lambda.powi(d as i32);
    let values: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let p = grid.point(idx);
            let z = [lambda * p[0], lambda * p[1]];
            amp * spec.eval(&z[..d])
        })
        .collect();
    DiscreteKernel::assemble(grid, values, lambda, Some(spec.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport {
    pub is_even: bool,
    /// Largest magnitude among first moments and off-diagonal second moments.
    pub odd_moment_max: f64,
}

pub fn check_symmetry(k: &DiscreteKernel) -> SymmetryReport {
    let mut worst = first_moment_b(k)
        .iter()
        .fold(0.0f64, |m, b| m.max(b.abs()));
    if k.grid.dim() == 2 {
        worst = worst.max(k.moment(|p| p[0] * p[1]).abs());
    }
    SymmetryReport {
        is_even: worst < SYMMETRY_TOL,
        odd_moment_max: worst,
    }
}

/// `A = ½ h^d Σ K_i |x_i|²`; the kernel must pass [`check_symmetry`].
pub fn second_moment_a(k: &DiscreteKernel) -> Result<f64> {
    let report = check_symmetry(k);
    if !report.is_even {
        return Err(LabError::NotSymmetric(report.odd_moment_max));
    }
    Ok(0.5 * k.moment(|p| p[0] * p[0] + p[1] * p[1]))
}

/// `B_j = h^d Σ K_i (x_i)_j`.
pub fn first_moment_b(k: &DiscreteKernel) -> Vec<f64> {
    (0..k.grid.dim()).map(|axis| k.moment(|p| p[axis])).collect()
}

/// `h^d Σ K_i |x_i|^p`, the discrete absolute moment of order `p`.
pub fn absolute_moment(k: &DiscreteKernel, p: f64) -> f64 {
    k.moment(|x| (x[0] * x[0] + x[1] * x[1]).sqrt().powf(p))
}

/// Periodic convolution `h^d Σ_j K(x_i - x_j) f_j` by the DFT.
pub fn convolve_spectral(k: &DiscreteKernel, f: &Field) -> Result<Field> {
    if k.grid != *f.grid() {
        return Err(LabError::GridMismatch);
    }
    let mut spec = k.plan.forward(f.values());
    for (s, w) in spec.iter_mut().zip(&k.spectrum) {
        *s *= w;
    }
    Ok(Field::from_raw(k.grid, k.plan.inverse_real(spec), f.time()))
}

/// Periodic convolution by direct `O(N²)` summation in fixed order.
pub fn convolve_direct(k: &DiscreteKernel, f: &Field) -> Result<Field> {
    let g = k.grid;
    if g != *f.grid() {
        return Err(LabError::GridMismatch);
    }
    let n = g.n_per_axis() as i64;
    let w = g.cell_volume();
    let fv = f.values();
    let values = (0..g.len())
        .map(|i| {
            let [ix, iy] = g.unravel(i);
            let s = sum::pairwise_by(fv.len(), |j| {
                let [jx, jy] = g.unravel(j);
                let off = [
                    (ix as i64 - jx as i64).rem_euclid(n),
                    (iy as i64 - jy as i64).rem_euclid(n),
                ];
                k.value_at_offset(off) * fv[j]
            });
            w * s
        })
        .collect();
    Ok(Field::from_raw(g, values, f.time()))
}

/// Periodic convolution; spectral for grids of at least [`SPECTRAL_THRESHOLD`] points.
pub fn convolve(k: &DiscreteKernel, f: &Field) -> Result<Field> {
    if f.grid().len() >= SPECTRAL_THRESHOLD {
        convolve_spectral(k, f)
    } else {
        convolve_direct(k, f)
    }
}

/// `λ² (K_λ * f - f)`; `k` must have been discretised at scale `λ`.
pub fn nonlocal_operator(k: &DiscreteKernel, f: &Field, lambda: f64) -> Result<Field> {
    if (k.scale - lambda).abs() > 1e-12 * lambda {
        return Err(LabError::InvalidArgument(format!(
            "kernel discretised at scale {} used with λ = {lambda}",
            k.scale
        )));
    }
    let conv = convolve(k, f)?;
    let l2 = lambda * lambda;
    Ok(Field::from_raw(
        k.grid,
        conv.values().iter().zip(f.values()).map(|(c, u)| l2 * (c - u)).collect(),
        f.time(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::mass;

    fn line(n: usize, l: f64) -> Grid {
        Grid::new(1, n, l).unwrap()
    }

    #[test]
    fn parse_and_display() {
        let g = KernelSpec::parse("\"gaussian:1.0\"", 1).unwrap();
        assert_eq!(g, KernelSpec::gaussian(1.0, 1).unwrap());
        let s: KernelSpec = "shifted_bump:1.0:0.5".parse().unwrap();
        assert_eq!(s.to_string(), "shifted_bump:1:0.5");
        assert!(KernelSpec::parse("cauchy:1", 1).is_err());
        assert!(KernelSpec::parse("gaussian:-1", 1).is_err());
        assert!(KernelSpec::parse("bump:x", 1).is_err());
    }

    #[test]
    fn analytic_bump_has_unit_mass() {
        let spec = KernelSpec::bump(1.0, 1).unwrap();
        let h = 1e-4;
        let m: f64 = (0..20_000).map(|i| h * spec.eval(&[-1.0 + i as f64 * h])).sum();
        assert!((m - 1.0).abs() < 1e-10);
    }

    #[test]
    fn discretize_normalizes_exactly() {
        let g = line(1024, 20.0);
        let k = discretize(&KernelSpec::gaussian(1.0, 1).unwrap(), &g, 1.0).unwrap();
        assert!((mass(&Field::new(g, k.values().to_vec(), 0.0).unwrap()) - 1.0).abs() < 1e-15);
        assert!(k.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn bump_support_scales_with_lambda() {
        let g = line(1024, 20.0);
        let k = discretize(&KernelSpec::bump(1.0, 1).unwrap(), &g, 2.0).unwrap();
        for (i, v) in k.values().iter().enumerate() {
            if g.coord(i).abs() >= 0.5 {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(k.values()[512] > 0.0);
    }

    #[test]
    fn underresolved_kernel_rejected() {
        let g = line(1024, 20.0);
        let err = discretize(&KernelSpec::gaussian(1.0, 1).unwrap(), &g, 2000.0).unwrap_err();
        assert!(matches!(err, LabError::UnderresolvedKernel { .. }));
        assert!(discretize(&KernelSpec::gaussian(1.0, 1).unwrap(), &g, 0.5).is_err());
    }

    #[test]
    fn gaussian_second_moment() {
        let g = line(1024, 20.0);
        for &sigma in &[1.0, 0.7, 1.6] {
            let k = discretize(&KernelSpec::gaussian(sigma, 1).unwrap(), &g, 1.0).unwrap();
            let a = second_moment_a(&k).unwrap();
            assert!((a - sigma * sigma / 2.0).abs() < 1e-10, "{a}");
        }
    }

    #[test]
    fn second_moment_shrinks_with_width() {
        let g = line(1024, 20.0);
        let mut last = f64::INFINITY;
        for &sigma in &[1.0, 0.5, 0.25, 0.1, 0.08] {
            let k = discretize(&KernelSpec::gaussian(sigma, 1).unwrap(), &g, 1.0).unwrap();
            let a = second_moment_a(&k).unwrap();
            assert!(a < last);
            last = a;
        }
        assert!(last < 0.004);
    }

    #[test]
    fn bump_second_moment_matches_fine_quadrature() {
        let g = line(4096, 20.0);
        let spec = KernelSpec::bump(1.0, 1).unwrap();
        let k = discretize(&spec, &g, 1.0).unwrap();
        let a = second_moment_a(&k).unwrap();
        // 8x finer rectangle rule over the support
        let h = g.spacing() / 8.0;
        let m = (1.0 / h) as i64 + 1;
        let fine: f64 = (-m..=m)
            .map(|i| {
                let z = i as f64 * h;
                h * spec.eval(&[z]) * z * z
            })
            .sum::<f64>()
            * 0.5;
        assert!((a - fine).abs() < 1e-10, "{a} vs {fine}");
    }

    #[test]
    fn first_moments() {
        let g = line(1024, 20.0);
        let even = discretize(&KernelSpec::bump(1.0, 1).unwrap(), &g, 1.0).unwrap();
        assert!(first_moment_b(&even)[0].abs() < 1e-12);
        let shifted = discretize(&KernelSpec::shifted_bump(1.0, 0.5, 1).unwrap(), &g, 1.0).unwrap();
        assert!((first_moment_b(&shifted)[0] - 0.5).abs() < 1e-6);
        assert!(second_moment_a(&shifted).is_err());

        let mut delta = vec![0.0; 1024];
        delta[513] = 1.0;
        let k = DiscreteKernel::from_values(&g, delta, 1.0).unwrap();
        assert!((first_moment_b(&k)[0] - g.spacing()).abs() < 1e-15);
    }

    #[test]
    fn symmetry_reports() {
        let g = line(1024, 20.0);
        let gauss = discretize(&KernelSpec::gaussian(1.0, 1).unwrap(), &g, 1.0).unwrap();
        assert!(check_symmetry(&gauss).is_even);
        let shifted = discretize(&KernelSpec::shifted_bump(1.0, 0.5, 1).unwrap(), &g, 1.0).unwrap();
        let r = check_symmetry(&shifted);
        assert!(!r.is_even);
        assert!((r.odd_moment_max - 0.5).abs() < 1e-6);

        let g2 = Grid::new(2, 128, 4.0).unwrap();
        let bump2 = discretize(&KernelSpec::bump(1.0, 2).unwrap(), &g2, 1.0).unwrap();
        let r2 = check_symmetry(&bump2);
        assert!(r2.is_even, "{r2:?}");
        assert!(bump2.moment(|p| p[0] * p[1]).abs() < 1e-12);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let g = line(512, 5.0);
        let mut delta = vec![0.0; 512];
        delta[256] = 1.0;
        let k = DiscreteKernel::from_values(&g, delta, 1.0).unwrap();
        let f = Field::from_fn(&g, |x| (x[0] * 1.3).sin() + x[0] * 0.1);
        let direct = convolve_direct(&k, &f).unwrap();
        for (a, b) in direct.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let spectral = convolve_spectral(&k, &f).unwrap();
        for (a, b) in spectral.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_are_preserved() {
        let g = line(256, 10.0);
        let k = discretize(&KernelSpec::shifted_bump(1.0, 0.5, 1).unwrap(), &g, 1.0).unwrap();
        let c = Field::constant(&g, 2.5);
        let out = convolve(&k, &c).unwrap();
        assert!(out.values().iter().all(|v| (v - 2.5).abs() < 1e-13));
        let op = nonlocal_operator(&k, &c, 1.0).unwrap();
        assert!(op.sup_norm() < 1e-12);
        assert!(nonlocal_operator(&k, &c, 2.0).is_err());
    }

    #[test]
    fn gaussian_convolution_adds_variances() {
        let g = line(2048, 20.0);
        let normal = |x: f64, var: f64| (2.0 * std::f64::consts::PI * var).powf(-0.5) * (-x * x / (2.0 * var)).exp();
        let k = discretize(&KernelSpec::gaussian(1.0, 1).unwrap(), &g, 1.0).unwrap();
        let f = Field::from_fn(&g, |x| normal(x[0], 2.0));
        let out = convolve(&k, &f).unwrap();
        for (i, v) in out.values().iter().enumerate() {
            assert!((v - normal(g.coord(i), 3.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn mirrored_kernel_flips_first_moment() {
        let g = line(1024, 20.0);
        let spec = KernelSpec::shifted_bump(1.0, 0.5, 1).unwrap();
        let k = discretize(&spec.mirrored(), &g, 1.0).unwrap();
        assert!((first_moment_b(&k)[0] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn table_kernel_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        std::fs::write(&path, "z,value\n-1,0\n0,1\n1,0\n").unwrap();
        let spec = KernelSpec::table_from_csv(&path).unwrap();
        assert!((spec.eval(&[0.0]) - 1.0).abs() < 1e-15);
        assert!((spec.eval(&[0.5]) - 0.5).abs() < 1e-15);
        assert_eq!(spec.effective_width(), 2.0);
        let wide = KernelSpec::table(vec![(-2.0, 0.0), (-1.0, 1.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(wide.effective_width(), 4.0);
        assert!((wide.eval(&[0.0]) - 1.0 / 3.0).abs() < 1e-15);
        let g = line(1024, 20.0);
        let k = discretize(&wide, &g, 1.0).unwrap();
        assert!(check_symmetry(&k).is_even);
    }
}
