//! Uniform periodic grids on `[-L, L)^d`, sampled fields and their quadrature.
//!
//! ℝ^d is replaced by a periodic box. Integrals use the rectangle rule, which on a
//! periodic grid is spectrally accurate for smooth integrands and makes discrete
//! mass conservation exact. `|x|` always refers to the representative of a point
//! inside the box.

use std::io::Write;

use crate::error::{LabError, Result};
use crate::spectral::{wavenumber_sq, FftPlan};
use crate::sum;

/// A uniform periodic grid with `n_per_axis` points per axis on `[-L, L)^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n_per_axis: usize,
    half_width: f64,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, n_per_axis: usize, half_width: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(LabError::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n_per_axis < 64 || !n_per_axis.is_power_of_two() {
            return Err(LabError::InvalidGrid(format!(
                "n_per_axis = {n_per_axis} must be a power of two >= 64"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(LabError::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        // n is a power of two, so spacing * n reproduces 2L exactly.
        let spacing = 2.0 * half_width / n_per_axis as f64;
        Ok(Grid {
            dim,
            n_per_axis,
            half_width,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of grid points, `n_per_axis^dim`.
    pub fn len(&self) -> usize {
        self.n_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Volume of the box, `(2L)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// `x_i = -L + i h`.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    pub fn axis_coords(&self) -> Vec<f64> {
        (0..self.n_per_axis).map(|i| self.coord(i)).collect()
    }

    /// Per-axis indices of a flat index; the last axis varies fastest.
    pub fn unravel(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n_per_axis, idx % self.n_per_axis],
        }
    }

    /// Coordinates of a flat index; the unused second slot is 0 in one dimension.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.unravel(idx);
        match self.dim {
            1 => [self.coord(i), 0.0],
            _ => [self.coord(i), self.coord(j)],
        }
    }

    /// Euclidean norm of the in-box representative of a grid point.
    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    /// Same resolution on a box of the given half width.
    pub fn with_half_width(&self, half_width: f64) -> Result<Self> {
        Grid::new(self.dim, self.n_per_axis, half_width)
    }
}

/// Real samples of a function on a [`Grid`], tagged with the time they represent.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    time: f64,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidField(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::InvalidField(format!("non-finite value at index {i}")));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(LabError::InvalidField(format!("time tag {time} must be >= 0")));
        }
        Ok(Field { grid, values, time })
    }

    /// Internal constructor for values produced by finite arithmetic on valid fields.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values, time }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field::from_raw(*grid, vec![0.0; grid.len()], 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field::from_raw(*grid, vec![c; grid.len()], 0.0)
    }

    /// Samples `f` at every grid point; `f` receives a slice of length `dim`.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &Grid, f: F) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                f(&p[..d])
            })
            .collect();
        Field::from_raw(*grid, values, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Whether every value is finite; violated only by unstable arithmetic.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect(), self.time)
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self - other`, keeping `self`'s time tag.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        Ok(Field::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            self.time,
        ))
    }

    /// `self + c * other`, keeping `self`'s time tag.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        Ok(Field::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
            self.time,
        ))
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(LabError::GridMismatch)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Writes the snapshot as CSV: header `x[,y],value`, coordinates ascending,
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        match self.grid.dim() {
            1 => writeln!(out, "x,value")?,
            _ => writeln!(out, "x,y,value")?,
        }
        for (idx, v) in self.values.iter().enumerate() {
            let p = self.grid.point(idx);
            match self.grid.dim() {
                1 => writeln!(out, "{:.16e},{:.16e}", p[0], v)?,
                _ => writeln!(out, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v)?,
            }
        }
        Ok(())
    }
}

/// Discrete integral `h^d Σ f_i`.
pub fn mass(f: &Field) -> f64 {
    f.grid.cell_volume() * sum::pairwise(&f.values)
}

/// Discrete `L^p` norm; pass `f64::INFINITY` for the sup norm.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(LabError::InvalidArgument(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.sup_norm());
    }
    let w = f.grid.cell_volume();
    let v = &f.values;
    let s = if p == 1.0 {
        sum::pairwise_by(v.len(), |i| v[i].abs())
    } else if p == 2.0 {
        sum::pairwise_by(v.len(), |i| v[i] * v[i])
    } else {
        sum::pairwise_by(v.len(), |i| v[i].abs().powf(p))
    };
    Ok((w * s).powf(1.0 / p))
}

/// Mass of `f` restricted to `{|x| > R}`.
pub fn tail_mass(f: &Field, radius: f64) -> Result<f64> {
    let g = f.grid;
    if !(radius > 0.0 && radius < g.half_width()) {
        return Err(LabError::InvalidArgument(format!(
            "tail radius {radius} must lie in (0, L = {})",
            g.half_width()
        )));
    }
    let v = &f.values;
    let s = sum::pairwise_by(v.len(), |i| if g.radius(i) > radius { v[i] } else { 0.0 });
    Ok(g.cell_volume() * s)
}

/// Mass of `|f|` restricted to `{|x| > R}`; used by the runtime tail monitor.
pub(crate) fn abs_tail_mass(f: &Field, radius: f64) -> f64 {
    let g = f.grid;
    let v = &f.values;
    g.cell_volume() * sum::pairwise_by(v.len(), |i| if g.radius(i) > radius { v[i].abs() } else { 0.0 })
}

/// Weights of the four-point Lagrange stencil at nodes `-1, 0, 1, 2` for offset `t ∈ [0, 1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Base index and stencil weights for a source coordinate `s ∈ [-L, L]`.
fn stencil(grid: &Grid, s: f64) -> Result<(usize, [f64; 4])> {
    let l = grid.half_width();
    let slack = 1e-12 * l;
    if !(s >= -l - slack && s <= l + slack) {
        return Err(LabError::InvalidArgument(format!(
            "interpolation point {s} outside source box [-{l}, {l}]"
        )));
    }
    let u = (s + l) / grid.spacing();
    let mut base = u.floor();
    let mut t = u - base;
    // Snap onto nodes so that node-aligned rescalings reproduce samples exactly.
    if t < 1e-10 {
        t = 0.0;
    } else if t > 1.0 - 1e-10 {
        t = 0.0;
        base += 1.0;
    }
    let n = grid.n_per_axis() as i64;
    let base = (base as i64).rem_euclid(n) as usize;
    if t == 0.0 {
        Ok((base, [0.0, 1.0, 0.0, 0.0]))
    } else {
        Ok((base, cubic_weights(t)))
    }
}

/// `g(x) = λ^d f(λ x)` sampled on `target` by periodic cubic interpolation of `f`.
///
/// The returned time tag is `f.time / λ²`, so that applying this map to a
/// snapshot `u(λ² t)` yields `u_λ(t)`.
pub fn rescale_field(f: &Field, lambda: f64, target: &Grid) -> Result<Field> {
    let src = f.grid;
    if !(lambda.is_finite() && lambda >= 1.0) {
        return Err(LabError::InvalidArgument(format!("rescaling factor {lambda} must be >= 1")));
    }
    if target.dim() != src.dim() {
        return Err(LabError::GridMismatch);
    }
    if lambda * target.half_width() > src.half_width() * (1.0 + 1e-12) {
        return Err(LabError::InvalidArgument(format!(
            "λ·L_target = {} exceeds source half width {}",
            lambda * target.half_width(),
            src.half_width()
        )));
    }
    let n = src.n_per_axis();
    let amp = lambda.powi(src.dim() as i32);
    let axis: Vec<(usize, [f64; 4])> = target
        .axis_coords()
        .iter()
        .map(|&x| stencil(&src, lambda * x))
        .collect::<Result<_>>()?;
    let wrap = |b: usize, k: usize| (b + n + k - 1) % n;
    let sv = &f.values;
    let values: Vec<f64> = match src.dim() {
        1 => axis
            .iter()
            .map(|(b, w)| amp * (0..4).map(|k| w[k] * sv[wrap(*b, k)]).sum::<f64>())
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(target.len());
            for (bx, wx) in &axis {
                for (by, wy) in &axis {
                    let mut acc = 0.0;
                    for (a, &wa) in wx.iter().enumerate() {
                        if wa == 0.0 {
                            continue;
                        }
                        let row = wrap(*bx, a) * n;
                        let inner: f64 = wy.iter().enumerate().map(|(b, wb)| wb * sv[row + wrap(*by, b)]).sum();
                        acc += wa * inner;
                    }
                    out.push(amp * acc);
                }
            }
            out
        }
    };
    Field::new(*target, values, f.time / (lambda * lambda))
}

/// Spectral `H^{-1}` norm `(Σ_k |f̂_k|² / (1 + |κ_k|²))^{1/2}` with Parseval-normalised
/// coefficients, so that dropping the weight recovers the discrete `L²` norm.
pub fn h_minus1_norm(f: &Field) -> f64 {
    let g = f.grid;
    let plan = FftPlan::new(&g);
    let spec = plan.forward(&f.values);
    let ksq = wavenumber_sq(&g);
    let norm = g.cell_volume() / g.len() as f64;
    let s = sum::pairwise_by(spec.len(), |k| spec[k].norm_sqr() / (1.0 + ksq[k]));
    (norm * s).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize, l: f64) -> Grid {
        Grid::new(1, n, l).unwrap()
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(Grid::new(3, 64, 1.0).is_err());
        assert!(Grid::new(1, 100, 1.0).is_err());
        assert!(Grid::new(1, 32, 1.0).is_err());
        assert!(Grid::new(1, 64, 0.0).is_err());
    }

    #[test]
    fn grid_spacing_is_exact() {
        for &l in &[1.0, 20.0, 60.0, std::f64::consts::E, 1.0 / 3.0] {
            let g = line(1024, l);
            assert_eq!(g.spacing() * 1024.0, 2.0 * l);
            assert_eq!(g.coord(0), -l);
        }
        let g2 = Grid::new(2, 64, 3.0).unwrap();
        assert_eq!(g2.len(), 4096);
    }

    #[test]
    fn field_rejects_wrong_length_and_nan() {
        let g = line(64, 1.0);
        assert!(Field::new(g, vec![0.0; 63], 0.0).is_err());
        let mut v = vec![0.0; 64];
        v[3] = f64::NAN;
        assert!(Field::new(g, v, 0.0).is_err());
    }

    #[test]
    fn mass_of_simple_fields() {
        let g = line(256, 5.0);
        assert_eq!(mass(&Field::zeros(&g)), 0.0);
        assert!((mass(&Field::constant(&g, 1.0)) - 10.0).abs() < 1e-12);
        let g = line(1024, 20.0);
        let gauss = Field::from_fn(&g, |x| (4.0 * PI).powf(-0.5) * (-x[0] * x[0] / 4.0).exp());
        assert!((mass(&gauss) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_norms_of_constants() {
        let g = line(128, 3.0);
        let c = 0.7;
        let f = Field::constant(&g, c);
        for &p in &[1.0, 1.5, 2.0, 3.0, 7.0] {
            let expect = c * 6f64.powf(1.0 / p);
            assert!((lp_norm(&f, p).unwrap() - expect).abs() < 1e-12 * expect);
        }
        assert_eq!(lp_norm(&Field::zeros(&g), 2.0).unwrap(), 0.0);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn sup_norm_of_gaussian() {
        let g = line(1024, 10.0);
        let f = Field::from_fn(&g, |x| (-x[0] * x[0]).exp());
        let h = g.spacing();
        assert!((lp_norm(&f, f64::INFINITY).unwrap() - 1.0).abs() <= h * h);
    }

    #[test]
    fn tail_mass_cases() {
        let g = line(1024, 20.0);
        assert_eq!(tail_mass(&Field::zeros(&g), 5.0).unwrap(), 0.0);
        let inside = Field::from_fn(&g, |x| if x[0].abs() < 3.0 { 1.0 } else { 0.0 });
        assert_eq!(tail_mass(&inside, 3.0).unwrap(), 0.0);
        assert!(tail_mass(&inside, 20.0).is_err());

        // variance-2 Gaussian against a brute-force partial sum
        let f = Field::from_fn(&g, |x| (4.0 * PI).powf(-0.5) * (-x[0] * x[0] / 4.0).exp());
        let mut brute = 0.0;
        for i in 0..1024 {
            let x = g.coord(i);
            if x.abs() > 5.0 {
                brute += g.spacing() * (4.0 * PI).powf(-0.5) * (-x * x / 4.0).exp();
            }
        }
        assert!((tail_mass(&f, 5.0).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn rescale_identity_and_mass() {
        let g = line(1024, 20.0);
        let f = Field::from_fn(&g, |x| (-(x[0] - 0.3).powi(2) / 3.0).exp()).with_time(2.0);
        let same = rescale_field(&f, 1.0, &g).unwrap();
        assert_eq!(same.values(), f.values());
        assert_eq!(same.time(), 2.0);

        let target = line(1024, 20.0 / 2.7);
        let r = rescale_field(&f, 2.7, &target).unwrap();
        assert!((mass(&r) - mass(&f)).abs() < 1e-6);
        assert!((r.time() - 2.0 / 2.7f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn rescale_gaussian_matches_analytic() {
        let src = line(2048, 20.0);
        let gauss = |x: f64| (4.0 * PI).powf(-0.5) * (-x * x / 4.0).exp();
        let f = Field::from_fn(&src, |x| gauss(x[0]));
        // a target grid whose nodes do not align with the source
        let target = line(2048, 9.3);
        let r = rescale_field(&f, 2.0, &target).unwrap();
        for (i, v) in r.values().iter().enumerate() {
            let x = target.coord(i);
            assert!((v - 2.0 * gauss(2.0 * x)).abs() < 1e-8);
        }
    }

    #[test]
    fn rescale_rejects_bad_lambda() {
        let g = line(64, 1.0);
        let f = Field::zeros(&g);
        assert!(rescale_field(&f, 0.5, &g).is_err());
        assert!(rescale_field(&f, 2.0, &g).is_err());
    }

    #[test]
    fn h_minus1_cases() {
        let g = line(256, 4.0);
        assert_eq!(h_minus1_norm(&Field::zeros(&g)), 0.0);
        let c = 1.3;
        let cst = Field::constant(&g, c);
        assert!((h_minus1_norm(&cst) - c * 8f64.sqrt()).abs() < 1e-12);

        let k = PI / 4.0;
        let s = Field::from_fn(&g, |x| (k * x[0]).sin());
        let l2 = lp_norm(&s, 2.0).unwrap();
        let expect = l2 * l2 / (1.0 + k * k);
        assert!((h_minus1_norm(&s).powi(2) - expect).abs() < 1e-12);
    }

    #[test]
    fn csv_header_and_precision() {
        let g = Grid::new(2, 64, 1.0).unwrap();
        let f = Field::constant(&g, 1.0 / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,value"));
        let first = lines.next().unwrap();
        let value: f64 = first.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(value, 1.0 / 3.0);
        assert_eq!(text.lines().count(), 1 + 4096);
    }
}
