//! Discrete Fourier transforms on [`Grid`]s and spectral differentiation.
//!
//! Transforms are unnormalised in the forward direction and carry the `1/N`
//! factor in the inverse, matching `rustfft` conventions. Plans are cached per
//! transform length behind a mutex; the cached plans themselves are `Send + Sync`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Field, Grid};

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(len: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(len)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
        })
        .clone()
}

/// Forward/inverse transform pair for one grid shape.
#[derive(Clone)]
pub struct FftPlan {
    dim: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl FftPlan {
    pub fn new(grid: &Grid) -> Self {
        let (forward, inverse) = plans(grid.n_per_axis());
        FftPlan {
            dim: grid.dim(),
            n: grid.n_per_axis(),
            forward,
            inverse,
        }
    }

    fn apply(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        let n = self.n;
        match self.dim {
            1 => fft.process(buf),
            _ => {
                // rows are contiguous in the second index
                fft.process(buf);
                let mut column = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        column[i] = buf[i * n + j];
                    }
                    fft.process(&mut column);
                    for i in 0..n {
                        buf[i * n + j] = column[i];
                    }
                }
            }
        }
    }

    /// Unnormalised forward DFT of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply(&self.forward, &mut buf);
        buf
    }

    /// Inverse DFT (including the `1/N` factor), returning the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.apply(&self.inverse, &mut spectrum);
        let scale = 1.0 / spectrum.len() as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }
}

/// Signed mode index for DFT bin `k` of length `n`, in `[-n/2, n/2)`.
pub fn signed_mode(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Box wavenumbers `κ_k = π k / L` along one axis, in DFT bin order.
pub fn wavenumbers(grid: &Grid) -> Vec<f64> {
    let n = grid.n_per_axis();
    let base = std::f64::consts::PI / grid.half_width();
    (0..n).map(|k| base * signed_mode(k, n) as f64).collect()
}

/// `|κ|²` for every bin of the (possibly two-dimensional) spectrum.
pub fn wavenumber_sq(grid: &Grid) -> Vec<f64> {
    let kappa = wavenumbers(grid);
    match grid.dim() {
        1 => kappa.iter().map(|k| k * k).collect(),
        _ => {
            let n = grid.n_per_axis();
            let mut out = Vec::with_capacity(n * n);
            for kx in &kappa {
                for ky in &kappa {
                    out.push(kx * kx + ky * ky);
                }
            }
            out
        }
    }
}

/// Multiplier `Π_axis (iκ_axis)^{order_axis}` with the Nyquist bin zeroed on odd orders.
fn derivative_symbol(grid: &Grid, order: &[u32]) -> Vec<Complex64> {
    let n = grid.n_per_axis();
    let kappa = wavenumbers(grid);
    let axis_symbol = |k: usize, ord: u32| -> Complex64 {
        if ord % 2 == 1 && k == n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, kappa[k]).powu(ord)
    };
    match grid.dim() {
        1 => (0..n).map(|k| axis_symbol(k, order[0])).collect(),
        _ => {
            let mut out = Vec::with_capacity(n * n);
            for kx in 0..n {
                let sx = axis_symbol(kx, order[0]);
                for ky in 0..n {
                    out.push(sx * axis_symbol(ky, order[1]));
                }
            }
            out
        }
    }
}

/// Spectral partial derivative of `f` with multi-index `order` (one entry per axis).
pub fn derivative(f: &Field, order: &[u32]) -> Field {
    let grid = *f.grid();
    assert_eq!(order.len(), grid.dim(), "one derivative order per axis");
    let plan = FftPlan::new(&grid);
    let symbol = derivative_symbol(&grid, order);
    let mut spec = plan.forward(f.values());
    for (s, m) in spec.iter_mut().zip(&symbol) {
        *s *= m;
    }
    Field::from_raw(grid, plan.inverse_real(spec), f.time())
}

/// Spectral gradient, one field per axis.
pub fn gradient(f: &Field) -> Vec<Field> {
    let d = f.grid().dim();
    (0..d)
        .map(|axis| {
            let mut order = vec![0u32; d];
            order[axis] = 1;
            derivative(f, &order)
        })
        .collect()
}

/// Spectral Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let grid = *f.grid();
    let plan = FftPlan::new(&grid);
    let ksq = wavenumber_sq(&grid);
    let mut spec = plan.forward(f.values());
    for (s, k2) in spec.iter_mut().zip(&ksq) {
        *s *= -k2;
    }
    Field::from_raw(grid, plan.inverse_real(spec), f.time())
}
