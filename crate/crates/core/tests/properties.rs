use nonlocal_lab::diagnostics::{bbm_functional, nonlocal_energy, renormalized_error};
use nonlocal_lab::grid::{h_minus1_norm, lp_norm, mass, tail_mass};
use nonlocal_lab::kernels::{convolve, discretize};
use nonlocal_lab::solver::{step, Model, ModelParams, Scheme};
use nonlocal_lab::{Field, Grid, KernelSpec};
use proptest::prelude::*;

fn line(n: usize, l: f64) -> Grid {
    Grid::new(1, n, l).unwrap()
}

/// A sum of a few Gaussian bumps; coefficients may be negative.
fn bumps(grid: &Grid, terms: &[(f64, f64, f64)]) -> Field {
    Field::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(a, c, w)| a * (-(x[0] - c).powi(2) / w).exp())
            .sum()
    })
}

fn terms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -3.0..3.0f64, 0.5..3.0f64), 1..4)
}

fn positive_terms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.1..2.0f64, -3.0..3.0f64, 0.5..3.0f64), 1..4)
}

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.5..2.0f64).prop_map(|s| KernelSpec::gaussian(s, 1).unwrap()),
        (0.5..2.0f64).prop_map(|r| KernelSpec::bump(r, 1).unwrap()),
        (0.5..2.0f64, -1.0..1.0f64).prop_map(|(r, z)| KernelSpec::shifted_bump(r, z, 1).unwrap()),
    ]
}

fn sup_diff(a: &Field, b: &Field) -> f64 {
    a.sub(b).unwrap().sup_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discretized_kernels_have_unit_mass(spec in kernel(), lambda in 1.0..3.0f64, n in prop::sample::select(vec![256usize, 512, 1024])) {
        let k = discretize(&spec, &line(n, 10.0), lambda).unwrap();
        let m: f64 = k.values().iter().sum::<f64>() * k.grid().cell_volume();
        prop_assert!((m - 1.0).abs() < 1e-13);
    }

    #[test]
    fn convolution_is_linear(spec in kernel(), f in terms(), g in terms(), a in -3.0..3.0f64, b in -3.0..3.0f64, n in prop::sample::select(vec![128usize, 512])) {
        let grid = line(n, 10.0);
        let k = discretize(&spec, &grid, 1.0).unwrap();
        let (f, g) = (bumps(&grid, &f), bumps(&grid, &g));
        let lhs = convolve(&k, &f.scaled(a).add_scaled(b, &g).unwrap()).unwrap();
        let rhs = convolve(&k, &f).unwrap().scaled(a).add_scaled(b, &convolve(&k, &g).unwrap()).unwrap();
        let scale = 1.0 + lhs.sup_norm();
        prop_assert!(sup_diff(&lhs, &rhs) <= 1e-12 * scale);
    }

    #[test]
    fn convolution_commutes_with_grid_shifts(spec in kernel(), f in terms(), shift in 0usize..128, n in prop::sample::select(vec![128usize, 512])) {
        let grid = line(n, 10.0);
        let k = discretize(&spec, &grid, 1.5).unwrap();
        let f = bumps(&grid, &f);
        let roll = |v: &Field| {
            let vals = v.values();
            let rolled: Vec<f64> = (0..n).map(|i| vals[(i + n - shift) % n]).collect();
            Field::new(grid, rolled, v.time()).unwrap()
        };
        let a = convolve(&k, &roll(&f)).unwrap();
        let b = roll(&convolve(&k, &f).unwrap());
        prop_assert!(sup_diff(&a, &b) <= 1e-12 * (1.0 + b.sup_norm()));
    }

    #[test]
    fn steps_conserve_mass(f in terms(), q in prop::sample::select(vec![2.0f64, 3.0]), lambda in 1.0..2.0f64, scheme in prop::sample::select(vec![Scheme::Euler, Scheme::Rk4])) {
        let grid = line(256, 20.0);
        let params = ModelParams::new(
            q,
            lambda,
            KernelSpec::gaussian(1.0, 1).unwrap(),
            KernelSpec::shifted_bump(1.0, 1.0, 1).unwrap(),
        ).unwrap();
        let model = Model::new(params, &grid).unwrap();
        let u = bumps(&grid, &f);
        let dt = model.auto_dt(u.sup_norm(), 0.5);
        let v = step(&model, &u, dt, scheme).unwrap();
        let scale = lp_norm(&u, 1.0).unwrap();
        prop_assert!((mass(&v) - mass(&u)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn nonnegative_data_contracts_in_l1(f in positive_terms(), q in prop::sample::select(vec![2.0f64, 3.0])) {
        let grid = line(256, 20.0);
        let params = ModelParams::new(
            q,
            1.0,
            KernelSpec::gaussian(1.0, 1).unwrap(),
            KernelSpec::shifted_bump(1.0, 1.0, 1).unwrap(),
        ).unwrap();
        let model = Model::new(params, &grid).unwrap();
        let u = bumps(&grid, &f);
        let dt = model.auto_dt(u.sup_norm(), 0.5);
        let v = step(&model, &u, dt, Scheme::Rk4).unwrap();
        prop_assert!(lp_norm(&v, 1.0).unwrap() <= lp_norm(&u, 1.0).unwrap() + 1e-10);
        prop_assert!(v.sup_norm() <= u.sup_norm() + 1e-10);
        prop_assert!(v.min_value() >= -1e-12);
    }

    #[test]
    fn h_minus1_is_dominated_by_l2(f in terms(), l in 4.0..20.0f64) {
        let grid = line(256, l);
        let f = bumps(&grid, &f);
        prop_assert!(h_minus1_norm(&f) <= lp_norm(&f, 2.0).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn tail_mass_decreases_with_radius(f in terms(), r1 in 0.1..9.0f64, r2 in 0.1..9.0f64) {
        let grid = line(512, 10.0);
        let f = bumps(&grid, &f).map(f64::abs);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(tail_mass(&f, hi).unwrap() <= tail_mass(&f, lo).unwrap() + 1e-15);
    }

    #[test]
    fn nonlocal_energy_is_nonnegative(spec in kernel(), f in terms(), lambda in 1.0..4.0f64) {
        let grid = line(512, 10.0);
        let k = discretize(&spec, &grid, lambda).unwrap();
        prop_assert!(nonlocal_energy(&bumps(&grid, &f), &k, lambda).unwrap() >= 0.0);
    }

    #[test]
    fn renormalized_error_is_homogeneous(f in terms(), g in terms(), c in -5.0..5.0f64, t in 0.5..50.0f64, p in prop::sample::select(vec![1.0f64, 2.0, 4.0, f64::INFINITY])) {
        let grid = line(256, 10.0);
        let u = bumps(&grid, &f).with_time(t);
        let v = bumps(&grid, &g).with_time(t);
        let base = renormalized_error(&u, &v, p).unwrap();
        let scaled = renormalized_error(&u.scaled(c), &v.scaled(c), p).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + c.abs() * base));
    }

    #[test]
    fn bbm_functional_scales_with_the_field(f in terms(), c in -3.0..3.0f64, p in prop::sample::select(vec![1.0f64, 1.5, 2.0, 3.0]), n in prop::sample::select(vec![1.0f64, 2.0, 4.0])) {
        let grid = line(512, 10.0);
        let rho = discretize(&KernelSpec::bump(1.0, 1).unwrap(), &grid, n).unwrap();
        let f = bumps(&grid, &f);
        let base = bbm_functional(&f, &rho, n, p).unwrap();
        let scaled = bbm_functional(&f.scaled(c), &rho, n, p).unwrap();
        prop_assert!((scaled - c.abs().powf(p) * base).abs() <= 1e-10 * (1.0 + scaled.abs()));
    }
}
