use std::sync::Arc;

use levy_volterra::charfn::{
    cf_m, cf_m_qg, ddt_cf_m_qg, ddt_s_g_of_m, s_g_of_m, write_cf_lattice, GSpec, SmoothTestFunction,
};
use levy_volterra::kernels::{l2_norm_sq, FractionalKernel, IndicatorKernel, KernelHandle, TruncatedKernel};
use levy_volterra::levy::{GridSpec, JumpLaw, JumpSpec, LevyModel, LevySimulator, TimeGrid};
use levy_volterra::quadrature::{adaptive, QuadratureSpec};
use levy_volterra::rng::path_seed;
use levy_volterra::stransform::{battery, battery_element, ddt_s_m, s_transform_mc, TestFunctional, WeightEvaluator};
use levy_volterra::volterra::VolterraSimulator;
use num_complex::Complex64;
use proptest::prelude::*;

fn mixed() -> LevyModel {
    LevyModel::new(1.0, JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0))).unwrap()
}

fn frac() -> FractionalKernel {
    FractionalKernel::new(0.25).unwrap()
}

fn spec() -> QuadratureSpec {
    QuadratureSpec::with_tolerances(1e-12, 1e-10)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[test]
fn value_at_zero_frequency() {
    let k = frac();
    assert_eq!(cf_m(&k, &mixed(), 0.8, 0.0, &spec()).unwrap().value, c(1.0));
    let g = battery_element("middle").unwrap().bind(&mixed()).unwrap();
    assert_eq!(cf_m_qg(&k, &g, 0.8, 0.0, &spec()).unwrap().value, c(1.0));
    assert_eq!(ddt_cf_m_qg(&k, &g, 0.8, 0.0, &spec()).unwrap().value, c(0.0));
}

#[test]
fn brownian_closed_forms() {
    let model = LevyModel::gaussian(1.0).unwrap();
    let g = TestFunctional::zero().bind(&model).unwrap();
    for u in [-4.0f64, -0.5, 1.0, 3.0] {
        for t in [0.25, 1.0] {
            let phi = (-0.5 * u * u * t).exp();
            let v = cf_m(&IndicatorKernel, &model, t, u, &spec()).unwrap();
            assert!((v.value - c(phi)).norm() <= 1e-10 + v.error);
            let d = ddt_cf_m_qg(&IndicatorKernel, &g, t, u, &spec()).unwrap();
            assert!((d.value - c(-0.5 * u * u * phi)).norm() <= 1e-10 + d.error);
        }
    }
}

#[test]
fn zero_functional_reduces_to_plain_cf() {
    let k = frac();
    let g = TestFunctional::zero().bind(&mixed()).unwrap();
    for t in [0.2, 0.7, 1.0] {
        for u in [-5.0, -1.5, 0.5, 4.0] {
            let a = cf_m_qg(&k, &g, t, u, &spec()).unwrap();
            let b = cf_m(&k, &mixed(), t, u, &spec()).unwrap();
            assert!((a.value - b.value).norm() <= a.error + b.error + 1e-14);
        }
    }
}

#[test]
fn cf_derivative_against_finite_difference() {
    let k = frac();
    let h = 1e-4;
    for name in ["early", "late", "signed"] {
        let g = battery_element(name).unwrap().bind(&mixed()).unwrap();
        for t in [0.3, 0.7] {
            for u in [-2.0, 0.7, 3.0] {
                let fd = (cf_m_qg(&k, &g, t + h, u, &spec()).unwrap().value
                    - cf_m_qg(&k, &g, t - h, u, &spec()).unwrap().value)
                    / (2.0 * h);
                let d = ddt_cf_m_qg(&k, &g, t, u, &spec()).unwrap().value;
                assert!((d - fd).norm() <= 1e-4 * d.norm().max(1e-2), "{name} t={t} u={u}: {d} vs {fd}");
            }
        }
    }
}

/// Terminal values of `M` on a truncated window with per-path weights for
/// the listed functionals.
fn weighted_sample(names: &[&str], n: u64) -> (TruncatedKernel, Vec<f64>, Vec<Vec<f64>>) {
    let past = 100.0;
    let grid = Arc::new(TimeGrid::new(GridSpec::new(1.0, past, 128)).unwrap());
    let inner: KernelHandle = Arc::new(frac());
    let last = grid.nodes().len() - 1;
    let sim = VolterraSimulator::new(Arc::clone(&inner), Arc::clone(&grid), vec![last]).unwrap();
    let lsim = LevySimulator::new(&mixed(), Arc::clone(&grid)).unwrap();
    let lps: Vec<_> = (0..n).map(|i| lsim.simulate(path_seed(31, i))).collect();
    let m: Vec<f64> = lps.iter().map(|l| sim.simulate(l).unwrap().terminal()).collect();
    let ws = names
        .iter()
        .map(|name| {
            let we = WeightEvaluator::new(&battery_element(name).unwrap(), &mixed(), Arc::clone(&grid)).unwrap();
            lps.iter().map(|l| we.weight(l)).collect()
        })
        .collect();
    (TruncatedKernel::new(inner, past).unwrap(), m, ws)
}

#[test]
fn characteristic_functions_match_weighted_monte_carlo() {
    let names = ["zero", "early", "mirrored"];
    let (k, m, ws) = weighted_sample(&names, 5000);
    for (name, w) in names.iter().zip(&ws) {
        let g = battery_element(name).unwrap().bind(&mixed()).unwrap();
        for u in [-3.0, -1.0, 0.5, 2.0, 5.0] {
            let phi: Vec<Complex64> = m.iter().map(|x| Complex64::new(0.0, u * x).exp()).collect();
            let mc = s_transform_mc(&phi, w).unwrap();
            let q = cf_m_qg(&k, &g, 1.0, u, &spec()).unwrap();
            assert!((mc.value - q.value).norm() <= 3.0 * mc.std_error + q.error, "{name} u={u}: {mc:?} vs {q:?}");
        }
    }
}

#[test]
fn s_transform_of_bump_matches_weighted_monte_carlo() {
    let names = ["zero", "late", "two_terms"];
    let (k, m, ws) = weighted_sample(&names, 5000);
    let gt = GSpec::BUMP.build();
    let phi: Vec<f64> = m.iter().map(|x| gt.value(*x)).collect();
    for (name, w) in names.iter().zip(&ws) {
        let g = battery_element(name).unwrap().bind(&mixed()).unwrap();
        let mc = s_transform_mc(&phi, w).unwrap();
        let q = s_g_of_m(&gt, &k, &g, 1.0, &spec()).unwrap();
        assert!((mc.value - q.value).abs() <= 3.0 * mc.std_error + q.error, "{name}: {mc:?} vs {q:?}");
    }
}

#[test]
fn bump_expectation_closed_form() {
    // E G(N(0, v)) for an off-centre bump: a w / sqrt(w^2 + v) exp(-c^2 / 2(w^2 + v))
    let model = LevyModel::gaussian(0.8).unwrap();
    let g = TestFunctional::zero().bind(&model).unwrap();
    let gt = SmoothTestFunction::gaussian_bump(1.5, 0.3, 0.6).unwrap();
    for t in [0.2f64, 1.0] {
        let v = 0.64 * t;
        let exact = 1.5 * 0.6 / (0.36 + v).sqrt() * (-0.09 / (2.0 * (0.36 + v))).exp();
        let s = s_g_of_m(&gt, &IndicatorKernel, &g, t, &spec()).unwrap();
        assert!((s.value - exact).abs() <= 1e-9 + s.error, "{} vs {exact}", s.value);
    }
}

#[test]
fn constants_via_wide_bumps() {
    let k = frac();
    let g = battery_element("middle").unwrap().bind(&mixed()).unwrap();
    let constant = SmoothTestFunction::Constant(2.0);
    assert_eq!(s_g_of_m(&constant, &k, &g, 0.6, &spec()).unwrap().value, 2.0);
    assert_eq!(ddt_s_g_of_m(&constant, &k, &g, 0.6, &spec()).unwrap().value, 0.0);
    let wide = SmoothTestFunction::gaussian_bump(2.0, 0.0, 1e3).unwrap();
    let s = s_g_of_m(&wide, &k, &g, 0.6, &spec()).unwrap().value;
    assert!((s - 2.0).abs() < 1e-4, "{s}");
}

#[test]
fn s_g_derivative_against_finite_difference() {
    let k = frac();
    let gt = GSpec::BUMP.build();
    let h = 1e-4;
    for name in ["zero", "early", "broad"] {
        let g = battery_element(name).unwrap().bind(&mixed()).unwrap();
        for t in [0.25, 0.5, 0.9] {
            let fd = (s_g_of_m(&gt, &k, &g, t + h, &spec()).unwrap().value
                - s_g_of_m(&gt, &k, &g, t - h, &spec()).unwrap().value)
                / (2.0 * h);
            let d = ddt_s_g_of_m(&gt, &k, &g, t, &spec()).unwrap().value;
            assert!((d - fd).abs() <= 1e-3 * d.abs().max(1e-2), "{name} t={t}: {d} vs {fd}");
        }
    }
}

#[test]
fn wide_damped_linear_tracks_s_m_derivative() {
    let k = frac();
    let gt = SmoothTestFunction::DampedLinear { width: 200.0 };
    let g = battery_element("middle").unwrap().bind(&mixed()).unwrap();
    for t in [0.3, 0.6] {
        let lin = ddt_s_m(&k, &g, t, &spec()).unwrap().value;
        let d = ddt_s_g_of_m(&gt, &k, &g, t, &spec()).unwrap().value;
        assert!((d - lin).abs() <= 1e-3 * lin.abs(), "{d} vs {lin}");
    }
}

#[test]
fn fundamental_theorem_in_time() {
    let k = frac();
    let gt = GSpec::BUMP.build();
    let g = battery_element("two_terms").unwrap().bind(&mixed()).unwrap();
    let quad = QuadratureSpec::with_tolerances(1e-9, 1e-8);
    let d = |t: f64| ddt_s_g_of_m(&gt, &k, &g, t, &quad).unwrap().value;
    let integral = adaptive(&d, 0.0, 1.0, 1e-8, 1e-8, 200).unwrap();
    let end = s_g_of_m(&gt, &k, &g, 1.0, &spec()).unwrap();
    let lhs = end.value - gt.value(0.0);
    assert!((lhs - integral.value).abs() <= 1e-6 + integral.error + end.error, "{lhs} vs {integral:?}");
}

#[test]
fn gaussian_damping_bound() {
    let k = frac();
    let model = mixed();
    let v = l2_norm_sq(&k, 1.0, &spec()).unwrap().value;
    let damp = 0.5 * v;
    for (name, tf) in battery() {
        let g = tf.bind(&model).unwrap();
        let e_g = g.weight_second_moment().unwrap().sqrt();
        for i in 0..=20 {
            let u = -5.0 + 0.5 * i as f64;
            let q = cf_m_qg(&k, &g, 1.0, u, &spec()).unwrap().value.norm();
            assert!(q <= e_g * (-damp * u * u).exp() * (1.0 + 1e-9), "{name} u={u}: {q}");
        }
    }
}

#[test]
fn lattice_csv() {
    let g = TestFunctional::zero().bind(&LevyModel::gaussian(1.0).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_cf_lattice(&IndicatorKernel, &g, &[0.5, 1.0], &[-1.0, 0.0, 1.0], &spec(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("t,u,re,im,error_bound"));
    let last: Vec<f64> = rows.last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[2] - (-0.5f64).exp()).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bounded_and_hermitian(t in 0.01f64..1.5, u in -8.0f64..8.0, sigma in 0.0f64..1.5) {
        let model = LevyModel::new(sigma, JumpSpec::compound_poisson(2.0, JumpLaw::Uniform { low: -1.0, high: 2.0 })).unwrap();
        let k = frac();
        let a = cf_m(&k, &model, t, u, &spec()).unwrap().value;
        let b = cf_m(&k, &model, t, -u, &spec()).unwrap().value;
        prop_assert!(a.norm() <= 1.0 + 1e-12);
        prop_assert!((a - b.conj()).norm() <= 1e-10);
    }

    #[test]
    fn signed_measure_has_unit_mass(t in 0.01f64..1.5, idx in 0usize..8) {
        let (_, tf) = battery().swap_remove(idx);
        let g = tf.bind(&mixed()).unwrap();
        prop_assert_eq!(cf_m_qg(&frac(), &g, t, 0.0, &spec()).unwrap().value, c(1.0));
    }
}
