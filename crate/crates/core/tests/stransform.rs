use std::f64::consts::PI;
use std::sync::Arc;

use levy_volterra::kernels::{FractionalKernel, IndicatorKernel, KernelHandle, TruncatedKernel};
use levy_volterra::levy::{GridSpec, JumpLaw, JumpSpec, LevyModel, LevyPath, LevySimulator, TimeGrid};
use levy_volterra::quadrature::QuadratureSpec;
use levy_volterra::rng::path_seed;
use levy_volterra::stransform::{
    battery, battery_element, ddt_s_m, doleans_weight, s_lambda_rhs, s_m, s_m_diamond_rhs, s_n_rhs, s_transform_mc,
    Bump, TestFunctional, TimeProfile, WeightDiagnostics, WeightEvaluator,
};
use levy_volterra::volterra::VolterraSimulator;
use proptest::prelude::*;
use statrs::function::erf::erf;

fn mixed() -> LevyModel {
    LevyModel::new(1.0, JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0))).unwrap()
}

fn spec() -> QuadratureSpec {
    QuadratureSpec::with_tolerances(1e-11, 1e-9)
}

fn grid(past: f64, n: usize) -> Arc<TimeGrid> {
    Arc::new(TimeGrid::new(GridSpec::new(1.0, past, n)).unwrap())
}

fn paths(model: &LevyModel, g: &Arc<TimeGrid>, n: u64, master: u64) -> Vec<LevyPath> {
    let sim = LevySimulator::new(model, Arc::clone(g)).unwrap();
    (0..n).map(|i| sim.simulate(path_seed(master, i))).collect()
}

fn weights(g: &TestFunctional, model: &LevyModel, lps: &[LevyPath]) -> Vec<f64> {
    let we = WeightEvaluator::new(g, model, Arc::clone(lps[0].grid())).unwrap();
    lps.iter().map(|l| we.weight(l)).collect()
}

fn early() -> TestFunctional {
    battery_element("early").unwrap()
}

/// `int_0^t g(0, s) ds` for a single Gaussian-profile term.
fn g0_integral(g: &TestFunctional, t: f64) -> f64 {
    let c = &g.terms[0];
    let (m, w) = (c.time.centre, c.time.width);
    let z = |s: f64| erf((s - m) / (2f64.sqrt() * w));
    c.mu * c.gauss * w * (PI / 2.0).sqrt() * (z(t) - z(0.0))
}

#[test]
fn zero_functional_has_unit_weight() {
    let lps = paths(&mixed(), &grid(0.0, 32), 50, 1);
    for lp in &lps {
        assert_eq!(doleans_weight(&TestFunctional::zero(), &mixed(), lp).unwrap(), 1.0);
    }
}

#[test]
fn gaussian_weights_have_unit_mean() {
    let model = LevyModel::gaussian(1.0).unwrap();
    let lps = paths(&model, &grid(0.0, 128), 10_000, 2);
    for (name, g) in battery() {
        let d = WeightDiagnostics::from_weights(&weights(&g, &model, &lps));
        assert!((d.mean - 1.0).abs() <= 3.0 * d.mean_se, "{name}: {d:?}");
    }
}

#[test]
fn battery_weights_have_unit_mean_and_bounded_variance() {
    let model = mixed();
    let lps = paths(&model, &grid(0.0, 128), 10_000, 3);
    for (name, g) in battery() {
        let w = weights(&g, &model, &lps);
        let d = WeightDiagnostics::from_weights(&w);
        assert!((d.mean - 1.0).abs() <= 3.0 * d.mean_se, "{name}: {d:?}");
        assert!(d.variance <= 10.0, "{name}: {d:?}");
        let second = g.bind(&model).unwrap().weight_second_moment().unwrap();
        assert!(second.is_finite() && second >= 1.0);
    }
}

#[test]
fn constants_and_centring() {
    let model = mixed();
    let g = grid(0.0, 64);
    let lps = paths(&model, &g, 10_000, 4);
    let w = weights(&early(), &model, &lps);
    let c = vec![2.5; w.len()];
    let e = s_transform_mc(&c, &w).unwrap();
    let d = e.weights.unwrap();
    assert!((e.value - 2.5 * d.mean).abs() < 1e-12);
    assert!((e.value - 2.5).abs() <= 3.0 * e.std_error);
    let ones = vec![1.0; w.len()];
    let terminal: Vec<f64> = lps.iter().map(|l| *l.values().last().unwrap()).collect();
    let p = s_transform_mc(&terminal, &ones).unwrap();
    assert!(p.value.abs() <= 3.0 * p.std_error);
    assert!(s_transform_mc::<f64>(&[], &[]).is_err());
}

#[test]
fn s_m_of_zero_functional() {
    let k = FractionalKernel::new(0.25).unwrap();
    let g = TestFunctional::zero().bind(&mixed()).unwrap();
    assert_eq!(s_m(&k, &g, 0.7, &spec()).unwrap().value, 0.0);
    assert_eq!(ddt_s_m(&k, &g, 0.7, &spec()).unwrap().value, 0.0);
}

#[test]
fn s_m_indicator_gaussian_closed_form() {
    let model = LevyModel::gaussian(0.7).unwrap();
    let g = early();
    let b = g.bind(&model).unwrap();
    for t in [0.1, 0.4, 1.0] {
        let v = s_m(&IndicatorKernel, &b, t, &spec()).unwrap().value;
        let exact = 0.7 * g0_integral(&g, t);
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }
}

#[test]
fn s_m_derivative_against_finite_difference() {
    let k = FractionalKernel::new(0.25).unwrap();
    let h = 1e-4;
    for (name, g) in battery() {
        let b = g.bind(&mixed()).unwrap();
        for t in [0.3, 0.6, 0.9] {
            let fd = (s_m(&k, &b, t + h, &spec()).unwrap().value - s_m(&k, &b, t - h, &spec()).unwrap().value) / (2.0 * h);
            let v = ddt_s_m(&k, &b, t, &spec()).unwrap().value;
            assert!((v - fd).abs() <= 1e-4 * v.abs().max(1e-2), "{name} t={t}: {v} vs {fd}");
        }
    }
}

#[test]
fn s_m_derivative_of_indicator_is_eta() {
    let b = early().bind(&mixed()).unwrap();
    for t in [0.2, 0.5] {
        let v = ddt_s_m(&IndicatorKernel, &b, t, &spec()).unwrap().value;
        assert!((v - b.eta(t)).abs() < 1e-12);
        assert!((b.eta(t) - (b.g0(t) + b.kappa(t))).abs() < 1e-14);
    }
}

#[test]
fn s_m_matches_weighted_monte_carlo() {
    let model = mixed();
    let past = 100.0;
    let g = grid(past, 128);
    let z = g.zero_index();
    let inner: KernelHandle = Arc::new(FractionalKernel::new(0.25).unwrap());
    let k = TruncatedKernel::new(Arc::clone(&inner), past).unwrap();
    let sim = VolterraSimulator::new(inner, Arc::clone(&g), vec![z + 64, z + 128]).unwrap();
    let lps = paths(&model, &g, 10_000, 5);
    let ms: Vec<_> = lps.iter().map(|l| sim.simulate(l).unwrap()).collect();
    for name in ["early", "late", "two_terms"] {
        let tf = battery_element(name).unwrap();
        let w = weights(&tf, &model, &lps);
        let b = tf.bind(&model).unwrap();
        for (i, t) in [0.5, 1.0].into_iter().enumerate() {
            let phi: Vec<f64> = ms.iter().map(|m| m.values()[i]).collect();
            let mc = s_transform_mc(&phi, &w).unwrap();
            let q = s_m(&k, &b, t, &spec()).unwrap();
            assert!((mc.value - q.value).abs() <= 3.0 * mc.std_error + q.error, "{name} t={t}: {mc:?} vs {q:?}");
        }
    }
}

/// `E^{Q_g} cos W(t) = cos(int_0^t g(0, s) ds) e^{-t/2}`.
fn s_cos_w(g: &TestFunctional, t: f64) -> f64 {
    g0_integral(g, t).cos() * (-0.5 * t).exp()
}

/// Forward sums of `cos W(t-)` against `dW`, against `dL`, and over jumps
/// weighted by `x^2`.
fn classical_integrals(lp: &LevyPath) -> (f64, f64, f64) {
    let gr = lp.grid();
    let w = lp.brownian_nodes();
    let (mut dw_int, mut dl_int) = (0.0, 0.0);
    for j in 0..gr.n_cells() {
        let x = w[j].cos();
        dw_int += x * lp.dw()[j];
        dl_int += x * (lp.sigma() * lp.dw()[j] - lp.drift() * gr.width(j));
    }
    let mut jump_int = 0.0;
    for jp in lp.jumps().iter().filter(|j| j.time > 0.0) {
        let x = jp.brownian.cos();
        dl_int += x * jp.size;
        jump_int += x * jp.size * jp.size;
    }
    (dw_int, dl_int, jump_int)
}

#[test]
fn lambda_and_jump_measure_integrals_reduce_to_classical_ones() {
    let model = LevyModel::new(0.6, JumpSpec::compound_poisson(2.0, JumpLaw::Uniform { low: -1.0, high: 2.0 })).unwrap();
    let gr = grid(0.0, 256);
    let lps = paths(&model, &gr, 10_000, 6);
    let vals: Vec<(f64, f64, f64)> = lps.iter().map(classical_integrals).collect();
    let g = TestFunctional::single(0.4, Bump::new(0.5, 2.5, 1.0).mirrored(), 1.5, TimeProfile::gaussian(0.4, 0.2));
    let w = weights(&g, &model, &lps);
    let b = g.bind(&model).unwrap();
    let sigma = model.sigma();

    // X(0, t) = cos W(t-) / sigma, X(x, t) = 0 otherwise: the Brownian integral
    let sx = |x: f64, t: f64| if x == 0.0 { s_cos_w(&g, t) / sigma } else { 0.0 };
    let lam = s_lambda_rhs(&sx, &b, (0.0, 1.0), &spec()).unwrap();
    let mc = s_transform_mc(&vals.iter().map(|v| v.0).collect::<Vec<_>>(), &w).unwrap();
    assert!((mc.value - lam.value).abs() <= 3.0 * mc.std_error + lam.error, "dW: {mc:?} vs {lam:?}");

    // X(x, t) = x^2 cos W(t-) against the jump measure
    let sn = |x: f64, t: f64| x * x * s_cos_w(&g, t);
    let n = s_n_rhs(&sn, &b, (0.0, 1.0), &spec()).unwrap();
    let mc = s_transform_mc(&vals.iter().map(|v| v.2).collect::<Vec<_>>(), &w).unwrap();
    assert!((mc.value - n.value).abs() <= 3.0 * mc.std_error + n.error, "N: {mc:?} vs {n:?}");

    // X(t) = cos W(t-) against M = L
    let sd = |t: f64| s_cos_w(&g, t);
    let d = s_m_diamond_rhs(&sd, &IndicatorKernel, &b, (0.0, 1.0), &spec()).unwrap();
    let mc = s_transform_mc(&vals.iter().map(|v| v.1).collect::<Vec<_>>(), &w).unwrap();
    assert!((mc.value - d.value).abs() <= 3.0 * mc.std_error + d.error, "M: {mc:?} vs {d:?}");
}

#[test]
fn trivial_integrands_and_functionals() {
    let b = early().bind(&mixed()).unwrap();
    let z = TestFunctional::zero().bind(&mixed()).unwrap();
    let zero2 = |_: f64, _: f64| 0.0;
    let one2 = |_: f64, _: f64| 1.0;
    let k = FractionalKernel::new(0.25).unwrap();
    assert_eq!(s_lambda_rhs(&zero2, &b, (0.0, 1.0), &spec()).unwrap().value, 0.0);
    assert_eq!(s_lambda_rhs(&one2, &z, (0.0, 1.0), &spec()).unwrap().value, 0.0);
    assert_eq!(s_n_rhs(&zero2, &b, (0.0, 1.0), &spec()).unwrap().value, 0.0);
    assert_eq!(s_m_diamond_rhs(&|_| 0.0, &k, &b, (0.0, 1.0), &spec()).unwrap().value, 0.0);
    assert_eq!(s_m_diamond_rhs(&|_| 1.0, &k, &z, (0.0, 1.0), &spec()).unwrap().value, 0.0);
    // g = 0: only the compensator of the jump measure is left
    let n = s_n_rhs(&|x: f64, _| x * x, &z, (0.0, 0.5), &spec()).unwrap().value;
    assert!((n - 0.5 * mixed().nu_moment(2.0)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_in_the_functional(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let model = mixed();
        let lps = paths(&model, &grid(0.0, 32), 64, seed);
        let w = weights(&early(), &model, &lps);
        let phi: Vec<f64> = lps.iter().map(|l| l.values()[16]).collect();
        let psi: Vec<f64> = lps.iter().map(|l| l.values()[32].powi(2)).collect();
        let mix: Vec<f64> = phi.iter().zip(&psi).map(|(x, y)| a * x + b * y).collect();
        let lhs = s_transform_mc(&mix, &w).unwrap().value;
        let rhs = a * s_transform_mc(&phi, &w).unwrap().value + b * s_transform_mc(&psi, &w).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn s_m_is_linear_in_g(c in -2.0f64..2.0, t in 0.05f64..1.0) {
        let k = FractionalKernel::new(0.25).unwrap();
        let g = early();
        let one = s_m(&k, &g.bind(&mixed()).unwrap(), t, &spec()).unwrap().value;
        let scaled = s_m(&k, &g.scaled(c).bind(&mixed()).unwrap(), t, &spec()).unwrap().value;
        prop_assert!((scaled - c * one).abs() <= 1e-8 * (1.0 + one.abs()));
    }

    #[test]
    fn weights_are_finite(seed in any::<u64>()) {
        let model = mixed();
        let lps = paths(&model, &grid(0.0, 16), 8, seed);
        for (_, g) in battery() {
            prop_assert!(weights(&g, &model, &lps).iter().all(|w| w.is_finite()));
        }
    }
}

