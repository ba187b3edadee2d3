use std::f64::consts::PI;

use levy_volterra::levy::{JumpLaw, JumpSpec};
use levy_volterra::quadrature::{
    adaptive, integrate_singular, integrate_tail, nu_integrate, EndpointExponents, Estimate, QuadratureSpec,
};
use num_complex::Complex64;
use proptest::prelude::*;
use statrs::function::beta::beta;
use statrs::function::erf::erf;

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn hints(lower: f64, upper: f64) -> Option<EndpointExponents> {
    Some(EndpointExponents::new(lower, upper, 0.0))
}

#[test]
fn inverse_square_root() {
    let e = integrate_singular(&|s: f64| s.powf(-0.5), 0.0, 1.0, hints(0.5, 0.0), &spec()).unwrap();
    assert!((e.value - 2.0).abs() < 1e-12);
    assert!(e.error <= 1e-10_f64.max(1e-10 * e.value.abs()) + 1e-12);
}

#[test]
fn constant() {
    let e = integrate_singular(&|_s: f64| 1.0, 0.0, 1.0, None, &spec()).unwrap();
    assert!((e.value - 1.0).abs() < 1e-14);
}

#[test]
fn beta_function_oracle() {
    let h = |s: f64| s.powf(-0.25) * (1.0 - s).powf(-0.5);
    let e = integrate_singular(&h, 0.0, 1.0, hints(0.25, 0.5), &spec()).unwrap();
    let exact = beta(0.75, 0.5);
    assert!((e.value - exact).abs() < 1e-10, "{} vs {exact}", e.value);
}

#[test]
fn power_tail() {
    let e = integrate_tail(&|s: f64| s.powi(-2), -1.0, 2.0, &spec()).unwrap();
    assert!((e.value - 1.0).abs() < 1e-9, "{}", e.value);
    let z = integrate_tail(&|_s: f64| 0.0, -1.0, 2.0, &spec()).unwrap();
    assert_eq!(z.value, 0.0);
}

#[test]
fn slow_decay_is_rejected() {
    assert!(integrate_tail(&|s: f64| s.abs().powf(-0.8), -1.0, 0.8, &spec()).is_err());
    assert!(integrate_tail(&|s: f64| s.abs().powf(-0.8), -1.0, 2.0, &spec()).is_err());
}

#[test]
fn atoms_and_complex_integrands() {
    let nu = JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0));
    let e = nu_integrate(&nu, &|x: f64| x * x, &spec()).unwrap();
    assert_eq!(e.value, 8.0);
    let zero = nu_integrate(&nu, &|_x: f64| 0.0, &spec()).unwrap();
    assert_eq!(zero.value, 0.0);
    let h = |x: f64| Complex64::new(0.0, x).exp() - 1.0 - Complex64::new(0.0, x);
    let e = nu_integrate(&nu, &h, &spec()).unwrap();
    let exact = (Complex64::new(0.0, 2.0).exp() - 1.0 - Complex64::new(0.0, 2.0)) * 2.0;
    assert!((e.value - exact).norm() < 1e-15);
    // series: sum_{n>=2} (2i)^n / n!
    let mut series = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for n in 1..40 {
        term = term * Complex64::new(0.0, 2.0) / n as f64;
        if n >= 2 {
            series += term;
        }
    }
    assert!((e.value - series * 2.0).norm() < 1e-13);
}

#[test]
fn density_measures() {
    let nu = JumpSpec::compound_poisson(5.0, JumpLaw::Uniform { low: -1.0, high: 1.0 });
    let e = nu_integrate(&nu, &|x: f64| x * x, &spec()).unwrap();
    assert!((e.value - 5.0 / 3.0).abs() < 1e-12);
    let ts = JumpSpec::tempered_stable(0.5, 1.0, 1.0);
    let e = nu_integrate(&ts, &|x: f64| x * x, &spec()).unwrap();
    let exact = 2.0 * statrs::function::gamma::gamma(1.5);
    assert!((e.value - exact).abs() < 1e-9, "{} vs {exact}", e.value);
    assert!(nu_integrate(&ts, &|x: f64| x.abs(), &spec()).is_err());
}

struct Case {
    name: &'static str,
    exact: f64,
    run: Box<dyn Fn() -> Estimate>,
}

fn battery() -> Vec<Case> {
    let s = spec();
    let mut v: Vec<Case> = Vec::new();
    macro_rules! case {
        ($name:expr, $exact:expr, $body:expr) => {{
            let s = s.clone();
            let _ = &s;
            v.push(Case { name: $name, exact: $exact, run: Box::new(move || $body(&s)) });
        }};
    }
    case!("s^-1/2", 2.0, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.powf(-0.5), 0.0, 1.0, hints(0.5, 0.0), s).unwrap());
    case!("one", 1.0, |s: &QuadratureSpec| integrate_singular(&|_x: f64| 1.0, 0.0, 1.0, None, s).unwrap());
    case!("beta(.75,.5)", beta(0.75, 0.5), |s: &QuadratureSpec| integrate_singular(&|x: f64| x.powf(-0.25) * (1.0 - x).powf(-0.5), 0.0, 1.0, hints(0.25, 0.5), s).unwrap());
    case!("sin", 2.0, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.sin(), 0.0, PI, hints(0.0, 0.0), s).unwrap());
    case!("exp", 1f64.exp() - 1.0, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.exp(), 0.0, 1.0, None, s).unwrap());
    case!("log", -1.0, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.ln(), 0.0, 1.0, None, s).unwrap());
    case!("s^-0.9", 10.0, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.powf(-0.9), 0.0, 1.0, hints(0.9, 0.0), s).unwrap());
    case!("|s|^-1/2 on [-1,1]", 4.0, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.abs().powf(-0.5), -1.0, 1.0, Some(EndpointExponents::new(0.0, 0.0, 0.5)), s).unwrap());
    case!("runge", 5f64.atan() / 5.0, |s: &QuadratureSpec| adaptive(&|x: f64| 1.0 / (1.0 + 25.0 * x * x), 0.0, 1.0, s.abs_tol, s.rel_tol, s.max_subdivisions).unwrap());
    case!("cos^2(10x)", PI, |s: &QuadratureSpec| adaptive(&|x: f64| (10.0 * x).cos().powi(2), 0.0, 2.0 * PI, s.abs_tol, s.rel_tol, s.max_subdivisions).unwrap());
    case!("tail s^-2", 1.0, |s: &QuadratureSpec| integrate_tail(&|x: f64| x.powi(-2), -1.0, 2.0, s).unwrap());
    case!("tail s^-1.5", 2.0, |s: &QuadratureSpec| integrate_tail(&|x: f64| x.abs().powf(-1.5), -1.0, 1.5, s).unwrap());
    case!("tail s^-3 from -2", 0.125, |s: &QuadratureSpec| integrate_tail(&|x: f64| x.abs().powi(-3), -2.0, 3.0, s).unwrap());
    case!("sqrt", 2.0 / 3.0, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.sqrt(), 0.0, 1.0, None, s).unwrap());
    case!("beta(.7,.3)", PI / (0.3 * PI).sin(), |s: &QuadratureSpec| integrate_singular(&|x: f64| x.powf(-0.3) * (1.0 - x).powf(-0.7), 0.0, 1.0, hints(0.3, 0.7), s).unwrap());
    case!("exp decay", 1.0 - (-10f64).exp(), |s: &QuadratureSpec| adaptive(&|x: f64| (-x).exp(), 0.0, 10.0, s.abs_tol, s.rel_tol, s.max_subdivisions).unwrap());
    case!("gauss", (2.0 * PI).sqrt() * erf(3.0 / 2f64.sqrt()), |s: &QuadratureSpec| adaptive(&|x: f64| (-0.5 * x * x).exp(), -3.0, 3.0, s.abs_tol, s.rel_tol, s.max_subdivisions).unwrap());
    case!("x^20", 1.0 / 21.0, |s: &QuadratureSpec| adaptive(&|x: f64| x.powi(20), 0.0, 1.0, s.abs_tol, s.rel_tol, s.max_subdivisions).unwrap());
    case!("tail mixed", 1.5, |s: &QuadratureSpec| integrate_tail(&|x: f64| x.powi(-2) + x.abs().powi(-3), -1.0, 2.0, s).unwrap());
    case!("kink", 0.5, |s: &QuadratureSpec| integrate_singular(&|x: f64| x.abs(), -1.0, 0.0, hints(0.0, 0.0), s).unwrap());
    v
}

#[test]
fn error_bounds_are_honest() {
    let cases = battery();
    assert_eq!(cases.len(), 20);
    let mut honest = 0;
    for c in &cases {
        let e = (c.run)();
        let err = (e.value - c.exact).abs();
        let floor = 4.0 * f64::EPSILON * c.exact.abs();
        assert!(err <= 10.0 * e.error + floor, "{}: error {err:e} vs bound {:e}", c.name, e.error);
        if err <= e.error + floor {
            honest += 1;
        }
    }
    assert!(honest * 100 >= 95 * cases.len(), "only {honest} of {} bounds held", cases.len());
}

#[test]
fn complex_integrands_share_subdivision() {
    let e = adaptive(&|x: f64| Complex64::new(0.0, x).exp(), 0.0, 1.0, 1e-13, 1e-12, 100).unwrap();
    let exact = Complex64::new(1f64.sin(), 1.0 - 1f64.cos());
    assert!((e.value - exact).norm() < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, w in 0.5f64..8.0) {
        let s = spec();
        let h1 = |x: f64| x.powf(-0.3) * (w * x).cos();
        let h2 = |x: f64| (1.0 - x).powf(-0.6);
        let hints = hints(0.3, 0.6);
        let i1 = integrate_singular(&h1, 0.0, 1.0, hints, &s).unwrap();
        let i2 = integrate_singular(&h2, 0.0, 1.0, hints, &s).unwrap();
        let ic = integrate_singular(&|x: f64| a * h1(x) + b * h2(x), 0.0, 1.0, hints, &s).unwrap();
        let tol = a.abs() * i1.error + b.abs() * i2.error + ic.error + 1e-13;
        prop_assert!((ic.value - (a * i1.value + b * i2.value)).abs() <= tol);
    }
}
