//! Characteristic functions of `M(t)` under `P` and `Q_g`, their time
//! derivatives, and `S(G(M(t)))(g)` by Fourier inversion.
//!
//! Under `Q_g` the log characteristic function is
//! `iu S(M(t))(g) - sigma^2 u^2 v(t) / 2 + int ds int (e^{iuxf} - 1 - iuxf) (1 + g*(x, s)) nu(dx)`
//! with `v(t) = int f(t, s)^2 ds`.

mod testfn;

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{integrate_past, l2_norm_sq, Kernel};
use crate::levy::LevyModel;
use crate::quadrature::{adaptive, nu_integrate_with, Estimate, QuadratureSpec};
use crate::stransform::{ddt_s_m, s_m, BoundFunctional, TestFunctional};

pub use testfn::{CustomFunction, GSpec, GrowthClass, SmoothTestFunction};

/// Fourier integrands are cut where their bound drops below this.
pub const FOURIER_CUTOFF: f64 = 1e-10;

/// `e^{iz} - 1 - iz`, accurate for small `z`.
fn exp_i_minus_linear(z: f64) -> Complex64 {
    let half = (0.5 * z).sin();
    let im = if z.abs() < 1e-2 {
        let z3 = z * z * z;
        -z3 / 6.0 + z3 * z * z / 120.0
    } else {
        z.sin() - z
    };
    Complex64::new(-2.0 * half * half, im)
}

/// `e^{iz} - 1`.
fn exp_i_minus_one(z: f64) -> Complex64 {
    let half = (0.5 * z).sin();
    Complex64::new(-2.0 * half * half, z.sin())
}

fn decay(k: &dyn Kernel, extra: f64) -> f64 {
    let h = k.hints();
    if h.theta.is_finite() {
        (2.0 * h.theta).max(1.0 + extra)
    } else {
        16.0
    }
}

/// Log characteristic function of `M(t)` under `Q_g`.
pub fn log_cf_m_qg(
    k: &dyn Kernel,
    g: &BoundFunctional,
    t: f64,
    u: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<Complex64>> {
    if t <= 0.0 || u == 0.0 {
        return Ok(Estimate::exact(Complex64::new(0.0, 0.0)));
    }
    let sigma = g.sigma();
    let zero_g = g.functional().is_zero();
    let jumps = g.jumps();
    let has_jumps = !jumps.is_none();
    let h = |s: f64, lag: f64| -> Complex64 {
        let f = k.eval_lag(t, lag);
        if f == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut v = Complex64::new(-0.5 * sigma * sigma * u * u * f * f, if zero_g { 0.0 } else { u * f * g.eta(s) });
        if has_jumps {
            let jump = nu_integrate_with(jumps, |x: f64| exp_i_minus_linear(u * x * f) * (1.0 + g.gstar(x, s)), spec);
            v += jump.map(|e| e.value).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        }
        v
    };
    integrate_past(k, t, &h, decay(k, 0.0), spec)
}

/// `E^{Q_g} e^{iuM(t)}`.
pub fn cf_m_qg(k: &dyn Kernel, g: &BoundFunctional, t: f64, u: f64, spec: &QuadratureSpec) -> Result<Estimate<Complex64>> {
    let log = log_cf_m_qg(k, g, t, u, spec)?;
    let phi = log.value.exp();
    if !(phi.re.is_finite() && phi.im.is_finite()) {
        return Err(Error::NonFinite { at: u });
    }
    Ok(Estimate { value: phi, error: phi.norm() * log.error * 1.01, evaluations: log.evaluations })
}

/// `E e^{iuM(t)}` under `P`.
pub fn cf_m(k: &dyn Kernel, model: &LevyModel, t: f64, u: f64, spec: &QuadratureSpec) -> Result<Estimate<Complex64>> {
    let g = TestFunctional::zero().bind(model)?;
    cf_m_qg(k, &g, t, u, spec)
}

/// `d/dt E^{Q_g} e^{iuM(t)}` from the differentiated exponent.
pub fn ddt_cf_m_qg(
    k: &dyn Kernel,
    g: &BoundFunctional,
    t: f64,
    u: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<Complex64>> {
    if u == 0.0 {
        return Ok(Estimate::exact(Complex64::new(0.0, 0.0)));
    }
    let phi = cf_m_qg(k, g, t, u, spec)?;
    let bracket = ddt_log_cf(k, g, t, u, spec)?;
    Ok(Estimate {
        value: phi.value * bracket.value,
        error: phi.error * bracket.value.norm() + phi.value.norm() * bracket.error,
        evaluations: phi.evaluations + bracket.evaluations,
    })
}

/// Time derivative of [`log_cf_m_qg`].
pub fn ddt_log_cf(k: &dyn Kernel, g: &BoundFunctional, t: f64, u: f64, spec: &QuadratureSpec) -> Result<Estimate<Complex64>> {
    let sigma = g.sigma();
    let jumps = g.jumps();
    let has_jumps = !jumps.is_none();
    let zero_g = g.functional().is_zero();
    let iu = Complex64::new(0.0, u);
    let fd = k.diagonal(t);
    let mut diag = Complex64::new(-0.5 * sigma * sigma * u * u * fd * fd, if zero_g { 0.0 } else { u * fd * g.eta(t) });
    if has_jumps && fd != 0.0 {
        diag += nu_integrate_with(jumps, |x: f64| exp_i_minus_linear(u * x * fd) * (1.0 + g.gstar(x, t)), spec)?.value;
    }
    if t <= 0.0 {
        return Ok(Estimate::exact(diag));
    }
    let h = |s: f64, lag: f64| -> Complex64 {
        let dt = k.eval_dt_lag(t, lag);
        if dt == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let f = k.eval_lag(t, lag);
        let mut v = Complex64::new(-sigma * sigma * u * u * f * dt, if zero_g { 0.0 } else { u * dt * g.eta(s) });
        if has_jumps {
            let jump = nu_integrate_with(jumps, |x: f64| iu * x * dt * exp_i_minus_one(u * x * f) * (1.0 + g.gstar(x, s)), spec);
            v += jump.map(|e| e.value).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        }
        v
    };
    let hints = k.hints();
    let body = integrate_past(k, t, &h, decay(k, hints.dt_decay), spec)?;
    Ok(body + Estimate::exact(diag))
}

/// Everything the Fourier route needs about `M(t)` under `Q_g`.
struct Damping {
    /// `sigma^2 v(t)`.
    gauss_var: f64,
    /// `e_g = (E w^2)^1/2`, a bound on `|cf_M_Qg|`.
    e_g: f64,
}

fn damping(k: &dyn Kernel, g: &BoundFunctional, t: f64, spec: &QuadratureSpec) -> Result<Damping> {
    let v = l2_norm_sq(k, t, spec)?.value;
    Ok(Damping { gauss_var: g.sigma().powi(2) * v, e_g: g.weight_second_moment()?.sqrt() })
}

/// Upper end of the `u`-window: beyond it `|F(G^(order))(u) cf(u)|` is
/// below [`FOURIER_CUTOFF`].
fn u_window(gt: &SmoothTestFunction, order: u32, d: &Damping) -> Result<f64> {
    let (amp, width) = match gt.fourier_envelope() {
        Some(e) => e,
        None => {
            if d.gauss_var <= 0.0 {
                return Err(Error::FourierRoute(format!(
                    "{} has no Gaussian envelope and M(t) has no Gaussian damping",
                    gt.label()
                )));
            }
            let a = gt.fourier(0, 0.0).map(|z| z.norm()).unwrap_or(1.0).max(1.0);
            (a, 0.0)
        }
    };
    let rate = width * width + d.gauss_var;
    let target = FOURIER_CUTOFF / (amp * d.e_g).max(1e-300);
    let mut u = (2.0 * (-target.ln()).max(1.0) / rate).sqrt();
    // polynomial prefactors from derivatives push the cut a little further
    for _ in 0..60 {
        if amp * d.e_g * u.powi(order as i32 + 1) * (-0.5 * rate * u * u).exp() < FOURIER_CUTOFF {
            break;
        }
        u *= 1.1;
    }
    Ok(u)
}

/// `S(G^(order)(M(t)))(g)` for `order <= 2`.
///
/// Integrable `G` use `(2 pi)^-1/2 int F(G^(order))(u) cf_M_Qg(t, u) du`;
/// cosines read the characteristic function directly; polynomials use the
/// moments of `M(t)` under `Q_g` and require `sigma > 0`.
pub fn s_g_derivative(
    gt: &SmoothTestFunction,
    order: u32,
    k: &dyn Kernel,
    g: &BoundFunctional,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    match gt {
        SmoothTestFunction::Constant(c) => Ok(Estimate::exact(if order == 0 { *c } else { 0.0 })),
        SmoothTestFunction::Cosine { freq } => {
            let phi = cf_m_qg(k, g, t, *freq, spec)?;
            let factor = Complex64::new(0.0, *freq).powu(order);
            Ok(Estimate::new((factor * phi.value).re, phi.error * factor.norm()))
        }
        SmoothTestFunction::Polynomial(c) => {
            polynomial_gate(g)?;
            let d = poly_derivative(c, order);
            let (m, _) = q_moments(k, g, t, d.len().saturating_sub(1), false, spec)?;
            let value: f64 = d.iter().zip(&m).map(|(c, m)| c * m).sum();
            let scale: f64 = d.iter().zip(&m).map(|(c, m)| (c * m).abs()).sum();
            Ok(Estimate::new(value, 1e-8 * scale + spec.abs_tol))
        }
        _ => fourier_route(gt, order, k, g, t, spec, false),
    }
}

/// `S(G(M(t)))(g)`.
pub fn s_g_of_m(gt: &SmoothTestFunction, k: &dyn Kernel, g: &BoundFunctional, t: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    s_g_derivative(gt, 0, k, g, t, spec)
}

/// `d/dt S(G(M(t)))(g)`.
pub fn ddt_s_g_of_m(
    gt: &SmoothTestFunction,
    k: &dyn Kernel,
    g: &BoundFunctional,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    match gt {
        SmoothTestFunction::Constant(_) => Ok(Estimate::exact(0.0)),
        SmoothTestFunction::Cosine { freq } => {
            let d = ddt_cf_m_qg(k, g, t, *freq, spec)?;
            Ok(Estimate::new(d.value.re, d.error))
        }
        SmoothTestFunction::Polynomial(c) => {
            polynomial_gate(g)?;
            let n = c.len().saturating_sub(1);
            let (_, dm) = q_moments(k, g, t, n, true, spec)?;
            let value: f64 = c.iter().zip(&dm).map(|(c, m)| c * m).sum();
            let scale: f64 = c.iter().zip(&dm).map(|(c, m)| (c * m).abs()).sum();
            Ok(Estimate::new(value, 1e-8 * scale + spec.abs_tol))
        }
        _ => fourier_route(gt, 0, k, g, t, spec, true),
    }
}

fn polynomial_gate(g: &BoundFunctional) -> Result<()> {
    if g.sigma() > 0.0 {
        Ok(())
    } else {
        Err(Error::FourierRoute(
            "polynomial G needs sigma > 0 (no Gaussian damping of the characteristic function)".into(),
        ))
    }
}

fn fourier_route(
    gt: &SmoothTestFunction,
    order: u32,
    k: &dyn Kernel,
    g: &BoundFunctional,
    t: f64,
    spec: &QuadratureSpec,
    derivative: bool,
) -> Result<Estimate> {
    if gt.fourier(order, 0.0).is_none() {
        return Err(Error::FourierRoute(format!("{} has no Fourier transform", gt.label())));
    }
    let d = damping(k, g, t, spec)?;
    let upper = u_window(gt, order, &d)?;
    let inner = QuadratureSpec { abs_tol: spec.abs_tol.max(1e-13), rel_tol: spec.rel_tol.max(1e-11), ..spec.clone() };
    let err_acc = std::cell::Cell::new(0.0_f64);
    let failure = std::cell::RefCell::new(None);
    let h = |u: f64| -> f64 {
        let fg = gt.fourier(order, u).unwrap_or_default();
        let c = if derivative { ddt_cf_m_qg(k, g, t, u, &inner) } else { cf_m_qg(k, g, t, u, &inner) };
        match c {
            Ok(c) => {
                err_acc.set(err_acc.get().max(fg.norm() * c.error));
                (fg * c.value).re
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let tol = spec.abs_tol.max(1e-10);
    let est = adaptive(&h, 0.0, upper, tol, spec.rel_tol.max(1e-9), spec.max_subdivisions);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let est = est?;
    let norm = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
    let quad_err = est.error + err_acc.get() * upper + 2.0 * FOURIER_CUTOFF;
    Ok(Estimate { value: norm * est.value, error: norm * quad_err, evaluations: est.evaluations })
}

fn poly_derivative(c: &[f64], order: u32) -> Vec<f64> {
    let mut d = c.to_vec();
    for _ in 0..order {
        d = if d.len() <= 1 { vec![0.0] } else { d.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect() };
    }
    d
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Raw moments `E^{Q_g} M(t)^n`, `n <= max`, and (if asked) their time
/// derivatives, from the cumulants of `M(t)` under `Q_g`.
fn q_moments(
    k: &dyn Kernel,
    g: &BoundFunctional,
    t: f64,
    max: usize,
    with_derivative: bool,
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut kappa = vec![0.0; max + 1];
    let mut dkappa = vec![0.0; max + 1];
    let jumps = g.jumps();
    let sigma2 = g.sigma().powi(2);
    let fd = k.diagonal(t);
    for n in 1..=max {
        let nu_n = |s: f64| -> f64 {
            if jumps.is_none() {
                return 0.0;
            }
            nu_integrate_with(jumps, |x: f64| x.powi(n as i32) * (1.0 + g.gstar(x, s)), spec)
                .map(|e| e.value)
                .unwrap_or(f64::NAN)
        };
        if n == 1 {
            kappa[1] = s_m(k, g, t, spec)?.value;
            if with_derivative {
                dkappa[1] = ddt_s_m(k, g, t, spec)?.value;
            }
            continue;
        }
        if t > 0.0 {
            let h = |s: f64, lag: f64| {
                let f = k.eval_lag(t, lag);
                let base = if n == 2 { sigma2 } else { 0.0 };
                f.powi(n as i32) * (base + nu_n(s))
            };
            kappa[n] = integrate_past(k, t, &h, decay(k, 0.0), spec)?.value;
        }
        if with_derivative {
            let base = if n == 2 { sigma2 } else { 0.0 };
            let mut d = fd.powi(n as i32) * (base + if fd != 0.0 { nu_n(t) } else { 0.0 });
            if t > 0.0 {
                let h = |s: f64, lag: f64| {
                    let f = k.eval_lag(t, lag);
                    n as f64 * f.powi(n as i32 - 1) * k.eval_dt_lag(t, lag) * (base + nu_n(s))
                };
                d += integrate_past(k, t, &h, decay(k, k.hints().dt_decay), spec)?.value;
            }
            dkappa[n] = d;
        }
    }
    let mut m = vec![0.0; max + 1];
    let mut dm = vec![0.0; max + 1];
    m[0] = 1.0;
    for n in 1..=max {
        for j in 1..=n {
            let c = binomial(n - 1, j - 1);
            m[n] += c * kappa[j] * m[n - j];
            dm[n] += c * (dkappa[j] * m[n - j] + kappa[j] * dm[n - j]);
        }
    }
    Ok((m, dm))
}

/// Writes `t, u, re, im, error_bound` for every lattice point.
pub fn write_cf_lattice<W: Write>(
    k: &dyn Kernel,
    g: &BoundFunctional,
    ts: &[f64],
    us: &[f64],
    spec: &QuadratureSpec,
    out: W,
) -> Result<()> {
    use crate::levy::fmt;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "u", "re", "im", "error_bound"])?;
    for &t in ts {
        for &u in us {
            let c = cf_m_qg(k, g, t, u, spec)?;
            w.write_record([fmt(t), fmt(u), fmt(c.value.re), fmt(c.value.im), fmt(c.error)])?;
        }
    }
    w.flush()?;
    Ok(())
}
