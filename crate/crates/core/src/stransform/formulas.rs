//! Deterministic S-transforms of `M` and of the anticipating integrals
//! built on it, evaluated by quadrature.

use super::functional::BoundFunctional;
use crate::error::Result;
use crate::kernels::{integrate_past, Kernel};
use crate::quadrature::{adaptive, nu_integrate_with, Estimate, QuadratureSpec};

/// Decay hint for integrands carrying a Gaussian time profile.
const FAST_DECAY: f64 = 16.0;

/// `S(M(t))(g) = int f(t, s) eta_g(s) ds` with
/// `eta_g = sigma g(0, .) + int x g*(x, .) nu(dx)`.
pub fn s_m(k: &dyn Kernel, g: &BoundFunctional, t: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if t <= 0.0 || g.functional().is_zero() {
        return Ok(Estimate::exact(0.0));
    }
    let h = |s: f64, lag: f64| k.eval_lag(t, lag) * g.eta(s);
    integrate_past(k, t, &h, FAST_DECAY, spec)
}

/// `d/dt S(M(t))(g) = f(t, t) eta_g(t) + int d_t f(t, s) eta_g(s) ds`.
pub fn ddt_s_m(k: &dyn Kernel, g: &BoundFunctional, t: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if g.functional().is_zero() {
        return Ok(Estimate::exact(0.0));
    }
    let diag = k.diagonal(t) * g.eta(t);
    if t <= 0.0 {
        return Ok(Estimate::exact(diag));
    }
    let h = |s: f64, lag: f64| k.eval_dt_lag(t, lag) * g.eta(s);
    Ok(integrate_past(k, t, &h, FAST_DECAY, spec)? + Estimate::exact(diag))
}

/// Right side of the defining identity of the Lambda-integral:
/// `int_a^b [sigma sX(0, t) g(0, t) + int sX(x, t) x g*(x, t) nu(dx)] dt`.
pub fn s_lambda_rhs(
    sx: &dyn Fn(f64, f64) -> f64,
    g: &BoundFunctional,
    domain: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    let inner = |t: f64| -> f64 {
        let gauss = g.sigma() * sx(0.0, t) * g.g0(t);
        let jumps = nu_integrate_with(g.jumps(), |x: f64| sx(x, t) * x * g.gstar(x, t), spec)
            .map(|e| e.value)
            .unwrap_or(f64::NAN);
        gauss + jumps
    };
    outer(&inner, g, domain, spec)
}

/// `int_a^b int sX(x, t) (1 + g*(x, t)) nu(dx) dt`, the S-transform of the
/// integral against the jump measure.
pub fn s_n_rhs(
    sx: &dyn Fn(f64, f64) -> f64,
    g: &BoundFunctional,
    domain: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    let inner = |t: f64| -> f64 {
        nu_integrate_with(g.jumps(), |x: f64| sx(x, t) * (1.0 + g.gstar(x, t)), spec)
            .map(|e| e.value)
            .unwrap_or(f64::NAN)
    };
    let (a, b) = domain;
    if a >= b {
        return Ok(Estimate::exact(0.0));
    }
    adaptive(&inner, a, b, spec.abs_tol, spec.rel_tol, spec.max_subdivisions)
}

/// `int_a^b sX(t) d/dt S(M(t))(g) dt`, the S-transform of the integral
/// against `M`.
pub fn s_m_diamond_rhs(
    sx: &dyn Fn(f64) -> f64,
    k: &dyn Kernel,
    g: &BoundFunctional,
    domain: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    let (a, b) = domain;
    if a >= b || g.functional().is_zero() {
        return Ok(Estimate::exact(0.0));
    }
    let inner_spec = QuadratureSpec { abs_tol: spec.abs_tol * 1e-2, ..spec.clone() };
    let h = |t: f64| sx(t) * ddt_s_m(k, g, t, &inner_spec).map(|e| e.value).unwrap_or(f64::NAN);
    adaptive(&h, a, b, spec.abs_tol, spec.rel_tol, spec.max_subdivisions)
}

/// Time integral restricted to where the time profiles of `g` live.
fn outer(inner: &dyn Fn(f64) -> f64, g: &BoundFunctional, domain: (f64, f64), spec: &QuadratureSpec) -> Result<Estimate> {
    let (lo, hi) = g.functional().support();
    let (a, b) = (domain.0.max(lo), domain.1.min(hi));
    if a >= b || g.functional().is_zero() {
        return Ok(Estimate::exact(0.0));
    }
    adaptive(inner, a, b, spec.abs_tol, spec.rel_tol, spec.max_subdivisions)
}
