//! Numerical integration over kernel domains, tails and jump measures.
//!
//! All routines return an [`Estimate`] carrying an error bound. Complex
//! integrands share the same subdivision logic through [`QuadValue`].

mod adaptive;
mod gauss;
mod nu;
mod rule;
mod tanh_sinh;

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adaptive::adaptive;
pub use gauss::gauss_legendre;
pub use nu::{nu_integrate, nu_integrate_with};
pub use rule::FixedRule;
pub use tanh_sinh::tanh_sinh;

/// Values that can be integrated: real or complex scalars.
pub trait QuadValue:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + 'static
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// An integral value together with an absolute error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate<V = f64> {
    pub value: V,
    pub error: f64,
    #[serde(skip)]
    pub evaluations: usize,
}

impl<V: QuadValue> Estimate<V> {
    pub fn new(value: V, error: f64) -> Self {
        Self { value, error, evaluations: 0 }
    }

    pub fn exact(value: V) -> Self {
        Self::new(value, 0.0)
    }

    pub fn scale(self, c: f64) -> Self {
        Self { value: self.value * c, error: self.error * c.abs(), evaluations: self.evaluations }
    }
}

impl<V: QuadValue> Add for Estimate<V> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
            evaluations: self.evaluations + rhs.evaluations,
        }
    }
}

/// Tolerances and limits shared by every integration routine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Truncation point `A` of past integrals; the remainder beyond `-A`
    /// is estimated from the power-law decay.
    pub tail_cutoff: f64,
    /// Optional `(beta, gamma)` exponents used when no explicit hints are given.
    pub singularity_exponents: Option<(f64, f64)>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
            tail_cutoff: 1e6,
            singularity_exponents: None,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.tail_cutoff > 0.0
            && self.max_subdivisions > 0
            && self.abs_tol.is_finite()
            && self.tail_cutoff.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!("bad quadrature spec {self:?}")));
        }
        if let Some((b, g)) = self.singularity_exponents {
            if !(0.0..1.0).contains(&b) || !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidParameter(format!(
                    "singularity exponents ({b}, {g}) outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    fn split(&self, pieces: usize) -> Self {
        Self { abs_tol: self.abs_tol / pieces.max(1) as f64, ..self.clone() }
    }
}

/// Power-singularity exponents `alpha` (integrand ~ |s - e|^-alpha, or a
/// Hoelder-`1 - alpha` kink) at the lower end, upper end and at `s = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EndpointExponents {
    pub lower: f64,
    pub upper: f64,
    pub zero: f64,
}

impl EndpointExponents {
    pub fn new(lower: f64, upper: f64, zero: f64) -> Self {
        Self { lower, upper, zero }
    }
}

/// Integrates `h` over `[a, b]` using endpoint power substitutions guided by
/// `hints` (or the spec's `singularity_exponents`). Falls back to tanh-sinh
/// when no hints are available.
pub fn integrate_singular<V: QuadValue>(
    h: &dyn Fn(f64) -> V,
    a: f64,
    b: f64,
    hints: Option<EndpointExponents>,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    spec.validate()?;
    if a > b {
        return integrate_singular(h, b, a, hints.map(|e| EndpointExponents::new(e.upper, e.lower, e.zero)), spec)
            .map(|e| e.scale(-1.0));
    }
    let hints = hints.or_else(|| {
        spec.singularity_exponents.map(|(beta, gamma)| EndpointExponents::new(0.0, gamma, beta))
    });
    let Some(e) = hints else {
        return tanh_sinh(h, a, b, spec.abs_tol, spec.rel_tol, 12);
    };
    for x in [e.lower, e.upper, e.zero] {
        if !(x < 1.0) {
            return Err(Error::InvalidParameter(format!("endpoint exponent {x} is not integrable")));
        }
    }
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(4);
    if a < 0.0 && b > 0.0 {
        pieces.push((a, 0.0, e.lower, e.zero));
        pieces.push((0.0, b, e.zero, e.upper));
    } else if b == 0.0 {
        pieces.push((a, b, e.lower, e.upper.max(e.zero)));
    } else if a == 0.0 {
        pieces.push((a, b, e.lower.max(e.zero), e.upper));
    } else {
        pieces.push((a, b, e.lower, e.upper));
    }
    let sub = spec.split(pieces.len() * 2);
    let mut total = Estimate::exact(V::zero());
    for (l, r, al, ar) in pieces {
        total = total + graded_piece(h, l, r, al, ar, &sub)?;
    }
    Ok(total)
}

/// `[l, r]` with power substitutions at singular ends (split at the midpoint
/// when both ends are singular).
pub(crate) fn graded_piece<V: QuadValue>(
    h: &dyn Fn(f64) -> V,
    l: f64,
    r: f64,
    al: f64,
    ar: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    if l == r {
        return Ok(Estimate::exact(V::zero()));
    }
    let run = |g: &dyn Fn(f64) -> V, a: f64, b: f64| {
        adaptive(g, a, b, spec.abs_tol, spec.rel_tol, spec.max_subdivisions)
    };
    match (al != 0.0, ar != 0.0) {
        (false, false) => run(h, l, r),
        (true, true) => {
            let m = 0.5 * (l + r);
            Ok(graded_piece(h, l, m, al, 0.0, spec)? + graded_piece(h, m, r, 0.0, ar, spec)?)
        }
        (true, false) => end_graded(h, l, r - l, al, spec),
        (false, true) => end_graded(h, r, l - r, ar, spec),
    }
}

/// Integral from the singular end `e` over a signed length `len`, with the
/// substitution `s = e + len w^p`. Near a non-zero end, points closer than
/// a few hundred ulps cannot be represented faithfully; that sliver is
/// replaced by the power-law integral `h(e + d) d / (1 - alpha)`.
fn end_graded<V: QuadValue>(
    h: &dyn Fn(f64) -> V,
    e: f64,
    len: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    let p = 1.0 / (1.0 - alpha);
    let span = len.abs();
    let sliver = 512.0 * f64::EPSILON * e.abs();
    let (w_min, end) = if e != 0.0 && span > 4.0 * sliver {
        let d = sliver * len.signum();
        let v = h(e + d) * (sliver / (1.0 - alpha));
        if !v.is_finite_value() {
            return Err(Error::NonFinite { at: e + d });
        }
        ((sliver / span).powf(1.0 / p), Estimate::new(v, 1e-3 * v.magnitude()))
    } else {
        (0.0, Estimate::exact(V::zero()))
    };
    let g = move |w: f64| {
        let s = e + len * w.powf(p);
        if s == e {
            return V::zero();
        }
        h(s) * (span * p * w.powf(p - 1.0))
    };
    let body = adaptive(&g, w_min, 1.0, spec.abs_tol, spec.rel_tol, spec.max_subdivisions)?;
    Ok(body + end)
}

/// Integrates `h` over `(-inf, b]`, `b < 0`, for an integrand decaying like
/// `|s|^-decay`. The range `[-A, b]` is mapped logarithmically; the remainder
/// beyond `-A` is extrapolated from the local power law and its uncertainty
/// is added to the error bound.
pub fn integrate_tail<V: QuadValue>(
    h: &dyn Fn(f64) -> V,
    b: f64,
    decay: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    spec.validate()?;
    if !(b < 0.0) {
        return Err(Error::InvalidParameter(format!("tail integral needs b < 0, got {b}")));
    }
    if !(decay > 1.0) {
        return Err(Error::SlowDecay { power: decay });
    }
    let cutoff = spec.tail_cutoff.max(2.0 * b.abs());
    let total = log_piece(h, b, cutoff, &spec.split(2))?;
    let h1 = h(-cutoff);
    let h2 = h(-0.5 * cutoff);
    if !(h1.is_finite_value() && h2.is_finite_value()) {
        return Err(Error::NonFinite { at: -cutoff });
    }
    let m1 = h1.magnitude();
    if m1 == 0.0 {
        return Ok(total);
    }
    let local = (h2.magnitude() / m1).log2();
    if local.is_finite() && local <= 1.0 && m1 * cutoff > spec.abs_tol {
        return Err(Error::SlowDecay { power: local });
    }
    let hinted = h1 * (cutoff / (decay - 1.0));
    let tail = if local.is_finite() && local > 1.0 {
        h1 * (cutoff / (local - 1.0))
    } else {
        hinted
    };
    let err = (tail - hinted).magnitude() + 1e-3 * tail.magnitude();
    Ok(total + Estimate::new(tail, err))
}

/// `int_{-cutoff}^b h(s) ds` for `b < 0` on the scale `s = b e^y`, one
/// adaptive panel per two units of `y`.
pub(crate) fn log_piece<V: QuadValue>(
    h: &dyn Fn(f64) -> V,
    b: f64,
    cutoff: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    let y_max = (cutoff / b.abs()).ln();
    let g = |y: f64| {
        let s = b * y.exp();
        h(s) * (-s)
    };
    let panels = (y_max / 2.0).ceil().max(1.0) as usize;
    let sub = spec.split(panels);
    let mut total = Estimate::exact(V::zero());
    for i in 0..panels {
        let y0 = y_max * i as f64 / panels as f64;
        let y1 = y_max * (i + 1) as f64 / panels as f64;
        total = total + adaptive(&g, y0, y1, sub.abs_tol, sub.rel_tol, sub.max_subdivisions)?;
    }
    Ok(total)
}
