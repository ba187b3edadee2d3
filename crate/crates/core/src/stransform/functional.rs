//! Test functionals `g(x, t) = sum mu_j g1_j(x) g2_j(t)` and their
//! jump-measure coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::levy::{JumpSpec, LevyModel};
use crate::quadrature::{adaptive, nu_integrate, QuadratureSpec};

/// Smooth bump `height * exp(1 - 1 / (1 - z^2))` on `[low, high]`,
/// `z` the position rescaled to `(-1, 1)`. With `mirrored` the same bump
/// also sits on `[-high, -low]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub low: f64,
    pub high: f64,
    pub height: f64,
    #[serde(default)]
    pub mirrored: bool,
}

impl Bump {
    pub fn new(low: f64, high: f64, height: f64) -> Self {
        Self { low, high, height, mirrored: false }
    }

    pub fn mirrored(mut self) -> Self {
        self.mirrored = true;
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = if self.mirrored { x.abs() } else { x };
        if y <= self.low || y >= self.high {
            return 0.0;
        }
        let z = (2.0 * y - self.low - self.high) / (self.high - self.low);
        self.height * (1.0 - 1.0 / (1.0 - z * z)).exp()
    }

    fn validate(&self) -> Result<()> {
        ensure(self.low > 0.0 && self.high > self.low && self.high.is_finite(), || {
            format!("bump support [{}, {}] must lie in (0, inf)", self.low, self.high)
        })?;
        ensure(self.height.is_finite(), || "bump height must be finite".into())
    }
}

/// `P(y) exp(-y^2 / 2)` with `y = (t - centre) / width` and `P` given by
/// its coefficients in increasing degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    pub centre: f64,
    pub width: f64,
    pub poly: Vec<f64>,
}

impl TimeProfile {
    pub fn gaussian(centre: f64, width: f64) -> Self {
        Self { centre, width, poly: vec![1.0] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let y = (t - self.centre) / self.width;
        let p = self.poly.iter().rev().fold(0.0, |acc, c| acc * y + c);
        p * (-0.5 * y * y).exp()
    }

    /// Interval outside which the profile is below roundoff.
    pub fn support(&self) -> (f64, f64) {
        let r = 12.0 * self.width;
        (self.centre - r, self.centre + r)
    }

    fn validate(&self) -> Result<()> {
        ensure(self.width > 0.0 && self.width.is_finite(), || format!("profile width {} must be positive", self.width))?;
        ensure(!self.poly.is_empty(), || "profile needs at least one coefficient".into())
    }
}

/// One product term `mu * g1(x) * g2(t)`; `gauss` is the value taken at
/// `x = 0`, which drives the Brownian part of the change of measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub mu: f64,
    pub jump: Bump,
    #[serde(default)]
    pub gauss: f64,
    pub time: TimeProfile,
}

/// A test functional: a finite sum of product terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestFunctional {
    pub terms: Vec<Term>,
}

impl TestFunctional {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(mu: f64, jump: Bump, gauss: f64, time: TimeProfile) -> Self {
        Self { terms: vec![Term { mu, jump, gauss, time }] }
    }

    pub fn plus(mut self, other: TestFunctional) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn scaled(mut self, c: f64) -> Self {
        for t in &mut self.terms {
            t.mu *= c;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.mu == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            ensure(t.mu.is_finite() && t.gauss.is_finite(), || "non-finite coefficient in g".into())?;
            t.jump.validate()?;
            t.time.validate()?;
        }
        Ok(())
    }

    /// `g(x, t)`; `x = 0` gives the Gaussian channel.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        if x == 0.0 {
            return self.g0(t);
        }
        self.terms.iter().map(|c| c.mu * c.jump.eval(x) * c.time.eval(t)).sum()
    }

    pub fn g0(&self, t: f64) -> f64 {
        self.terms.iter().map(|c| c.mu * c.gauss * c.time.eval(t)).sum()
    }

    /// `g*(x, t) = x g(x, t)`.
    pub fn gstar(&self, x: f64, t: f64) -> f64 {
        x * self.eval(x, t)
    }

    /// Smallest interval containing the time support of every term.
    pub fn support(&self) -> (f64, f64) {
        self.terms.iter().map(|t| t.time.support()).fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| {
            (a.0.min(b.0), a.1.max(b.1))
        })
    }

    /// Binds the functional to a driver, precomputing its `nu` moments.
    pub fn bind(&self, model: &LevyModel) -> Result<BoundFunctional> {
        BoundFunctional::new(self.clone(), model)
    }
}

/// A test functional together with the driver quantities
/// `kappa(t) = int x g*(x, t) nu(dx)` and `rho(t) = int g*(x, t) nu(dx)`.
#[derive(Clone, Debug)]
pub struct BoundFunctional {
    g: TestFunctional,
    sigma: f64,
    jumps: JumpSpec,
    second: Vec<f64>,
    first: Vec<f64>,
}

impl BoundFunctional {
    pub fn new(g: TestFunctional, model: &LevyModel) -> Result<Self> {
        g.validate()?;
        let spec = QuadratureSpec::with_tolerances(1e-14, 1e-12);
        let jumps = model.jumps().clone();
        let mut second = Vec::with_capacity(g.terms.len());
        let mut first = Vec::with_capacity(g.terms.len());
        for t in &g.terms {
            let b = &t.jump;
            second.push(nu_integrate(&jumps, &|x: f64| x * x * b.eval(x), &spec)?.value);
            first.push(nu_integrate(&jumps, &|x: f64| x * b.eval(x), &spec)?.value);
        }
        Ok(Self { g, sigma: model.sigma(), jumps, second, first })
    }

    pub fn functional(&self) -> &TestFunctional {
        &self.g
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jumps(&self) -> &JumpSpec {
        &self.jumps
    }

    pub fn g0(&self, t: f64) -> f64 {
        self.g.g0(t)
    }

    pub fn gstar(&self, x: f64, t: f64) -> f64 {
        self.g.gstar(x, t)
    }

    pub fn kappa(&self, t: f64) -> f64 {
        self.g.terms.iter().zip(&self.second).map(|(c, a)| c.mu * a * c.time.eval(t)).sum()
    }

    pub fn rho(&self, t: f64) -> f64 {
        self.g.terms.iter().zip(&self.first).map(|(c, b)| c.mu * b * c.time.eval(t)).sum()
    }

    /// Density of the drift that `g` adds to the driver: `sigma g(0, t) + kappa(t)`.
    pub fn eta(&self, t: f64) -> f64 {
        self.sigma * self.g0(t) + self.kappa(t)
    }

    /// `int_a^b rho(t) dt`.
    pub fn rho_integral(&self, a: f64, b: f64) -> Result<f64> {
        let mut total = 0.0;
        for (c, coef) in self.g.terms.iter().zip(&self.first) {
            if *coef == 0.0 || c.mu == 0.0 {
                continue;
            }
            total += c.mu * coef * profile_integral(&c.time, a, b, &|t| c.time.eval(t))?;
        }
        Ok(total)
    }

    /// `e_g^2 = E w^2 = exp(int g(0, t)^2 dt + int int g*(x, t)^2 nu(dx) dt)`.
    pub fn weight_second_moment(&self) -> Result<f64> {
        let spec = QuadratureSpec::with_tolerances(1e-14, 1e-12);
        let terms = &self.g.terms;
        let mut expo = 0.0;
        for ci in terms {
            for cj in terms {
                let (lo, hi) = (ci.time.support().0.max(cj.time.support().0), ci.time.support().1.min(cj.time.support().1));
                if lo >= hi {
                    continue;
                }
                let cross = adaptive(&|t| ci.time.eval(t) * cj.time.eval(t), lo, hi, 1e-14, 1e-12, 500)?.value;
                let (bi, bj) = (&ci.jump, &cj.jump);
                let jump = nu_integrate(&self.jumps, &|x: f64| x * x * bi.eval(x) * bj.eval(x), &spec)?.value;
                expo += ci.mu * cj.mu * cross * (ci.gauss * cj.gauss + jump);
            }
        }
        Ok(expo.exp())
    }
}

fn profile_integral(p: &TimeProfile, a: f64, b: f64, h: &dyn Fn(f64) -> f64) -> Result<f64> {
    let (lo, hi) = p.support();
    let (a, b) = (a.max(lo), b.min(hi));
    if a >= b {
        return Ok(0.0);
    }
    Ok(adaptive(h, a, b, 1e-14, 1e-12, 500)?.value)
}

/// The built-in battery of eight test functionals, scaled so that the
/// Doleans weights keep a moderate variance for unit-size drivers.
pub fn battery() -> Vec<(&'static str, TestFunctional)> {
    let atom = Bump::new(1.5, 2.5, 1.0);
    let wide = Bump::new(0.2, 3.0, 1.0);
    let poly = |centre: f64, width: f64, poly: Vec<f64>| TimeProfile { centre, width, poly };
    vec![
        ("early", TestFunctional::single(0.3, atom.clone(), 1.5, TimeProfile::gaussian(0.25, 0.15))),
        ("middle", TestFunctional::single(0.25, atom.clone(), 2.5, poly(0.5, 0.2, vec![1.0, 0.5]))),
        ("late", TestFunctional::single(0.35, wide.clone(), 1.2, TimeProfile::gaussian(0.75, 0.1))),
        ("jump_only", TestFunctional::single(0.25, wide.clone(), 0.0, poly(0.5, 0.3, vec![1.0, 0.0, -0.3]))),
        ("signed", TestFunctional::single(-0.8, atom.clone(), -0.4, TimeProfile::gaussian(0.6, 0.1))),
        ("mirrored", TestFunctional::single(0.3, wide.clone().mirrored(), 1.3, poly(0.4, 0.25, vec![1.0, -1.0]))),
        (
            "two_terms",
            TestFunctional::single(0.3, atom.clone(), 1.0, TimeProfile::gaussian(0.3, 0.1))
                .plus(TestFunctional::single(-0.2, wide.clone(), 2.0, TimeProfile::gaussian(0.8, 0.15))),
        ),
        ("broad", TestFunctional::single(0.15, wide, 2.0, TimeProfile::gaussian(0.5, 0.5))),
    ]
}

/// Looks up a battery element by name.
pub fn battery_element(name: &str) -> Result<TestFunctional> {
    if name == "zero" {
        return Ok(TestFunctional::zero());
    }
    battery()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, g)| g)
        .ok_or_else(|| Error::Config(format!("unknown test functional `{name}`")))
}
