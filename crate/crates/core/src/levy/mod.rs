//! Levy drivers: triplets, jump measures and two-sided path simulation.
//!
//! The driver is centred: `L(t) = sigma W(t) + sum of jumps - t * int x nu(dx)`,
//! which is the triplet `(gamma, sigma, nu)` with `gamma = -int_{|x|>1} x nu(dx)`.

mod path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};

use crate::error::{ensure, Error, Result};
use crate::quadrature::{nu_integrate, QuadratureSpec};

pub use path::{simulate_path, GridSpec, Jump, LevyPath, LevySimulator, TimeGrid};
pub(crate) use path::fmt;

/// Distribution of the jump sizes of a compound Poisson driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpLaw {
    /// `(size, probability)` pairs.
    Atoms(Vec<(f64, f64)>),
    Uniform { low: f64, high: f64 },
}

impl JumpLaw {
    pub fn atom(x: f64) -> Self {
        JumpLaw::Atoms(vec![(x, 1.0)])
    }

    fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Atoms(atoms) => {
                ensure(!atoms.is_empty(), || "jump law has no atoms".into())?;
                let mut total = 0.0;
                for &(x, p) in atoms {
                    ensure(x != 0.0 && x.is_finite(), || format!("atom at {x} is not allowed"))?;
                    ensure(p > 0.0 && p.is_finite(), || format!("atom probability {p} must be positive"))?;
                    total += p;
                }
                ensure((total - 1.0).abs() < 1e-9, || format!("atom probabilities sum to {total}"))
            }
            JumpLaw::Uniform { low, high } => {
                ensure(low < high && low.is_finite() && high.is_finite(), || {
                    format!("uniform jump law needs low < high, got [{low}, {high}]")
                })
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Atoms(atoms) => {
                let mut u: f64 = rng.random();
                for &(x, p) in atoms {
                    if u < p {
                        return x;
                    }
                    u -= p;
                }
                atoms[atoms.len() - 1].0
            }
            JumpLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    /// `E[X^k]`.
    pub fn raw_moment(&self, k: i32) -> f64 {
        match self {
            JumpLaw::Atoms(atoms) => atoms.iter().map(|(x, p)| p * x.powi(k)).sum(),
            JumpLaw::Uniform { low, high } => {
                let k1 = (k + 1) as f64;
                (high.powi(k + 1) - low.powi(k + 1)) / (k1 * (high - low))
            }
        }
    }

    /// `E|X|^p`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match self {
            JumpLaw::Atoms(atoms) => atoms.iter().map(|(x, q)| q * x.abs().powf(p)).sum(),
            JumpLaw::Uniform { low, high } => {
                let prim = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
                (prim(*high) - prim(*low)) / (high - low)
            }
        }
    }
}

/// The Levy measure `nu`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JumpSpec {
    #[default]
    None,
    CompoundPoisson { rate: f64, law: JumpLaw },
    /// Symmetric tempered stable `nu(dx) = c e^{-lambda |x|} |x|^{-1-alpha} dx`,
    /// optionally restricted to `|x| >= min_jump`.
    TemperedStable {
        alpha: f64,
        lambda: f64,
        c: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        min_jump: f64,
    },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl JumpSpec {
    pub fn compound_poisson(rate: f64, law: JumpLaw) -> Self {
        JumpSpec::CompoundPoisson { rate, law }
    }

    pub fn tempered_stable(alpha: f64, lambda: f64, c: f64) -> Self {
        JumpSpec::TemperedStable { alpha, lambda, c, min_jump: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpSpec::None => Ok(()),
            JumpSpec::CompoundPoisson { rate, law } => {
                ensure(*rate > 0.0 && rate.is_finite(), || format!("jump rate {rate} must be positive"))?;
                law.validate()
            }
            JumpSpec::TemperedStable { alpha, lambda, c, min_jump } => {
                ensure(*alpha > 0.0 && *alpha < 2.0, || format!("stability index {alpha} outside (0, 2)"))?;
                ensure(*lambda > 0.0, || format!("tempering {lambda} must be positive"))?;
                ensure(*c > 0.0, || format!("scale {c} must be positive"))?;
                ensure(*min_jump >= 0.0, || format!("minimum jump {min_jump} must be >= 0"))
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, JumpSpec::None)
    }

    /// `int |x|^k nu(dx)`, `+inf` when divergent.
    pub fn nu_moment(&self, k: f64) -> f64 {
        match self {
            JumpSpec::None => 0.0,
            JumpSpec::CompoundPoisson { rate, law } => rate * law.abs_moment(k),
            JumpSpec::TemperedStable { alpha, lambda, c, min_jump } => {
                if *min_jump == 0.0 && k <= *alpha {
                    return f64::INFINITY;
                }
                2.0 * c * lambda.powf(alpha - k) * upper_gamma(k - alpha, lambda * min_jump)
            }
        }
    }

    /// `int x nu(dx)`: the rate of the compensating drift.
    pub fn mean_rate(&self) -> f64 {
        match self {
            JumpSpec::CompoundPoisson { rate, law } => rate * law.raw_moment(1),
            _ => 0.0,
        }
    }

    /// `gamma = -int_{|x|>1} x nu(dx)`.
    pub fn drift_gamma(&self) -> f64 {
        match self {
            JumpSpec::None | JumpSpec::TemperedStable { .. } => 0.0,
            JumpSpec::CompoundPoisson { rate, law } => match law {
                JumpLaw::Atoms(atoms) => {
                    -rate * atoms.iter().filter(|(x, _)| x.abs() > 1.0).map(|(x, p)| x * p).sum::<f64>()
                }
                JumpLaw::Uniform { low, high } => {
                    let part = |a: f64, b: f64| if b > a { 0.5 * (b * b - a * a) } else { 0.0 };
                    let inner = part(*low, high.min(-1.0)) + part(low.max(1.0), *high);
                    -rate * inner / (high - low)
                }
            },
        }
    }

    /// Jump rate `nu({|x| >= eps})`, infinite for an untruncated stable part.
    pub fn intensity(&self) -> f64 {
        match self {
            JumpSpec::None => 0.0,
            JumpSpec::CompoundPoisson { rate, .. } => *rate,
            JumpSpec::TemperedStable { alpha, lambda, c, min_jump } => {
                if *min_jump == 0.0 {
                    f64::INFINITY
                } else {
                    2.0 * c * lambda.powf(*alpha) * upper_gamma(-alpha, lambda * min_jump)
                }
            }
        }
    }

    /// Discrete `(x, weight)` approximation of `nu` with `sum w h(x) ~ int h dnu`
    /// for smooth `h` vanishing like `x^2` at the origin.
    pub fn x_rule(&self, n: usize) -> Vec<(f64, f64)> {
        use crate::quadrature::FixedRule;
        match self {
            JumpSpec::None => Vec::new(),
            JumpSpec::CompoundPoisson { rate, law } => match law {
                JumpLaw::Atoms(atoms) => atoms.iter().map(|(x, p)| (*x, rate * p)).collect(),
                JumpLaw::Uniform { low, high } => {
                    let density = rate / (high - low);
                    let mut r = FixedRule::default();
                    if *low < 0.0 && *high > 0.0 {
                        r.append(FixedRule::gauss_legendre(*low, 0.0, n));
                        r.append(FixedRule::gauss_legendre(0.0, *high, n));
                    } else {
                        r.append(FixedRule::gauss_legendre(*low, *high, n));
                    }
                    r.nodes.into_iter().zip(r.weights).map(|(x, w)| (x, w * density)).collect()
                }
            },
            JumpSpec::TemperedStable { alpha, lambda, c, min_jump } => {
                let x0 = 1.0 / lambda;
                let mut r = if *min_jump >= x0 {
                    FixedRule::default()
                } else if *min_jump > 0.0 {
                    let mut r = FixedRule::default();
                    let base = FixedRule::gauss_legendre(0.0, (x0 / min_jump).ln(), n);
                    for (y, w) in base.nodes.iter().zip(&base.weights) {
                        let x = min_jump * y.exp();
                        r.nodes.push(x);
                        r.weights.push(w * x);
                    }
                    r
                } else {
                    FixedRule::graded(0.0, x0, alpha - 1.0, 0.0, n)
                };
                let start = x0.max(*min_jump);
                let base = FixedRule::gauss_legendre(0.0, 1.0, n);
                for (y, w) in base.nodes.iter().zip(&base.weights) {
                    let x = start + 40.0 * x0 * y * y;
                    r.nodes.push(x);
                    r.weights.push(w * 80.0 * x0 * y);
                }
                let mut out = Vec::with_capacity(2 * r.len());
                for (x, w) in r.nodes.iter().zip(&r.weights) {
                    let d = c * (-lambda * x).exp() * x.powf(-1.0 - alpha) * w;
                    out.push((*x, d));
                    out.push((-*x, d));
                }
                out
            }
        }
    }
}

/// `Gamma(s, z)` for any real `s`, `z > 0` (or `z = 0`, `s > 0`).
pub(crate) fn upper_gamma(s: f64, z: f64) -> f64 {
    if z == 0.0 {
        return gamma(s);
    }
    if s > 0.0 {
        return gamma(s) * gamma_ur(s, z);
    }
    // Gamma(s, z) = (Gamma(s + 1, z) - z^s e^{-z}) / s
    (upper_gamma(s + 1.0, z) - z.powf(s) * (-z).exp()) / s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevyModelRepr {
    sigma: f64,
    #[serde(default)]
    jumps: JumpSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    small_jump_cutoff: Option<f64>,
    #[serde(default)]
    gaussian_compensation: bool,
}

/// A Levy triplet together with its simulation options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyModelRepr", into = "LevyModelRepr")]
pub struct LevyModel {
    sigma: f64,
    gamma: f64,
    jumps: JumpSpec,
    small_jump_cutoff: Option<f64>,
    gaussian_compensation: bool,
}

impl TryFrom<LevyModelRepr> for LevyModel {
    type Error = Error;
    fn try_from(r: LevyModelRepr) -> Result<Self> {
        let mut m = LevyModel::new(r.sigma, r.jumps)?;
        if let Some(eps) = r.small_jump_cutoff {
            m = m.with_small_jump_cutoff(eps)?;
        }
        Ok(m.with_gaussian_compensation(r.gaussian_compensation))
    }
}

impl From<LevyModel> for LevyModelRepr {
    fn from(m: LevyModel) -> Self {
        LevyModelRepr {
            sigma: m.sigma,
            jumps: m.jumps,
            small_jump_cutoff: m.small_jump_cutoff,
            gaussian_compensation: m.gaussian_compensation,
        }
    }
}

/// Fraction of the tempered-stable variance left to the truncated small jumps.
const SMALL_JUMP_VARIANCE_SHARE: f64 = 1e-4;

impl LevyModel {
    pub fn new(sigma: f64, jumps: JumpSpec) -> Result<Self> {
        ensure(sigma >= 0.0 && sigma.is_finite(), || format!("sigma {sigma} must be >= 0"))?;
        jumps.validate()?;
        let gamma = jumps.drift_gamma();
        Ok(Self { sigma, gamma, jumps, small_jump_cutoff: None, gaussian_compensation: false })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(sigma, JumpSpec::None)
    }

    pub fn with_small_jump_cutoff(mut self, eps: f64) -> Result<Self> {
        ensure(eps > 0.0, || format!("small-jump cutoff {eps} must be positive"))?;
        self.small_jump_cutoff = Some(eps);
        Ok(self)
    }

    pub fn with_gaussian_compensation(mut self, on: bool) -> Self {
        self.gaussian_compensation = on;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn jumps(&self) -> &JumpSpec {
        &self.jumps
    }

    pub fn has_jumps(&self) -> bool {
        !self.jumps.is_none()
    }

    /// `int |x|^k nu(dx)`.
    pub fn nu_moment(&self, k: f64) -> f64 {
        self.jumps.nu_moment(k)
    }

    /// Truncation level for infinite-activity measures.
    pub fn jump_cutoff(&self) -> f64 {
        match &self.jumps {
            JumpSpec::TemperedStable { alpha, lambda, min_jump, .. } => {
                if *min_jump > 0.0 {
                    return *min_jump;
                }
                if let Some(eps) = self.small_jump_cutoff {
                    return eps;
                }
                // small-jump variance share is the regularised P(2 - alpha, lambda eps)
                let s = 2.0 - alpha;
                let (mut lo, mut hi) = (0.0_f64, 1.0 / lambda);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if gamma_lr(s, lambda * mid) > SMALL_JUMP_VARIANCE_SHARE {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                lo
            }
            _ => 0.0,
        }
    }

    /// `int_{|x| < eps} x^2 nu(dx)` for the cutoff actually simulated.
    pub fn small_jump_variance(&self) -> f64 {
        match &self.jumps {
            JumpSpec::TemperedStable { alpha, lambda, c, min_jump } if *min_jump == 0.0 => {
                let eps = self.jump_cutoff();
                2.0 * c * lambda.powf(alpha - 2.0) * gamma(2.0 - alpha) * gamma_lr(2.0 - alpha, lambda * eps)
            }
            _ => 0.0,
        }
    }

    /// The model actually simulated: truncated jump measure and, if enabled,
    /// the small-jump variance folded into the diffusion coefficient.
    pub fn simulated(&self) -> LevyModel {
        let (jumps, extra) = match &self.jumps {
            JumpSpec::TemperedStable { alpha, lambda, c, min_jump } if *min_jump == 0.0 => {
                let eps = self.jump_cutoff();
                let extra = if self.gaussian_compensation { self.small_jump_variance() } else { 0.0 };
                (JumpSpec::TemperedStable { alpha: *alpha, lambda: *lambda, c: *c, min_jump: eps }, extra)
            }
            other => (other.clone(), 0.0),
        };
        LevyModel {
            sigma: (self.sigma * self.sigma + extra).sqrt(),
            gamma: jumps.drift_gamma(),
            jumps,
            small_jump_cutoff: None,
            gaussian_compensation: false,
        }
    }

    /// Short description such as `sigma=1,cp(rate=2,atoms=2:1)`.
    pub fn label(&self) -> String {
        let nu = match &self.jumps {
            JumpSpec::None => "none".to_string(),
            JumpSpec::CompoundPoisson { rate, law: JumpLaw::Atoms(a) } => {
                let atoms: Vec<String> = a.iter().map(|(x, p)| format!("{x}:{p}")).collect();
                format!("cp(rate={rate},atoms={})", atoms.join(";"))
            }
            JumpSpec::CompoundPoisson { rate, law: JumpLaw::Uniform { low, high } } => {
                format!("cp(rate={rate},uniform={low}:{high})")
            }
            JumpSpec::TemperedStable { alpha, lambda, c, .. } => format!("ts(alpha={alpha},lambda={lambda},c={c})"),
        };
        format!("sigma={},nu={nu}", self.sigma)
    }

    /// Finite `p`-th absolute moment of `nu` (the moment gate of the Ito formula).
    pub fn has_nu_moment(&self, p: f64) -> bool {
        !self.has_jumps() || self.nu_moment(p).is_finite()
    }
}

/// `int h(x) nu(dx)` convenience wrapper with default tolerances.
pub fn nu_expect(model: &LevyModel, h: &dyn Fn(f64) -> f64) -> Result<f64> {
    Ok(nu_integrate(model.jumps(), h, &QuadratureSpec::default())?.value)
}
