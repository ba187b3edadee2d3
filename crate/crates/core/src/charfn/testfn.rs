//! Smooth test functions `G` with their derivatives and Fourier transforms.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type FourierFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// How fast `G` may grow; decides which route computes `S(G(M))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthClass {
    /// `G` and its Fourier transform are integrable.
    Integrable,
    /// `|G^(l)(x)| <= C (1 + |x|^q)`.
    Polynomial { q: f64 },
    /// Bounded with a Fourier transform that is a pair of point masses.
    Bounded,
}

/// A user-supplied `G` given by closures. Without `fourier` only
/// Monte Carlo routes are available.
#[derive(Clone)]
pub struct CustomFunction {
    pub label: String,
    pub g: RealFn,
    pub d1: RealFn,
    pub d2: RealFn,
    pub fourier: Option<FourierFn>,
    pub growth: GrowthClass,
}

impl fmt::Debug for CustomFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFunction").field("label", &self.label).field("growth", &self.growth).finish()
    }
}

/// Test functions with analytic transforms. The Fourier transform is the
/// unitary one, `FG(u) = (2 pi)^-1/2 int G(x) e^{-iux} dx`.
#[derive(Clone, Debug)]
pub enum SmoothTestFunction {
    Constant(f64),
    /// `amplitude * exp(-(x - centre)^2 / (2 width^2))`.
    GaussianBump { amplitude: f64, centre: f64, width: f64 },
    /// `x exp(-x^2 / (2 width^2))`.
    DampedLinear { width: f64 },
    /// `cos(freq x)`.
    Cosine { freq: f64 },
    /// `sum c_k x^k`.
    Polynomial(Vec<f64>),
    Custom(CustomFunction),
}

impl SmoothTestFunction {
    pub fn square() -> Self {
        SmoothTestFunction::Polynomial(vec![0.0, 0.0, 1.0])
    }

    pub fn gaussian_bump(amplitude: f64, centre: f64, width: f64) -> Result<Self> {
        ensure(width > 0.0, || format!("bump width {width} must be positive"))?;
        Ok(SmoothTestFunction::GaussianBump { amplitude, centre, width })
    }

    pub fn label(&self) -> String {
        match self {
            SmoothTestFunction::Constant(c) => format!("constant({c})"),
            SmoothTestFunction::GaussianBump { amplitude, centre, width } => {
                format!("gaussian_bump(amp={amplitude},centre={centre},width={width})")
            }
            SmoothTestFunction::DampedLinear { width } => format!("damped_linear(width={width})"),
            SmoothTestFunction::Cosine { freq } => format!("cosine(freq={freq})"),
            SmoothTestFunction::Polynomial(c) => format!("polynomial({c:?})"),
            SmoothTestFunction::Custom(c) => c.label.clone(),
        }
    }

    pub fn growth(&self) -> GrowthClass {
        match self {
            SmoothTestFunction::Constant(_) | SmoothTestFunction::Cosine { .. } => GrowthClass::Bounded,
            SmoothTestFunction::GaussianBump { .. } | SmoothTestFunction::DampedLinear { .. } => {
                GrowthClass::Integrable
            }
            SmoothTestFunction::Polynomial(c) => GrowthClass::Polynomial { q: degree(c) as f64 },
            SmoothTestFunction::Custom(c) => c.growth,
        }
    }

    /// The growth exponent `q` used by the moment gate (0 for bounded `G`).
    pub fn growth_exponent(&self) -> f64 {
        match self.growth() {
            GrowthClass::Polynomial { q } => q,
            _ => 0.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.derivative(1, x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.derivative(2, x)
    }

    /// `G^(order)(x)` for `order <= 2` (any order for polynomials).
    pub fn derivative(&self, order: u32, x: f64) -> f64 {
        match self {
            SmoothTestFunction::Constant(c) => {
                if order == 0 {
                    *c
                } else {
                    0.0
                }
            }
            SmoothTestFunction::GaussianBump { amplitude, centre, width } => {
                let y = (x - centre) / width;
                let e = amplitude * (-0.5 * y * y).exp();
                match order {
                    0 => e,
                    1 => -y / width * e,
                    _ => (y * y - 1.0) / (width * width) * e,
                }
            }
            SmoothTestFunction::DampedLinear { width } => {
                let w2 = width * width;
                let e = (-0.5 * x * x / w2).exp();
                match order {
                    0 => x * e,
                    1 => (1.0 - x * x / w2) * e,
                    _ => x * (x * x / w2 - 3.0) / w2 * e,
                }
            }
            SmoothTestFunction::Cosine { freq } => match order % 4 {
                0 => (freq * x).cos() * freq.powi(order as i32),
                1 => -(freq * x).sin() * freq.powi(order as i32),
                2 => -(freq * x).cos() * freq.powi(order as i32),
                _ => (freq * x).sin() * freq.powi(order as i32),
            },
            SmoothTestFunction::Polynomial(c) => {
                let d = differentiate(c, order);
                d.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            SmoothTestFunction::Custom(c) => match order {
                0 => (c.g)(x),
                1 => (c.d1)(x),
                _ => (c.d2)(x),
            },
        }
    }

    /// `F(G^(order))(u) = (iu)^order FG(u)` when `G` has an integrable transform.
    pub fn fourier(&self, order: u32, u: f64) -> Option<Complex64> {
        let base = match self {
            SmoothTestFunction::GaussianBump { amplitude, centre, width } => {
                let decay = amplitude * width * (-0.5 * width * width * u * u).exp();
                Complex64::from_polar(decay, -u * centre)
            }
            SmoothTestFunction::DampedLinear { width } => {
                Complex64::new(0.0, -width.powi(3) * u * (-0.5 * width * width * u * u).exp())
            }
            SmoothTestFunction::Custom(c) => (c.fourier.as_ref()?)(u),
            _ => return None,
        };
        Some(base * Complex64::new(0.0, u).powu(order))
    }

    /// Width of the Gaussian envelope of `FG`, if any: `|FG(u)| <= A exp(-w^2 u^2 / 2)`.
    pub(crate) fn fourier_envelope(&self) -> Option<(f64, f64)> {
        match self {
            SmoothTestFunction::GaussianBump { amplitude, width, .. } => Some((amplitude.abs() * width, *width)),
            SmoothTestFunction::DampedLinear { width } => Some((width.powi(3) * 2.0 / width, *width / 2f64.sqrt())),
            _ => None,
        }
    }
}

fn degree(c: &[f64]) -> usize {
    c.iter().rposition(|x| *x != 0.0).unwrap_or(0)
}

fn differentiate(c: &[f64], order: u32) -> Vec<f64> {
    let mut d = c.to_vec();
    for _ in 0..order {
        if d.len() <= 1 {
            return vec![0.0];
        }
        d = d.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
    }
    d
}

/// Built-in test functions addressable from configuration, written e.g.
/// `square`, `gaussian_bump`, `gaussian_bump:amp=1,centre=0.5,width=0.8`,
/// `cosine:freq=1`, `poly:0,0,1` or `constant:2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GSpec {
    Constant(f64),
    GaussianBump { amplitude: f64, centre: f64, width: f64 },
    DampedLinear { width: f64 },
    Cosine { freq: f64 },
    Polynomial(Vec<f64>),
}

impl GSpec {
    /// Default Gaussian bump of the verification scenarios.
    pub const BUMP: GSpec = GSpec::GaussianBump { amplitude: 1.0, centre: 0.5, width: 1.0 };

    pub fn build(&self) -> SmoothTestFunction {
        match self.clone() {
            GSpec::Constant(c) => SmoothTestFunction::Constant(c),
            GSpec::GaussianBump { amplitude, centre, width } => {
                SmoothTestFunction::GaussianBump { amplitude, centre, width }
            }
            GSpec::DampedLinear { width } => SmoothTestFunction::DampedLinear { width },
            GSpec::Cosine { freq } => SmoothTestFunction::Cosine { freq },
            GSpec::Polynomial(c) => SmoothTestFunction::Polynomial(c),
        }
    }
}

impl FromStr for GSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let kv = |key: &str, default: f64| -> Result<f64> {
            for part in args.split(',').filter(|a| !a.is_empty()) {
                let (k, v) = part.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value in `{s}`")))?;
                if k.trim() == key {
                    return v.trim().parse().map_err(|_| Error::Config(format!("bad number `{v}` in `{s}`")));
                }
            }
            Ok(default)
        };
        let spec = match name {
            "square" => GSpec::Polynomial(vec![0.0, 0.0, 1.0]),
            "poly" | "polynomial" => GSpec::Polynomial(
                args.split(',')
                    .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad coefficient `{v}`"))))
                    .collect::<Result<_>>()?,
            ),
            "constant" => GSpec::Constant(args.trim().parse().map_err(|_| Error::Config(format!("bad constant in `{s}`")))?),
            "gaussian_bump" | "bump" => GSpec::GaussianBump {
                amplitude: kv("amp", 1.0)?,
                centre: kv("centre", 0.5)?,
                width: kv("width", 1.0)?,
            },
            "damped_linear" => GSpec::DampedLinear { width: kv("width", 1.0)? },
            "cosine" | "cos" => GSpec::Cosine { freq: kv("freq", 1.0)? },
            _ => return Err(Error::Config(format!("unknown test function `{s}`"))),
        };
        if let GSpec::GaussianBump { width, .. } | GSpec::DampedLinear { width } = spec {
            if !(width > 0.0) {
                return Err(Error::Config(format!("width must be positive in `{s}`")));
            }
        }
        Ok(spec)
    }
}

impl TryFrom<String> for GSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GSpec> for String {
    fn from(g: GSpec) -> String {
        match g {
            GSpec::Constant(c) => format!("constant:{c}"),
            GSpec::GaussianBump { amplitude, centre, width } => {
                format!("gaussian_bump:amp={amplitude},centre={centre},width={width}")
            }
            GSpec::DampedLinear { width } => format!("damped_linear:width={width}"),
            GSpec::Cosine { freq } => format!("cosine:freq={freq}"),
            GSpec::Polynomial(c) => {
                if c == [0.0, 0.0, 1.0] {
                    "square".into()
                } else {
                    format!("poly:{}", c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                }
            }
        }
    }
}
