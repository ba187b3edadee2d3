//! Volterra kernels `f(t, s)`, their norms and the class validator.

mod validate;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{ensure, Error, Result};
use crate::quadrature::{graded_piece, integrate_tail, log_piece, Estimate, QuadValue, QuadratureSpec};

pub use validate::{validate_kernel, Condition, ConditionVerdict, KClassReport, ProbeConfig};

/// Exponents describing the singular structure of a kernel; used to place
/// quadrature substitutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelHints {
    /// `|d_t f| <= C |s|^-beta |t - s|^-gamma`.
    pub beta: f64,
    pub gamma: f64,
    /// `|f(t, s)| ~ |s|^-theta` as `s -> -inf`.
    pub theta: f64,
    /// Decay power of `d_t f(t, s)` as `s -> -inf`.
    pub dt_decay: f64,
    /// Singularity exponent of kernel-built integrands at `s = 0`.
    pub zero: f64,
    /// Singularity exponent of kernel-built integrands at `s = t`.
    pub diag: f64,
}

impl Default for KernelHints {
    fn default() -> Self {
        Self { beta: 0.0, gamma: 0.0, theta: 1.0, dt_decay: 1.0, zero: 0.0, diag: 0.0 }
    }
}

/// A Volterra kernel with its partial derivatives.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn label(&self) -> String;

    /// Lower end of the support in `s` (`f64::NEG_INFINITY` for two-sided kernels).
    fn tau(&self) -> f64;

    fn eval(&self, t: f64, s: f64) -> f64;

    fn eval_dt(&self, t: f64, s: f64) -> f64;

    fn eval_ds(&self, t: f64, s: f64) -> f64;

    /// `f(t, t - lag)`, exact in the lag for small lags.
    fn eval_lag(&self, t: f64, lag: f64) -> f64 {
        self.eval(t, t - lag)
    }

    fn eval_dt_lag(&self, t: f64, lag: f64) -> f64 {
        self.eval_dt(t, t - lag)
    }

    fn eval_ds_lag(&self, t: f64, lag: f64) -> f64 {
        self.eval_ds(t, t - lag)
    }

    /// `f(t, t)`: the factor multiplying driver jumps in `M`.
    fn diagonal(&self, t: f64) -> f64 {
        self.eval(t, t)
    }

    fn hints(&self) -> KernelHints {
        KernelHints::default()
    }

    /// True for `1_(0, t](s)`, which lets `M` be formed by running sums.
    fn is_increment_indicator(&self) -> bool {
        false
    }
}

pub type KernelHandle = Arc<dyn Kernel>;

/// Riemann-Liouville fractional kernel
/// `f_d(t, s) = ((t - s)_+^d - (-s)_+^d) / Gamma(d + 1)`, `d` in `(0, 1/2)`.
#[derive(Clone, Debug)]
pub struct FractionalKernel {
    d: f64,
    inv_gamma: f64,
}

impl FractionalKernel {
    pub fn new(d: f64) -> Result<Self> {
        ensure(d > 0.0 && d < 0.5, || format!("fractional order {d} outside (0, 1/2)"))?;
        Ok(Self { d, inv_gamma: 1.0 / gamma(d + 1.0) })
    }

    pub fn order(&self) -> f64 {
        self.d
    }

    /// `int f_d(t, s)^2 ds = t^(2d + 1) / (Gamma(2d + 2) cos(pi d))`.
    pub fn variance_constant(&self) -> f64 {
        1.0 / (gamma(2.0 * self.d + 2.0) * (std::f64::consts::PI * self.d).cos())
    }
}

impl Kernel for FractionalKernel {
    fn label(&self) -> String {
        format!("frac(d={})", self.d)
    }

    fn tau(&self) -> f64 {
        f64::NEG_INFINITY
    }

    fn eval(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        self.eval_lag(t, t - s)
    }

    fn eval_lag(&self, t: f64, lag: f64) -> f64 {
        if lag <= 0.0 {
            return 0.0;
        }
        let s = t - lag;
        let d = self.d;
        if s >= 0.0 {
            return lag.powf(d) * self.inv_gamma;
        }
        let m = -s;
        // (t - s)^d - (-s)^d = (-s)^d ((1 + t / (-s))^d - 1), stable for |s| >> t
        m.powf(d) * (d * (t / m).ln_1p()).exp_m1() * self.inv_gamma
    }

    fn eval_dt(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        self.eval_dt_lag(t, t - s)
    }

    fn eval_dt_lag(&self, _t: f64, lag: f64) -> f64 {
        if lag <= 0.0 {
            return 0.0;
        }
        self.d * lag.powf(self.d - 1.0) * self.inv_gamma
    }

    fn eval_ds(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        self.eval_ds_lag(t, t - s)
    }

    fn eval_ds_lag(&self, t: f64, lag: f64) -> f64 {
        if lag <= 0.0 {
            return 0.0;
        }
        let s = t - lag;
        let d = self.d;
        if s >= 0.0 {
            return -d * lag.powf(d - 1.0) * self.inv_gamma;
        }
        let m = -s;
        // d ((-s)^(d-1) - (t-s)^(d-1)) = -d (-s)^(d-1) expm1((d-1) ln(1 + t/(-s)))
        -d * m.powf(d - 1.0) * ((d - 1.0) * (t / m).ln_1p()).exp_m1() * self.inv_gamma
    }

    fn diagonal(&self, _t: f64) -> f64 {
        0.0
    }

    fn hints(&self) -> KernelHints {
        let e = 1.0 - self.d;
        KernelHints { beta: 0.0, gamma: e, theta: e, dt_decay: e, zero: e, diag: e }
    }
}

/// The increment kernel `1_(0, t](s)`: `M = L` on `[0, T]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IndicatorKernel;

impl Kernel for IndicatorKernel {
    fn label(&self) -> String {
        "indicator".into()
    }

    fn tau(&self) -> f64 {
        0.0
    }

    fn eval(&self, t: f64, s: f64) -> f64 {
        if s > 0.0 && s <= t {
            1.0
        } else {
            0.0
        }
    }

    fn eval_dt(&self, _t: f64, _s: f64) -> f64 {
        0.0
    }

    fn eval_ds(&self, _t: f64, _s: f64) -> f64 {
        0.0
    }

    fn eval_lag(&self, t: f64, lag: f64) -> f64 {
        if lag >= 0.0 && lag < t {
            1.0
        } else {
            0.0
        }
    }

    fn diagonal(&self, t: f64) -> f64 {
        if t > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn hints(&self) -> KernelHints {
        KernelHints { theta: f64::INFINITY, dt_decay: f64::INFINITY, ..KernelHints::default() }
    }

    fn is_increment_indicator(&self) -> bool {
        true
    }
}

type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A kernel given by closures, e.g. for user-defined or deliberately
/// ill-posed kernels.
#[derive(Clone)]
pub struct FnKernel {
    label: String,
    tau: f64,
    f: KernelFn,
    dt: KernelFn,
    ds: KernelFn,
    hints: KernelHints,
}

impl fmt::Debug for FnKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnKernel").field("label", &self.label).field("tau", &self.tau).finish()
    }
}

impl FnKernel {
    pub fn new(
        label: impl Into<String>,
        tau: f64,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dt: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        ds: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            tau,
            f: Arc::new(f),
            dt: Arc::new(dt),
            ds: Arc::new(ds),
            hints: KernelHints::default(),
        }
    }

    pub fn with_hints(mut self, hints: KernelHints) -> Self {
        self.hints = hints;
        self
    }
}

impl Kernel for FnKernel {
    fn label(&self) -> String {
        self.label.clone()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn eval(&self, t: f64, s: f64) -> f64 {
        (self.f)(t, s)
    }
    fn eval_dt(&self, t: f64, s: f64) -> f64 {
        (self.dt)(t, s)
    }
    fn eval_ds(&self, t: f64, s: f64) -> f64 {
        (self.ds)(t, s)
    }
    fn hints(&self) -> KernelHints {
        self.hints
    }
}

/// `f(t, s) 1{s >= -A}`: the kernel a simulation on the window `[-A, T]`
/// actually realises.
#[derive(Clone, Debug)]
pub struct TruncatedKernel {
    inner: KernelHandle,
    past: f64,
}

impl TruncatedKernel {
    pub fn new(inner: KernelHandle, past: f64) -> Result<Self> {
        ensure(past >= 0.0 && past.is_finite(), || format!("truncation point {past} must be finite and >= 0"))?;
        Ok(Self { inner, past })
    }

    pub fn inner(&self) -> &KernelHandle {
        &self.inner
    }

    pub fn past(&self) -> f64 {
        self.past
    }
}

impl Kernel for TruncatedKernel {
    fn label(&self) -> String {
        format!("{}[A={}]", self.inner.label(), self.past)
    }
    fn tau(&self) -> f64 {
        self.inner.tau().max(-self.past)
    }
    fn eval(&self, t: f64, s: f64) -> f64 {
        if s < -self.past {
            0.0
        } else {
            self.inner.eval(t, s)
        }
    }
    fn eval_dt(&self, t: f64, s: f64) -> f64 {
        if s < -self.past {
            0.0
        } else {
            self.inner.eval_dt(t, s)
        }
    }
    fn eval_ds(&self, t: f64, s: f64) -> f64 {
        if s < -self.past {
            0.0
        } else {
            self.inner.eval_ds(t, s)
        }
    }
    fn eval_lag(&self, t: f64, lag: f64) -> f64 {
        if lag > t + self.past {
            0.0
        } else {
            self.inner.eval_lag(t, lag)
        }
    }
    fn eval_dt_lag(&self, t: f64, lag: f64) -> f64 {
        if lag > t + self.past {
            0.0
        } else {
            self.inner.eval_dt_lag(t, lag)
        }
    }
    fn eval_ds_lag(&self, t: f64, lag: f64) -> f64 {
        if lag > t + self.past {
            0.0
        } else {
            self.inner.eval_ds_lag(t, lag)
        }
    }
    fn diagonal(&self, t: f64) -> f64 {
        self.inner.diagonal(t)
    }
    fn hints(&self) -> KernelHints {
        KernelHints { theta: f64::INFINITY, dt_decay: f64::INFINITY, ..self.inner.hints() }
    }
    fn is_increment_indicator(&self) -> bool {
        self.inner.is_increment_indicator()
    }
}

/// Built-in kernels addressable from configuration files and the CLI,
/// written `indicator` or `frac:d=0.25`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelSpec {
    Indicator,
    Fractional { d: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<KernelHandle> {
        Ok(match self {
            KernelSpec::Indicator => Arc::new(IndicatorKernel),
            KernelSpec::Fractional { d } => Arc::new(FractionalKernel::new(*d)?),
        })
    }
}

impl FromStr for KernelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "indicator" => Ok(KernelSpec::Indicator),
            "frac" | "fractional" => {
                let mut d = None;
                for kv in args.split(',').filter(|a| !a.is_empty()) {
                    let (k, v) = kv.split_once('=').unwrap_or(("d", kv));
                    match k.trim() {
                        "d" => d = v.trim().parse::<f64>().ok(),
                        other => return Err(Error::Config(format!("unknown kernel parameter `{other}`"))),
                    }
                }
                let d = d.ok_or_else(|| Error::Config(format!("kernel `{s}` needs d=<order>")))?;
                FractionalKernel::new(d)?;
                Ok(KernelSpec::Fractional { d })
            }
            _ => Err(Error::Config(format!("unknown kernel `{s}` (expected indicator or frac:d=..)"))),
        }
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        match k {
            KernelSpec::Indicator => "indicator".into(),
            KernelSpec::Fractional { d } => format!("frac:d={d}"),
        }
    }
}

/// Integrates `h(s, t - s)` over `s` in `(tau, t]`, `t >= 0`, splitting at
/// `0` and near the diagonal, where the lag `t - s` is passed exactly.
/// `decay` is the power-law decay of `h` as `s -> -inf`.
pub fn integrate_past<V: QuadValue>(
    k: &dyn Kernel,
    t: f64,
    h: &dyn Fn(f64, f64) -> V,
    decay: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    let hints = k.hints();
    integrate_past_with(k, t, h, decay, (hints.zero, hints.diag), spec)
}

/// [`integrate_past`] with explicit singularity exponents `(zero, diag)`.
pub fn integrate_past_with<V: QuadValue>(
    k: &dyn Kernel,
    t: f64,
    h: &dyn Fn(f64, f64) -> V,
    decay: f64,
    exponents: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    ensure(t >= 0.0, || format!("past integrals need t >= 0, got {t}"))?;
    let hints = KernelHints { zero: exponents.0, diag: exponents.1, ..k.hints() };
    let tau = k.tau();
    let sub = QuadratureSpec { abs_tol: spec.abs_tol / 5.0, ..spec.clone() };
    let mut total = Estimate::exact(V::zero());
    let lag_piece = |len: f64, alpha: f64| {
        let g = |lag: f64| h(t - lag, lag);
        graded_piece(&g, 0.0, len, alpha, 0.0, &sub)
    };
    if tau >= t {
        return Ok(total);
    }
    if t > 0.0 {
        let lo = tau.max(0.0);
        let mid = 0.5 * (lo + t);
        total = total + lag_piece(t - mid, hints.diag)?;
        let at_lo = if lo == 0.0 && tau < 0.0 { hints.zero } else { 0.0 };
        let g = |s: f64| h(s, t - s);
        total = total + graded_piece(&g, lo, mid, at_lo, 0.0, &sub)?;
        if tau >= 0.0 {
            return Ok(total);
        }
        let left = tau.max(-1.0);
        total = total + graded_piece(&g, left, 0.0, 0.0, hints.zero, &sub)?;
    } else {
        let left = tau.max(-1.0);
        total = total + lag_piece(-left, hints.zero.max(hints.diag))?;
    }
    if tau >= -1.0 {
        return Ok(total);
    }
    let g = |s: f64| h(s, t - s);
    if tau.is_finite() {
        total = total + if tau < -8.0 { log_piece(&g, -1.0, -tau, &sub)? } else { graded_piece(&g, tau, -1.0, 0.0, 0.0, &sub)? };
    } else {
        total = total + integrate_tail(&g, -1.0, decay, &sub)?;
    }
    Ok(total)
}

/// `||f(t, .)||^2 = int f(t, s)^2 ds`.
pub fn l2_norm_sq(k: &dyn Kernel, t: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if t <= 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let h = |_s: f64, lag: f64| {
        let f = k.eval_lag(t, lag);
        f * f
    };
    integrate_past(k, t, &h, 2.0 * k.hints().theta, spec)
}

/// `d/dt ||f(t, .)||^2 = f(t, t)^2 + 2 int d_t f(t, s) f(t, s) ds`.
pub fn ddt_l2_norm_sq(k: &dyn Kernel, t: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    ensure(t > 0.0, || format!("derivative of the norm needs t > 0, got {t}"))?;
    let hints = k.hints();
    let h = |_s: f64, lag: f64| 2.0 * k.eval_lag(t, lag) * k.eval_dt_lag(t, lag);
    let diag = k.diagonal(t);
    Ok(integrate_past(k, t, &h, hints.theta + hints.dt_decay, spec)? + Estimate::exact(diag * diag))
}
