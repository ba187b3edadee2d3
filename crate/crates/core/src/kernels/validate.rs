//! Numerical evidence for membership of a kernel in the admissible class.
//!
//! Each condition is probed on finite lattices, so an accepted report is
//! evidence rather than proof; fit residuals are kept in the report.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{integrate_past_with, l2_norm_sq, Kernel, KernelHints};
use crate::error::{ensure, Error, Result};
use crate::quadrature::QuadratureSpec;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `f(t, s) = 0` for `s > t`.
    Support,
    /// `f(0, .) = 0`.
    Origin,
    /// Continuity on `{tau <= s <= t <= T}`.
    Continuity,
    /// `f(t, .)` is not a null function for `t > 0`.
    NonDegenerate,
    /// Bound on `d_t f` and decay of `f` in the past.
    TimeDerivative,
    /// Integrability of `d_s f`.
    SpaceDerivative,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Support,
        Condition::Origin,
        Condition::Continuity,
        Condition::NonDegenerate,
        Condition::TimeDerivative,
        Condition::SpaceDerivative,
    ];

    pub fn roman(self) -> &'static str {
        match self {
            Condition::Support => "i",
            Condition::Origin => "ii",
            Condition::Continuity => "iii",
            Condition::NonDegenerate => "iv",
            Condition::TimeDerivative => "v",
            Condition::SpaceDerivative => "vi",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Condition::Support => "support",
            Condition::Origin => "origin",
            Condition::Continuity => "continuity",
            Condition::NonDegenerate => "non-degenerate",
            Condition::TimeDerivative => "time derivative",
            Condition::SpaceDerivative => "space derivative",
        };
        write!(f, "({}) {}", self.roman(), name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: Condition,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub horizon: f64,
    pub t_nodes: usize,
    /// Smallest and largest `|s|` of the negative probe lattice.
    pub s_min: f64,
    pub s_max: f64,
    pub per_decade: usize,
    /// Continuity is probed on `s >= max(tau, -continuity_window)`.
    pub continuity_window: f64,
    pub continuity_levels: usize,
    pub support_samples: usize,
    pub zero_tolerance: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            t_nodes: 64,
            s_min: 1e-3,
            s_max: 1e3,
            per_decade: 8,
            continuity_window: 2.0,
            continuity_levels: 6,
            support_samples: 10_000,
            zero_tolerance: 1e-12,
            seed: 7,
        }
    }
}

impl ProbeConfig {
    fn validate(&self) -> Result<()> {
        ensure(
            self.horizon > 0.0
                && self.t_nodes >= 4
                && self.s_min > 0.0
                && self.s_max > 10.0 * self.s_min
                && self.per_decade >= 2
                && self.continuity_window > 0.0
                && self.continuity_levels >= 3
                && self.zero_tolerance > 0.0,
            || format!("invalid probe configuration {self:?}"),
        )
    }

    fn negative_lattice(&self, s_min: f64, s_max: f64, per_decade: usize) -> Vec<f64> {
        let decades = (s_max / s_min).log10();
        let n = (decades * per_decade as f64).ceil() as usize;
        (0..=n).map(|i| -s_min * 10f64.powf(decades * i as f64 / n as f64)).collect()
    }
}

/// Verdicts and fitted constants of the class validator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KClassReport {
    pub label: String,
    pub evidence: String,
    pub accepted: bool,
    pub verdicts: Vec<ConditionVerdict>,
    pub c0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub eta: Option<f64>,
    pub q: Option<f64>,
    /// `beta` sits at the closed end of its range (the fractional case).
    pub beta_boundary: bool,
    pub fit_residual_rms: f64,
    pub theta_fit_residual_rms: f64,
    pub continuity_oscillation: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

impl KClassReport {
    pub fn verdict(&self, c: Condition) -> Option<&ConditionVerdict> {
        self.verdicts.iter().find(|v| v.condition == c)
    }

    pub fn failed(&self) -> Vec<Condition> {
        self.verdicts.iter().filter(|v| !v.passed).map(|v| v.condition).collect()
    }

    /// `Err` naming the first violated condition, if any.
    pub fn into_result(self) -> Result<Self> {
        match self.verdicts.iter().find(|v| !v.passed) {
            None => Ok(self),
            Some(v) => Err(Error::KernelClass {
                label: self.label.clone(),
                condition: v.condition.to_string(),
                detail: v.detail.clone(),
            }),
        }
    }

    /// Quadrature hints derived from the fitted exponents.
    pub fn hints(&self) -> KernelHints {
        KernelHints {
            beta: self.beta,
            gamma: self.gamma,
            theta: if self.theta.is_finite() { self.theta } else { 1.0 },
            dt_decay: if self.theta.is_finite() { self.theta } else { 1.0 },
            zero: 0.0,
            diag: self.gamma.min(0.95),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("kernel      {}\n", self.label));
        out.push_str(&format!("evidence    {}\n", self.evidence));
        out.push_str(&format!("verdict     {}\n", if self.accepted { "ACCEPTED" } else { "REJECTED" }));
        for v in &self.verdicts {
            out.push_str(&format!(
                "  {:<24} {:<5} {}\n",
                v.condition.to_string(),
                if v.passed { "pass" } else { "FAIL" },
                v.detail
            ));
        }
        out.push_str(&format!(
            "constants   C0={:.6} beta={:.4}{} gamma={:.4} theta={:.4}\n",
            self.c0,
            self.beta,
            if self.beta_boundary { " (boundary)" } else { "" },
            self.gamma,
            self.theta
        ));
        if let (Some(eta), Some(q)) = (self.eta, self.q) {
            out.push_str(&format!("            eta={eta:.4} q={q:.4}\n"));
        }
        out.push_str(&format!(
            "fit rms     dt-fit={:.3e} theta-fit={:.3e}\n",
            self.fit_residual_rms, self.theta_fit_residual_rms
        ));
        for n in &self.notes {
            out.push_str(&format!("note        {n}\n"));
        }
        out
    }
}

/// Probes conditions (i)-(vi) on `k`.
pub fn validate_kernel(k: &dyn Kernel, probe: &ProbeConfig) -> Result<KClassReport> {
    probe.validate()?;
    let mut report = KClassReport {
        label: k.label(),
        evidence: "numerical evidence on finite probe lattices".into(),
        accepted: false,
        verdicts: Vec::new(),
        c0: 0.0,
        beta: 0.0,
        gamma: 0.0,
        theta: f64::INFINITY,
        eta: None,
        q: None,
        beta_boundary: false,
        fit_residual_rms: 0.0,
        theta_fit_residual_rms: 0.0,
        continuity_oscillation: Vec::new(),
        notes: Vec::new(),
    };
    let support = check_support(k, probe)?;
    report.verdicts.push(support);
    report.verdicts.push(check_origin(k, probe)?);
    report.verdicts.push(check_continuity(k, probe, &mut report.continuity_oscillation)?);
    report.verdicts.push(check_nondegenerate(k, probe)?);
    let v = check_time_derivative(k, probe, &mut report)?;
    report.verdicts.push(v);
    let v = check_space_derivative(k, probe, &mut report)?;
    report.verdicts.push(v);
    report.accepted = report.verdicts.iter().all(|v| v.passed);
    Ok(report)
}

fn finite(v: f64, t: f64, s: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("kernel evaluation is not finite at (t, s) = ({t}, {s})")))
    }
}

fn verdict(condition: Condition, passed: bool, detail: String) -> ConditionVerdict {
    ConditionVerdict { condition, passed, detail }
}

fn check_support(k: &dyn Kernel, p: &ProbeConfig) -> Result<ConditionVerdict> {
    let mut r = rng::stream(p.seed, 11);
    let mut worst = (0.0f64, 0.0, 0.0);
    for _ in 0..p.support_samples {
        let t = p.horizon * r.random::<f64>();
        let gap = 10f64.powf(-3.0 + 6.0 * r.random::<f64>());
        let s = t + gap;
        let v = finite(k.eval(t, s), t, s)?.abs();
        if v > worst.0 {
            worst = (v, t, s);
        }
    }
    Ok(if worst.0 > 0.0 {
        verdict(
            Condition::Support,
            false,
            format!("f({:.4}, {:.4}) = {:.3e} is non-zero above the diagonal", worst.1, worst.2, worst.0),
        )
    } else {
        verdict(Condition::Support, true, format!("{} samples with s > t are zero", p.support_samples))
    })
}

fn check_origin(k: &dyn Kernel, p: &ProbeConfig) -> Result<ConditionVerdict> {
    let mut points = p.negative_lattice(p.s_min, p.s_max, p.per_decade);
    points.extend((1..=64).map(|i| p.horizon * i as f64 / 16.0));
    let mut worst = (0.0f64, 0.0);
    for s in points {
        let v = finite(k.eval(0.0, s), 0.0, s)?.abs();
        if v > worst.0 {
            worst = (v, s);
        }
    }
    Ok(if worst.0 > p.zero_tolerance {
        verdict(Condition::Origin, false, format!("f(0, {:.4}) = {:.3e}", worst.1, worst.0))
    } else {
        verdict(Condition::Origin, true, format!("max |f(0, s)| = {:.1e}", worst.0))
    })
}

/// Largest difference between lattice neighbours at spacing `h`.
fn oscillation(k: &dyn Kernel, p: &ProbeConfig, h: f64) -> Result<f64> {
    let lo = k.tau().max(-p.continuity_window);
    let nt = (p.horizon / h).round() as usize;
    let ns = ((p.horizon - lo) / h).ceil() as usize + 1;
    let s_at = |j: usize| lo + (j as f64 + 0.5) * h;
    let mut prev: Vec<f64> = Vec::new();
    let mut worst = 0.0f64;
    for i in 1..=nt {
        let t = i as f64 * h;
        let mut row = Vec::with_capacity(ns);
        for j in 0..ns {
            let s = s_at(j);
            if s > t {
                break;
            }
            row.push(finite(k.eval(t, s), t, s)?);
        }
        for j in 1..row.len() {
            worst = worst.max((row[j] - row[j - 1]).abs());
        }
        for j in 0..prev.len().min(row.len()) {
            worst = worst.max((row[j] - prev[j]).abs());
            if j + 1 < row.len() {
                worst = worst.max((row[j + 1] - prev[j]).abs());
            }
        }
        prev = row;
    }
    Ok(worst)
}

fn check_continuity(k: &dyn Kernel, p: &ProbeConfig, osc: &mut Vec<(f64, f64)>) -> Result<ConditionVerdict> {
    let mut h = p.horizon / 16.0;
    for _ in 0..p.continuity_levels {
        osc.push((h, oscillation(k, p, h)?));
        h *= 0.5;
    }
    let tail = &osc[osc.len() - 3..];
    let finest = tail[2].1;
    if finest < 1e-10 {
        return Ok(verdict(Condition::Continuity, true, format!("oscillation {finest:.1e} at h = {:.1e}", tail[2].0)));
    }
    let xs: Vec<f64> = tail.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, o)| o.max(1e-300).ln()).collect();
    let slope = line_fit(&xs, &ys).0;
    let passed = slope > 0.05;
    Ok(verdict(
        Condition::Continuity,
        passed,
        format!("oscillation {finest:.3e} at h = {:.1e}, Hoelder slope {slope:.3}", tail[2].0),
    ))
}

fn check_nondegenerate(k: &dyn Kernel, p: &ProbeConfig) -> Result<ConditionVerdict> {
    let quad = QuadratureSpec { abs_tol: 1e-14, rel_tol: 1e-6, tail_cutoff: p.s_max, ..Default::default() };
    let mut smallest = (f64::INFINITY, 0.0);
    for i in 1..=p.t_nodes {
        let t = p.horizon * i as f64 / p.t_nodes as f64;
        let v = l2_norm_sq(k, t, &quad)?.value;
        if v < smallest.0 {
            smallest = (v, t);
        }
    }
    Ok(verdict(
        Condition::NonDegenerate,
        smallest.0 > p.zero_tolerance,
        format!("min over probes of int f(t, s)^2 ds = {:.3e} at t = {:.4}", smallest.0, smallest.1),
    ))
}

struct Sample {
    t: f64,
    s: f64,
    value: f64,
}

fn dt_lattice(k: &dyn Kernel, p: &ProbeConfig, refine: usize) -> Result<Vec<Sample>> {
    let nt = p.t_nodes * refine;
    let t_lo = p.horizon * 10f64.powi(-3 - refine as i32 + 1);
    let ts: Vec<f64> = (0..nt)
        .map(|i| t_lo * (p.horizon / t_lo).powf(i as f64 / (nt - 1) as f64))
        .collect();
    let scale = 10f64.powi(refine as i32 - 1);
    let neg = p.negative_lattice(p.s_min / scale, p.s_max * scale, p.per_decade * refine);
    let mut out = Vec::new();
    for &t in &ts {
        let mut lags: Vec<f64> = Vec::new();
        for m in 1..=(4 + 2 * refine) {
            let e = 10f64.powi(-(m as i32));
            lags.push(t * e);
            lags.push(t * (1.0 - e));
        }
        for j in 1..(16 * refine) {
            lags.push(t * j as f64 / (16 * refine) as f64);
        }
        for lag in lags {
            let v = finite(k.eval_dt_lag(t, lag), t, t - lag)?;
            out.push(Sample { t, s: t - lag, value: v.abs() });
        }
        for &s in &neg {
            let v = finite(k.eval_dt_lag(t, t - s), t, s)?;
            out.push(Sample { t, s, value: v.abs() });
        }
    }
    Ok(out)
}

fn check_time_derivative(k: &dyn Kernel, p: &ProbeConfig, report: &mut KClassReport) -> Result<ConditionVerdict> {
    let samples = dt_lattice(k, p, 1)?;
    let nonzero: Vec<&Sample> = samples.iter().filter(|x| x.value > 0.0 && x.s != 0.0).collect();
    let theta = fit_theta(k, p, report)?;
    report.theta = theta;
    if nonzero.is_empty() {
        report.notes.push("d_t f vanishes off the diagonal on the probe lattice".into());
        return Ok(verdict(Condition::TimeDerivative, true, "d_t f = 0 off the diagonal: C0 = 0".into()));
    }
    // log|d_t f| = log C - beta log|s| - gamma log|t - s|
    let rows: Vec<[f64; 3]> = nonzero.iter().map(|x| [1.0, -x.s.abs().ln(), -(x.t - x.s).ln()]).collect();
    let ys: Vec<f64> = nonzero.iter().map(|x| x.value.ln()).collect();
    let (coef, rms) = least_squares3(&rows, &ys);
    let beta = coef[1].max(0.0);
    let gamma = coef[2].max(0.0);
    report.fit_residual_rms = rms;
    let bound = |x: &Sample| x.value * x.s.abs().powf(beta) * (x.t - x.s).powf(gamma);
    let c0 = nonzero.iter().map(|x| bound(x)).fold(0.0, f64::max);
    let refined = dt_lattice(k, p, 2)?;
    let c0_refined = refined
        .iter()
        .filter(|x| x.value > 0.0 && x.s != 0.0)
        .map(bound)
        .fold(0.0, f64::max);
    report.beta = beta;
    report.gamma = gamma;
    report.c0 = c0;
    report.beta_boundary = beta < 0.02;
    if report.beta_boundary {
        report.notes.push("beta fitted at the boundary 0 of its range".into());
    }
    let detail = format!(
        "C0={c0:.4e} (refined {c0_refined:.4e}) beta={beta:.4} gamma={gamma:.4} theta={theta:.4}"
    );
    if !(c0_refined <= 1.5 * c0) {
        return Ok(verdict(Condition::TimeDerivative, false, format!("{detail}: C0 grows under refinement")));
    }
    if !(beta < 1.0 && gamma < 1.0 && beta + gamma < 1.0) {
        return Ok(verdict(Condition::TimeDerivative, false, format!("{detail}: beta + gamma >= 1")));
    }
    let need = (1.0 - gamma - beta).max(0.5);
    if !(theta > need) {
        return Ok(verdict(Condition::TimeDerivative, false, format!("{detail}: theta <= {need:.4}")));
    }
    Ok(verdict(Condition::TimeDerivative, true, detail))
}

/// Decay exponent of `sup_r |f(r, s)|` for `s <= -10`; infinite when `f`
/// vanishes there.
fn fit_theta(k: &dyn Kernel, p: &ProbeConfig, report: &mut KClassReport) -> Result<f64> {
    let ss = p.negative_lattice(10.0f64.min(p.s_max / 10.0), p.s_max, p.per_decade);
    let rs: Vec<f64> = (1..=p.t_nodes).map(|i| p.horizon * i as f64 / p.t_nodes as f64).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &s in &ss {
        let mut sup = 0.0f64;
        for &r in &rs {
            sup = sup.max(finite(k.eval(r, s), r, s)?.abs());
        }
        if sup > 0.0 {
            xs.push(s.abs().ln());
            ys.push(sup.ln());
        }
    }
    if xs.len() < 3 {
        return Ok(f64::INFINITY);
    }
    let (slope, _, rms) = line_fit(&xs, &ys);
    report.theta_fit_residual_rms = rms;
    Ok(-slope)
}

/// Power `p` with `|h(x)| ~ x^p`, from probes at `x1` and `x2`.
fn local_exponent(h: impl Fn(f64) -> f64, x1: f64, x2: f64) -> f64 {
    let (a, b) = (h(x1).abs(), h(x2).abs());
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    (a / b).ln() / (x1 / x2).ln()
}

fn check_space_derivative(k: &dyn Kernel, p: &ProbeConfig, report: &mut KClassReport) -> Result<ConditionVerdict> {
    let t = 0.5 * p.horizon;
    let tau = k.tau();
    // |d_s f| ~ dist^-a near 0 and the diagonal; ~ |s|^-tail in the past
    let near_diag = -local_exponent(|lag| k.eval_ds_lag(t, lag), 1e-6, 1e-4);
    let near_zero = if tau < 0.0 {
        let left = -local_exponent(|x| k.eval_ds(t, -x), 1e-6, 1e-4);
        let right = -local_exponent(|x| k.eval_ds(t, x), 1e-6, 1e-4);
        left.max(right)
    } else {
        0.0
    };
    let tail = if tau.is_finite() {
        f64::INFINITY
    } else {
        let h = |x: f64| k.eval_ds(p.horizon, -x);
        if h(p.s_max) == 0.0 {
            f64::INFINITY
        } else {
            -local_exponent(h, p.s_max, p.s_max / 10.0)
        }
    };
    let a = near_diag.max(near_zero).max(0.0);
    let etas = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5];
    let mut chosen = None;
    for &eta in &etas {
        let q = 0.5 + 2.5 * eta + 0.005;
        let local_ok = a * (1.0 + eta) < 0.999;
        let tail_ok = tail * (1.0 + eta) - q > 1.001;
        if local_ok && tail_ok {
            chosen = Some((eta, q));
            break;
        }
    }
    let detail = format!("local exponent {a:.4}, tail exponent {tail:.4}");
    let Some((eta, q)) = chosen else {
        return Ok(verdict(Condition::SpaceDerivative, false, format!("{detail}: no feasible (eta, q)")));
    };
    // numerical confirmation of the weighted integral at a few times
    let exps = ((near_zero * (1.0 + eta)).clamp(0.0, 0.99), (near_diag * (1.0 + eta)).clamp(0.0, 0.99));
    let quad = QuadratureSpec { abs_tol: 1e-10, rel_tol: 1e-6, tail_cutoff: p.s_max, ..Default::default() };
    let decay = if tail.is_finite() { tail * (1.0 + eta) - q } else { 4.0 };
    let mut sup = 0.0f64;
    for i in 1..=8 {
        let t = p.horizon * i as f64 / 8.0;
        let h = |s: f64, lag: f64| {
            let w = if s.abs() > 1.0 { s.abs().powf(q) } else { 1.0 };
            k.eval_ds_lag(t, lag).abs().powf(1.0 + eta) * w
        };
        let v = match integrate_past_with(k, t, &h, decay, exps, &quad) {
            Ok(e) => e.value,
            Err(e) => {
                return Ok(verdict(Condition::SpaceDerivative, false, format!("{detail}: integral failed ({e})")))
            }
        };
        sup = sup.max(v);
    }
    report.eta = Some(eta);
    report.q = Some(q);
    Ok(verdict(
        Condition::SpaceDerivative,
        sup.is_finite(),
        format!("{detail}; eta={eta:.3}, q={q:.4}, sup_t integral {sup:.4e}"),
    ))
}

/// Ordinary least squares `y ~ a + b x`; returns `(b, a, rms)`.
pub(crate) fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>() / n).sqrt();
    (b, a, rms)
}

/// Least squares with three regressors via the normal equations.
fn least_squares3(rows: &[[f64; 3]], ys: &[f64]) -> ([f64; 3], f64) {
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (r, y) in rows.iter().zip(ys) {
        for i in 0..3 {
            b[i] += r[i] * y;
            for j in 0..3 {
                a[i][j] += r[i] * r[j];
            }
        }
    }
    let x = solve3(a, b);
    let rms = (rows
        .iter()
        .zip(ys)
        .map(|(r, y)| (y - (x[0] * r[0] + x[1] * r[1] + x[2] * r[2])).powi(2))
        .sum::<f64>()
        / rows.len() as f64)
        .sqrt();
    (x, rms)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        if a[col][col].abs() < 1e-300 {
            continue;
        }
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for c in (row + 1)..3 {
            acc -= a[row][c] * x[c];
        }
        x[row] = if a[row][row].abs() < 1e-300 { 0.0 } else { acc / a[row][row] };
    }
    x
}
