//! Doleans-Dade weights of the signed measures `Q_g` and weighted
//! Monte Carlo estimates.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::functional::TestFunctional;
use crate::error::{ensure, Error, Result};
use crate::levy::{LevyModel, LevyPath, TimeGrid};

/// Evaluates `exp(int g(0,t) dW - 1/2 int g(0,t)^2 dt - int int g* nu dt)
/// * prod (1 + g*(x_j, s_j))` on paths of one grid.
///
/// The Wiener integral uses cell midpoints, and the quadratic compensator
/// is the matching Riemann sum, so the weight has mean one exactly for the
/// discretised Brownian motion.
#[derive(Clone, Debug)]
pub struct WeightEvaluator {
    g: TestFunctional,
    grid: Arc<TimeGrid>,
    g0_mid: Vec<f64>,
    log_comp: f64,
    trivial: bool,
}

impl WeightEvaluator {
    /// `model` is the driver as specified; the weight compensates the jumps
    /// that are actually simulated.
    pub fn new(g: &TestFunctional, model: &LevyModel, grid: Arc<TimeGrid>) -> Result<Self> {
        let bound = g.bind(&model.simulated())?;
        let (lo, hi) = g.support();
        let g0_mid: Vec<f64> = (0..grid.n_cells())
            .map(|j| {
                let (a, b) = grid.cell(j);
                let m = 0.5 * (a + b);
                if m < lo || m > hi {
                    0.0
                } else {
                    g.g0(m)
                }
            })
            .collect();
        let quad: f64 = g0_mid.iter().enumerate().map(|(j, a)| a * a * grid.width(j)).sum();
        let start = grid.nodes()[grid.exact_from()];
        let rho = bound.rho_integral(start, grid.horizon())?;
        Ok(Self { g: g.clone(), trivial: g.is_zero(), g0_mid, log_comp: 0.5 * quad + rho, grid })
    }

    pub fn functional(&self) -> &TestFunctional {
        &self.g
    }

    pub fn weight(&self, lp: &LevyPath) -> f64 {
        if self.trivial {
            return 1.0;
        }
        debug_assert_eq!(lp.grid().n_cells(), self.grid.n_cells());
        let wiener: f64 = self.g0_mid.iter().zip(lp.dw()).map(|(a, dw)| a * dw).sum();
        let product: f64 = lp.jumps().iter().map(|j| 1.0 + self.g.gstar(j.size, j.time)).product();
        (wiener - self.log_comp).exp() * product
    }
}

/// The weight of one path; see [`WeightEvaluator`] for repeated use.
pub fn doleans_weight(g: &TestFunctional, model: &LevyModel, lp: &LevyPath) -> Result<f64> {
    Ok(WeightEvaluator::new(g, model, Arc::clone(lp.grid()))?.weight(lp))
}

/// Empirical summary of a batch of weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub second_moment: f64,
    /// Share of paths with a negative weight.
    pub negative_fraction: f64,
}

impl WeightDiagnostics {
    pub fn from_weights(w: &[f64]) -> Self {
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let second = w.iter().map(|x| x * x).sum::<f64>() / n;
        let variance = if w.len() > 1 { w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self {
            mean,
            mean_se: (variance / n).sqrt(),
            variance,
            second_moment: second,
            negative_fraction: w.iter().filter(|x| **x < 0.0).count() as f64 / n,
        }
    }
}

/// Scalars a weighted Monte Carlo estimate can be formed of.
pub trait McValue: Copy + Send + Sync + std::fmt::Debug {
    fn scale(self, c: f64) -> Self;
    fn add(self, o: Self) -> Self;
    fn zero() -> Self;
    fn dist_sq(self, o: Self) -> f64;
    fn finite(self) -> bool;
}

impl McValue for f64 {
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn zero() -> Self {
        0.0
    }
    fn dist_sq(self, o: Self) -> f64 {
        (self - o).powi(2)
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl McValue for Complex64 {
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn dist_sq(self, o: Self) -> f64 {
        (self - o).norm_sqr()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// A Monte Carlo S-transform value. For complex values the standard error
/// is `sqrt(E |error|^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SEstimate<V = f64> {
    pub value: V,
    pub std_error: f64,
    pub n_paths: usize,
    pub weights: Option<WeightDiagnostics>,
}

/// Plain sample mean with its standard error; sums run in index order.
pub fn mc_mean<V: McValue>(xs: &[V]) -> Result<SEstimate<V>> {
    ensure(!xs.is_empty(), || "Monte Carlo estimate over an empty path set".into())?;
    let n = xs.len() as f64;
    let mean = xs.iter().fold(V::zero(), |a, x| a.add(*x)).scale(1.0 / n);
    if !mean.finite() {
        return Err(Error::NonFinite { at: f64::NAN });
    }
    let se = if xs.len() > 1 {
        (xs.iter().map(|x| x.dist_sq(mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(SEstimate { value: mean, std_error: se, n_paths: xs.len(), weights: None })
}

/// `E^{Q_g} phi = E[phi w]` from per-path functional values and weights.
pub fn s_transform_mc<V: McValue>(phi: &[V], weights: &[f64]) -> Result<SEstimate<V>> {
    ensure(phi.len() == weights.len(), || {
        format!("{} functional values but {} weights", phi.len(), weights.len())
    })?;
    let prod: Vec<V> = phi.iter().zip(weights).map(|(p, w)| p.scale(*w)).collect();
    let mut est = mc_mean(&prod)?;
    est.weights = Some(WeightDiagnostics::from_weights(weights));
    Ok(est)
}
