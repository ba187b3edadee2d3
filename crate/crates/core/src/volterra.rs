//! Volterra paths `M(t) = int f(t, s) L(ds)` built from simulated drivers.
//!
//! The continuous part uses cell averages of `f(t, .)` against the Brownian
//! and compensator increments; driver jumps enter exactly as `f(t, s_j) x_j`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kernels::{l2_norm_sq, KernelHandle};
use crate::levy::{LevyModel, LevyPath, LevySimulator, TimeGrid};
use crate::quadrature::{integrate_tail, Estimate, QuadratureSpec};

/// One jump of `M`: `left = M(t-)` and `size = f(t, t) * driver jump`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolterraJump {
    pub time: f64,
    pub left: f64,
    pub size: f64,
    pub driver_size: f64,
}

impl VolterraJump {
    pub fn right(&self) -> f64 {
        self.left + self.size
    }
}

/// `M` on a set of evaluation nodes in `[0, T]`, plus its jumps in `(0, T]`.
#[derive(Clone, Debug)]
pub struct VolterraPath {
    times: Arc<Vec<f64>>,
    values: Vec<f64>,
    jumps: Vec<VolterraJump>,
    kernel: String,
    seed: u64,
    window: (f64, f64),
}

impl VolterraPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Jumps of the driver in `(0, T]` with the induced jumps of `M`
    /// (zero-sized when the kernel vanishes on the diagonal).
    pub fn jumps(&self) -> &[VolterraJump] {
        &self.jumps
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    pub fn kernel_label(&self) -> &str {
        &self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Simulated window `(-A, T)`.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// `sup |M|` over the nodes and the jump left limits.
    pub fn sup_abs(&self) -> f64 {
        let nodes = self.values.iter().map(|v| v.abs());
        let lefts = self.jumps.iter().map(|j| j.left.abs());
        nodes.chain(lefts).fold(0.0, f64::max)
    }

    /// CSV with columns `time, M, M_left, is_jump, jump_size`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        use crate::levy::fmt;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "M", "M_left", "is_jump", "jump_size"])?;
        let mut k = 0;
        for (&t, &m) in self.times.iter().zip(&self.values) {
            while k < self.jumps.len() && self.jumps[k].time < t {
                let j = self.jumps[k];
                w.write_record([fmt(j.time), fmt(j.right()), fmt(j.left), "1".into(), fmt(j.size)])?;
                k += 1;
            }
            w.write_record([fmt(t), fmt(m), fmt(m), "0".into(), fmt(0.0)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Precomputed cell weights of one kernel on one grid.
#[derive(Clone, Debug)]
pub struct VolterraSimulator {
    kernel: KernelHandle,
    grid: Arc<TimeGrid>,
    eval: Vec<usize>,
    times: Arc<Vec<f64>>,
    /// Row `i` holds the weights of cells `0..eval[i]`.
    weights: Vec<Vec<f64>>,
    indicator: bool,
}

impl VolterraSimulator {
    /// `eval` are node indices of the grid inside `[0, T]`, increasing.
    pub fn new(kernel: KernelHandle, grid: Arc<TimeGrid>, eval: Vec<usize>) -> Result<Self> {
        let z = grid.zero_index();
        let last = grid.nodes().len() - 1;
        ensure(!eval.is_empty(), || "need at least one evaluation node".into())?;
        ensure(eval.windows(2).all(|w| w[0] < w[1]), || "evaluation nodes must increase".into())?;
        ensure(eval[0] >= z && eval[eval.len() - 1] <= last, || {
            format!("evaluation nodes must lie in [{z}, {last}]")
        })?;
        let times: Vec<f64> = eval.iter().map(|&i| grid.nodes()[i]).collect();
        let indicator = kernel.is_increment_indicator();
        let weights = if indicator {
            Vec::new()
        } else {
            eval.iter()
                .map(|&i| cell_weights(kernel.as_ref(), &grid, grid.nodes()[i], i, None))
                .collect()
        };
        Ok(Self { kernel, grid, eval, times: Arc::new(times), weights, indicator })
    }

    /// Every node of `[0, T]`.
    pub fn on_all_nodes(kernel: KernelHandle, grid: Arc<TimeGrid>) -> Result<Self> {
        let eval: Vec<usize> = grid.positive_nodes().collect();
        Self::new(kernel, grid, eval)
    }

    pub fn kernel(&self) -> &KernelHandle {
        &self.kernel
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn eval_nodes(&self) -> &[usize] {
        &self.eval
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn simulate(&self, lp: &LevyPath) -> Result<VolterraPath> {
        ensure(Arc::ptr_eq(lp.grid(), &self.grid) || **lp.grid() == *self.grid, || {
            "Levy path and simulator use different grids".into()
        })?;
        let g = &self.grid;
        let z = g.zero_index();
        let jumps_pos: Vec<usize> =
            (0..lp.jumps().len()).filter(|&k| lp.jumps()[k].time > 0.0).collect();
        let values = if self.indicator {
            let all = lp.values();
            self.eval.iter().map(|&i| all[i - z]).collect()
        } else {
            let inc = increments(lp);
            let k = self.kernel.as_ref();
            self.eval
                .iter()
                .zip(&self.weights)
                .map(|(&i, w)| {
                    let t = g.nodes()[i];
                    let cont: f64 = w.iter().zip(&inc).map(|(a, b)| a * b).sum();
                    let jumps: f64 = lp
                        .jumps()
                        .iter()
                        .take_while(|j| j.time <= t)
                        .map(|j| k.eval_lag(t, t - j.time) * j.size)
                        .sum();
                    cont + jumps
                })
                .collect()
        };
        let jumps = jumps_pos
            .into_iter()
            .map(|idx| {
                let j = lp.jumps()[idx];
                let left = if self.indicator { lp.left_limit_at_jump(idx) } else { self.left_limit(lp, idx) };
                VolterraJump { time: j.time, left, size: self.kernel.diagonal(j.time) * j.size, driver_size: j.size }
            })
            .collect();
        Ok(VolterraPath {
            times: Arc::clone(&self.times),
            values,
            jumps,
            kernel: self.kernel.label(),
            seed: lp.seed(),
            window: (g.nodes()[0], g.horizon()),
        })
    }

    /// `M(s-)` at the driver jump `lp.jumps()[idx]`, using the Brownian
    /// bridge value stored with the jump for the partial cell.
    fn left_limit(&self, lp: &LevyPath, idx: usize) -> f64 {
        let g = &self.grid;
        let jump = lp.jumps()[idx];
        let s = jump.time;
        let k = g.locate(s);
        let w = cell_weights(self.kernel.as_ref(), g, s, k, Some(s));
        let inc = increments(lp);
        let mut cont: f64 = w[..k].iter().zip(&inc).map(|(a, b)| a * b).sum();
        let (a, _) = g.cell(k);
        let bw = lp.brownian_nodes();
        let partial = lp.sigma() * (jump.brownian - bw[k]) - lp.drift() * (s - a);
        cont += w[k] * partial;
        let before: f64 = lp.jumps()[..idx]
            .iter()
            .map(|j| self.kernel.eval_lag(s, s - j.time) * j.size)
            .sum();
        cont + before
    }

    /// Simulates the driver and `M` for each seed (results in seed order).
    pub fn simulate_many(&self, model: &LevyModel, seeds: &[u64]) -> Result<Vec<VolterraPath>> {
        let sim = LevySimulator::new(model, Arc::clone(&self.grid))?;
        seeds.par_iter().map(|&s| self.simulate(&sim.simulate(s))).collect()
    }
}

/// Continuous driver increment per cell: Brownian part, minus the compensator
/// on exactly simulated cells, plus the aggregated jumps of the far past.
fn increments(lp: &LevyPath) -> Vec<f64> {
    let g = lp.grid();
    let agg = lp.aggregated();
    (0..g.n_cells())
        .map(|j| {
            let jump_part = if j < agg.len() { agg[j] } else { -lp.drift() * g.width(j) };
            lp.sigma() * lp.dw()[j] + jump_part
        })
        .collect()
}

/// Weights `(1/|c|) int_c f(t, s) ds` for the cells `c` left of node `upto`.
/// With `partial = Some(t)` one more entry covers `[node(upto), t]`.
fn cell_weights(
    k: &dyn crate::kernels::Kernel,
    g: &TimeGrid,
    t: f64,
    upto: usize,
    partial: Option<f64>,
) -> Vec<f64> {
    let z = g.zero_index();
    let mut out = Vec::with_capacity(upto + 1);
    let avg = |a: f64, b: f64, refine: bool| {
        // lags measured from t keep the diagonal cell exact in floating point
        let (la, lb) = (t - a, t - b);
        let f = |lag: f64| k.eval_lag(t, lag);
        let m1 = f(0.5 * (la + lb));
        if !refine {
            return m1;
        }
        let m2 = 0.5 * (f(0.75 * la + 0.25 * lb) + f(0.25 * la + 0.75 * lb));
        (4.0 * m2 - m1) / 3.0
    };
    for j in 0..upto {
        let (a, b) = g.cell(j);
        let near_zero = j + 1 == z || j == z;
        let near_diag = j + 1 == upto && partial.is_none();
        out.push(avg(a, b, near_zero || near_diag));
    }
    if let Some(s) = partial {
        let a = g.nodes()[upto];
        out.push(if s > a { avg(a, s, true) } else { 0.0 });
    }
    out
}

/// Builds `M` for one driver path on all nodes of `[0, T]`.
pub fn simulate_m(kernel: KernelHandle, lp: &LevyPath) -> Result<VolterraPath> {
    VolterraSimulator::on_all_nodes(kernel, Arc::clone(lp.grid()))?.simulate(lp)
}

/// `int_{-inf}^{-A} f(t, s)^2 ds`: the variance share of `M(t)` lost by
/// truncating the past at `-A` (per unit driver variance).
pub fn tail_variance(kernel: &KernelHandle, t: f64, past: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if past <= 0.0 {
        return l2_norm_sq(kernel.as_ref(), t, spec);
    }
    let tau = kernel.tau();
    if tau >= -past {
        return Ok(Estimate::exact(0.0));
    }
    let h = |s: f64| {
        let f = kernel.eval_lag(t, t - s);
        f * f
    };
    let decay = 2.0 * kernel.hints().theta;
    if !decay.is_finite() {
        return Ok(Estimate::exact(0.0));
    }
    integrate_tail(&h, -past, decay, spec)
}

/// Smallest `A` in `{1, 10, ..., cap}` whose tail variance at `horizon` is at
/// most `rel_tol` of the total, with the relative tail actually reached.
pub fn past_window(kernel: &KernelHandle, horizon: f64, rel_tol: f64, cap: f64) -> Result<(f64, f64)> {
    let spec = QuadratureSpec::with_tolerances(1e-13, 1e-9);
    if kernel.tau() >= 0.0 {
        return Ok((0.0, 0.0));
    }
    let total = l2_norm_sq(kernel.as_ref(), horizon, &spec)?.value;
    ensure(total > 0.0, || "kernel has zero L2 norm at the horizon".into())?;
    let mut a = 1.0;
    loop {
        let rel = tail_variance(kernel, horizon, a, &spec)?.value / total;
        if rel <= rel_tol || a >= cap {
            return Ok((a.min(cap), rel));
        }
        a *= 10.0;
    }
}

/// Monte Carlo `E sup_t |M(t)|^p` with its standard error.
pub fn moment_estimate(paths: &[VolterraPath], p: f64) -> Result<(f64, f64)> {
    if paths.is_empty() {
        return Err(Error::InvalidParameter("moment estimate of an empty collection".into()));
    }
    ensure(p >= 2.0, || format!("moment order {p} must be >= 2"))?;
    let xs: Vec<f64> = paths.iter().map(|m| m.sup_abs().powf(p)).collect();
    Ok(mean_se(&xs))
}

/// Sample mean and its standard error, summed in order.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
