//! Simulation grids and two-sided Levy paths.
//!
//! The grid is uniform on `[0, T]` and geometric on the past, out to `-A`.
//! Jumps are simulated exactly on `[-B, T]`; further in the past each cell
//! carries one aggregated, centred jump increment.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{JumpSpec, LevyModel};
use crate::error::{ensure, Error, Result};
use crate::rng;

/// Largest expected jump count simulated exactly in one aggregated cell;
/// larger cells use a moment-matched Gaussian.
const EXACT_AGGREGATE_COUNT: f64 = 64.0;
const MAX_EXPECTED_JUMPS: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    /// Truncation point `A` of the past: the grid starts at `-A`.
    pub past: f64,
    /// Number of uniform cells on `[0, T]`.
    pub n_cells: usize,
    /// Width ratio of consecutive past cells.
    pub past_growth: f64,
    /// Jumps are exact on `[-jump_horizon, T]`.
    pub jump_horizon: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { horizon: 1.0, past: 0.0, n_cells: 256, past_growth: 1.05, jump_horizon: 16.0 }
    }
}

impl GridSpec {
    pub fn new(horizon: f64, past: f64, n_cells: usize) -> Self {
        Self { horizon, past, n_cells, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    zero: usize,
    exact_from: usize,
    spec: GridSpec,
}

impl TimeGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        ensure(spec.horizon > 0.0 && spec.horizon.is_finite(), || {
            format!("horizon {} must be positive", spec.horizon)
        })?;
        ensure(spec.past >= 0.0 && spec.past.is_finite(), || format!("past {} must be >= 0", spec.past))?;
        ensure(spec.n_cells > 0, || "need at least one cell on [0, T]".into())?;
        ensure(spec.past_growth >= 1.0, || format!("past growth {} must be >= 1", spec.past_growth))?;
        ensure(spec.jump_horizon >= 0.0, || "jump horizon must be >= 0".into())?;
        let dt = spec.horizon / spec.n_cells as f64;
        let mut past = Vec::new();
        let mut pos = 0.0;
        let mut width = dt;
        while pos < spec.past {
            let next = (pos + width).min(spec.past);
            past.push(-next);
            pos = next;
            width *= spec.past_growth;
        }
        let n = past.len();
        if n >= 2 {
            let last = -past[n - 1] + past[n - 2];
            let prev = if n >= 3 { -past[n - 2] + past[n - 3] } else { -past[n - 2] };
            if last < 0.5 * prev {
                past.remove(n - 2);
            }
        }
        let mut nodes: Vec<f64> = past.into_iter().rev().collect();
        let zero = nodes.len();
        nodes.push(0.0);
        for i in 1..=spec.n_cells {
            nodes.push(spec.horizon * i as f64 / spec.n_cells as f64);
        }
        let exact_from = if spec.past <= spec.jump_horizon {
            0
        } else {
            nodes.iter().rposition(|&s| s <= -spec.jump_horizon).unwrap_or(0)
        };
        Ok(Self { nodes, zero, exact_from, spec })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node `s = 0`.
    pub fn zero_index(&self) -> usize {
        self.zero
    }

    /// First cell whose jumps are simulated exactly.
    pub fn exact_from(&self) -> usize {
        self.exact_from
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn cell(&self, j: usize) -> (f64, f64) {
        (self.nodes[j], self.nodes[j + 1])
    }

    pub fn width(&self, j: usize) -> f64 {
        self.nodes[j + 1] - self.nodes[j]
    }

    /// Cell containing `t` (the last cell for `t = T`).
    pub fn locate(&self, t: f64) -> usize {
        let i = self.nodes.partition_point(|&s| s <= t);
        i.saturating_sub(1).min(self.n_cells() - 1)
    }

    /// Node indices of the uniform `[0, T]` part.
    pub fn positive_nodes(&self) -> std::ops::RangeInclusive<usize> {
        self.zero..=self.nodes.len() - 1
    }

    /// Grid merging `factor` consecutive cells on each side of zero.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        ensure(factor >= 1, || "coarsening factor must be >= 1".into())?;
        ensure(self.spec.n_cells % factor == 0, || {
            format!("{} cells cannot be merged in groups of {factor}", self.spec.n_cells)
        })?;
        ensure(self.exact_from == 0, || "coarsening needs a grid without aggregated cells".into())?;
        let mut nodes: Vec<f64> = Vec::new();
        let mut i = self.zero as isize;
        while i > 0 {
            i -= factor as isize;
            nodes.push(self.nodes[i.max(0) as usize]);
        }
        nodes.reverse();
        let zero = nodes.len();
        nodes.extend(self.nodes[self.zero..].iter().step_by(factor));
        let spec = GridSpec { n_cells: self.spec.n_cells / factor, ..self.spec.clone() };
        Ok(Self { nodes, zero, exact_from: 0, spec })
    }
}

/// One driver jump at `time` with the Brownian value `W(time)` there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    pub brownian: f64,
}

/// A simulated two-sided Levy path.
#[derive(Clone, Debug)]
pub struct LevyPath {
    grid: Arc<TimeGrid>,
    sigma: f64,
    drift: f64,
    dw: Vec<f64>,
    aggregated: Vec<f64>,
    jumps: Vec<Jump>,
    seed: u64,
}

impl LevyPath {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    /// Diffusion coefficient of the simulated Gaussian part.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Compensator rate `int x nu(dx)` of the simulated jumps.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// Standard Brownian increments per cell.
    pub fn dw(&self) -> &[f64] {
        &self.dw
    }

    /// Centred aggregated jump increments of the cells before `exact_from`.
    pub fn aggregated(&self) -> &[f64] {
        &self.aggregated
    }

    /// Exact jumps in `[-B, T]`, sorted by time.
    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Two-sided Brownian motion `W` at the grid nodes (`W(0) = 0`).
    pub fn brownian_nodes(&self) -> Vec<f64> {
        brownian_at_nodes(&self.grid, &self.dw)
    }

    /// `L` at the nodes of `[0, T]`.
    pub fn values(&self) -> Vec<f64> {
        let g = &self.grid;
        let z = g.zero_index();
        let mut out = Vec::with_capacity(g.spec().n_cells + 1);
        let mut acc = 0.0;
        out.push(0.0);
        let mut next = self.jumps.partition_point(|j| j.time <= 0.0);
        for j in z..g.n_cells() {
            let (_, b) = g.cell(j);
            acc += self.sigma * self.dw[j] - self.drift * g.width(j);
            while next < self.jumps.len() && self.jumps[next].time <= b {
                acc += self.jumps[next].size;
                next += 1;
            }
            out.push(acc);
        }
        out
    }

    /// `L(t-)` at the jump time of `jumps()[index]` (which must lie in `(0, T]`).
    pub fn left_limit_at_jump(&self, index: usize) -> f64 {
        let jump = self.jumps[index];
        let before: f64 = self.jumps[..index].iter().filter(|j| j.time > 0.0).map(|j| j.size).sum();
        self.sigma * jump.brownian - self.drift * jump.time + before
    }

    /// The same path on a grid with `factor` times fewer cells.
    pub fn coarsen(&self, factor: usize) -> Result<LevyPath> {
        let grid = Arc::new(self.grid.coarsen(factor)?);
        let z = self.grid.zero_index();
        let mut dw = Vec::with_capacity(grid.n_cells());
        let mut past: Vec<f64> = self.dw[..z].rchunks(factor).map(|c| c.iter().sum()).collect();
        past.reverse();
        dw.extend(past);
        dw.extend(self.dw[z..].chunks(factor).map(|c| c.iter().sum::<f64>()));
        Ok(LevyPath {
            grid,
            sigma: self.sigma,
            drift: self.drift,
            dw,
            aggregated: Vec::new(),
            jumps: self.jumps.clone(),
            seed: self.seed,
        })
    }

    /// CSV with columns `time, gaussian_cumsum, jump_time, jump_size`:
    /// one row per grid node and one per jump.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "gaussian_cumsum", "jump_time", "jump_size"])?;
        let bw = self.brownian_nodes();
        let nodes = self.grid.nodes();
        let mut k = 0;
        for (i, &t) in nodes.iter().enumerate() {
            while k < self.jumps.len() && self.jumps[k].time < t {
                let j = self.jumps[k];
                w.write_record([
                    fmt(j.time),
                    fmt(self.sigma * j.brownian),
                    fmt(j.time),
                    fmt(j.size),
                ])?;
                k += 1;
            }
            w.write_record([fmt(t), fmt(self.sigma * bw[i]), String::new(), String::new()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

/// Precomputed simulation plan for one model on one grid.
#[derive(Clone, Debug)]
pub struct LevySimulator {
    grid: Arc<TimeGrid>,
    model: LevyModel,
    sigma: f64,
    drift: f64,
    second_moment: f64,
}

impl LevySimulator {
    pub fn new(model: &LevyModel, grid: Arc<TimeGrid>) -> Result<Self> {
        let model = model.simulated();
        let exact_len = grid.horizon() - grid.nodes()[grid.exact_from()];
        let expected = match model.jumps() {
            JumpSpec::None => 0.0,
            JumpSpec::CompoundPoisson { rate, .. } => rate * exact_len,
            JumpSpec::TemperedStable { alpha, c, min_jump, .. } => {
                2.0 * c * min_jump.powf(-alpha) / alpha * exact_len
            }
        };
        if !(expected <= MAX_EXPECTED_JUMPS) {
            return Err(Error::TooManyJumps { expected });
        }
        Ok(Self {
            sigma: model.sigma(),
            drift: model.jumps().mean_rate(),
            second_moment: model.nu_moment(2.0),
            grid,
            model,
        })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    /// The model actually simulated (truncated / compensated).
    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn simulate(&self, seed: u64) -> LevyPath {
        let g = &self.grid;
        let mut gauss = rng::stream(seed, 0);
        let mut jump_rng = rng::stream(seed, 1);
        let mut bridge = rng::stream(seed, 2);

        let dw: Vec<f64> = (0..g.n_cells())
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut gauss);
                g.width(j).sqrt() * z
            })
            .collect();

        let start = g.nodes()[g.exact_from()];
        let end = g.horizon();
        let mut jumps = Vec::new();
        match self.model.jumps() {
            JumpSpec::None => {}
            JumpSpec::CompoundPoisson { rate, law } => {
                let n = poisson(&mut jump_rng, rate * (end - start));
                for _ in 0..n {
                    let time = jump_time(&mut jump_rng, g, start, end);
                    let size = law.sample(&mut jump_rng);
                    jumps.push(Jump { time, size, brownian: 0.0 });
                }
            }
            JumpSpec::TemperedStable { alpha, lambda, c, min_jump } => {
                let side_rate = c * min_jump.powf(-alpha) / alpha;
                for sign in [1.0, -1.0] {
                    let n = poisson(&mut jump_rng, side_rate * (end - start));
                    for _ in 0..n {
                        let time = jump_time(&mut jump_rng, g, start, end);
                        let u: f64 = 1.0 - jump_rng.random::<f64>();
                        let x = min_jump * u.powf(-1.0 / alpha);
                        if jump_rng.random::<f64>() < (-lambda * x).exp() {
                            jumps.push(Jump { time, size: sign * x, brownian: 0.0 });
                        }
                    }
                }
            }
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));

        let aggregated: Vec<f64> = (0..g.exact_from())
            .map(|j| self.aggregated_increment(&mut jump_rng, g.width(j)))
            .collect();

        let w = brownian_at_nodes(g, &dw);
        let mut i = 0;
        while i < jumps.len() {
            let k = g.locate(jumps[i].time);
            let (mut t0, b) = g.cell(k);
            let mut w0 = w[k];
            let wb = w[k + 1];
            while i < jumps.len() && g.locate(jumps[i].time) == k {
                let s = jumps[i].time;
                let mean = w0 + (s - t0) / (b - t0) * (wb - w0);
                let var = (s - t0) * (b - s) / (b - t0);
                let z: f64 = StandardNormal.sample(&mut bridge);
                let ws = mean + var.max(0.0).sqrt() * z;
                jumps[i].brownian = ws;
                t0 = s;
                w0 = ws;
                i += 1;
            }
        }

        LevyPath {
            grid: Arc::clone(g),
            sigma: self.sigma,
            drift: self.drift,
            dw,
            aggregated,
            jumps,
            seed,
        }
    }

    fn aggregated_increment<R: Rng>(&self, rng: &mut R, width: f64) -> f64 {
        match self.model.jumps() {
            JumpSpec::CompoundPoisson { rate, law } if rate * width <= EXACT_AGGREGATE_COUNT => {
                let n = poisson(rng, rate * width);
                let total: f64 = (0..n).map(|_| law.sample(rng)).sum();
                total - self.drift * width
            }
            JumpSpec::None => 0.0,
            _ => {
                let sd = (self.second_moment * width).sqrt();
                Normal::new(0.0, sd).map(|d| d.sample(rng)).unwrap_or(0.0)
            }
        }
    }
}

fn brownian_at_nodes(g: &TimeGrid, dw: &[f64]) -> Vec<f64> {
    let z = g.zero_index();
    let mut w = vec![0.0; g.nodes().len()];
    for j in (0..z).rev() {
        w[j] = w[j + 1] - dw[j];
    }
    for j in z..dw.len() {
        w[j + 1] = w[j] + dw[j];
    }
    w
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Uniform time in `(start, end)` that avoids grid nodes.
fn jump_time<R: Rng>(rng: &mut R, g: &TimeGrid, start: f64, end: f64) -> f64 {
    loop {
        let t = start + (end - start) * rng.random::<f64>();
        let k = g.locate(t);
        let (a, b) = g.cell(k);
        if t > a && t < b {
            return t;
        }
    }
}

/// Simulates one path of `model` on `grid`; deterministic in `seed`.
pub fn simulate_path(model: &LevyModel, grid: &Arc<TimeGrid>, seed: u64) -> Result<LevyPath> {
    Ok(LevySimulator::new(model, Arc::clone(grid))?.simulate(seed))
}
