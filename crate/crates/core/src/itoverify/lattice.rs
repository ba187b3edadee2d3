//! Time nodes and per-node `s`-rules shared by every path of a cell.

use crate::error::{ensure, Result};
use crate::kernels::{l2_norm_sq, Kernel};
use crate::levy::TimeGrid;
use crate::quadrature::{FixedRule, QuadratureSpec};

/// Evaluation nodes of `M` on `[0, T]`: grid offsets `0, 1, 2, 4, ...`
/// below `stride`, then every multiple of `stride`. The same set built with
/// `2 stride` is a subset, which gives the coarse companion rule.
pub(crate) fn eval_offsets(n_cells: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut k = 1;
    while k < stride {
        out.push(k);
        k *= 2;
    }
    out.extend((1..=n_cells / stride).map(|j| j * stride));
    out.dedup();
    out
}

/// Trapezoid weights on `times` restricted to the nodes flagged in `keep`.
fn trapezoid(times: &[f64], keep: &[bool]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    let idx: Vec<usize> = (0..times.len()).filter(|&i| keep[i]).collect();
    for p in idx.windows(2) {
        let h = 0.5 * (times[p[1]] - times[p[0]]);
        w[p[0]] += h;
        w[p[1]] += h;
    }
    w
}

/// Product trapezoid weights for `int phi(t) dv(t)`: `(v_b - v_a) / 2` at each end.
fn product_trapezoid(v: &[f64], keep: &[bool]) -> Vec<f64> {
    let mut w = vec![0.0; v.len()];
    let idx: Vec<usize> = (0..v.len()).filter(|&i| keep[i]).collect();
    for p in idx.windows(2) {
        let h = 0.5 * (v[p[1]] - v[p[0]]);
        w[p[0]] += h;
        w[p[1]] += h;
    }
    w
}

/// The time side of the lattice: nodes, fine and coarse trapezoid weights
/// and the variance function of the (truncated) kernel.
#[derive(Clone, Debug)]
pub(crate) struct TimeLattice {
    /// Grid node indices, for the Volterra simulator.
    pub nodes: Vec<usize>,
    pub times: Vec<f64>,
    /// `[fine, coarse]` trapezoid weights.
    pub trap: [Vec<f64>; 2],
    /// `[fine, coarse]` weights of `int phi dv`.
    pub dv: [Vec<f64>; 2],
    /// `f(t_i, t_i)`.
    pub diag: Vec<f64>,
}

impl TimeLattice {
    pub fn new(k: &dyn Kernel, grid: &TimeGrid, stride: usize, spec: &QuadratureSpec) -> Result<Self> {
        let n = grid.spec().n_cells;
        ensure(stride.is_power_of_two() && n % (2 * stride) == 0, || {
            format!("stride {stride} must be a power of two with 2*stride dividing {n} cells")
        })?;
        let z = grid.zero_index();
        let fine = eval_offsets(n, stride);
        let coarse = eval_offsets(n, 2 * stride);
        let keep_coarse: Vec<bool> = fine.iter().map(|o| coarse.binary_search(o).is_ok()).collect();
        let keep_fine = vec![true; fine.len()];
        let nodes: Vec<usize> = fine.iter().map(|o| z + o).collect();
        let times: Vec<f64> = nodes.iter().map(|&i| grid.nodes()[i]).collect();
        let v: Vec<f64> = times.iter().map(|&t| l2_norm_sq(k, t, spec).map(|e| e.value)).collect::<Result<_>>()?;
        Ok(Self {
            trap: [trapezoid(&times, &keep_fine), trapezoid(&times, &keep_coarse)],
            dv: [product_trapezoid(&v, &keep_fine), product_trapezoid(&v, &keep_coarse)],
            diag: times.iter().map(|&t| k.diagonal(t)).collect(),
            nodes,
            times,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
}

/// Quadrature over `s` in `(tau, t]` at one time node, with the kernel and
/// its time derivative tabulated at the nodes.
#[derive(Clone, Debug, Default)]
pub(crate) struct NodeRule {
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    pub f: Vec<f64>,
    pub dtf: Vec<f64>,
}

/// `s`-rule for `int_tau^t h(s) ds` with `h` built from `d_t f(t, s)`:
/// graded towards the diagonal and both sides of zero, log-spaced panels
/// beyond `s = -1`. `n` points per panel.
pub(crate) fn node_rule(k: &dyn Kernel, t: f64, n: usize) -> NodeRule {
    let h = k.hints();
    let tau = k.tau();
    let mut r = FixedRule::default();
    if tau < t {
        if t > 0.0 {
            let lo = tau.max(0.0);
            let at_lo = if lo == 0.0 && tau < 0.0 { h.zero } else { 0.0 };
            r.append(FixedRule::graded(lo, t, at_lo, h.diag, n));
        }
        if tau < 0.0 {
            let left = tau.max(-1.0);
            let at_zero = if t > 0.0 { h.zero } else { h.zero.max(h.diag) };
            r.append(FixedRule::graded(left, 0.0, 0.0, at_zero, n));
            if tau < -1.0 {
                let cutoff = if tau.is_finite() { -tau } else { 1e6 };
                r.append(FixedRule::log_tail(-1.0, cutoff, 2.0, n));
            }
        }
    }
    let mut out = NodeRule::default();
    for (&s, &w) in r.nodes.iter().zip(&r.weights) {
        let lag = t - s;
        let dtf = k.eval_dt_lag(t, lag);
        if dtf == 0.0 || w == 0.0 {
            continue;
        }
        out.s.push(s);
        out.w.push(w);
        out.f.push(k.eval_lag(t, lag));
        out.dtf.push(dtf);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FractionalKernel, KernelHandle, TruncatedKernel};
    use std::sync::Arc;

    #[test]
    fn offsets_nest() {
        let f = eval_offsets(64, 8);
        assert_eq!(&f[..5], &[0, 1, 2, 4, 8]);
        let c = eval_offsets(64, 16);
        assert!(c.iter().all(|o| f.contains(o)));
    }

    #[test]
    fn node_rule_reproduces_variance_derivative() {
        // int 2 f d_t f ds = v'(t) for f_d, where v(t) = V t^(2d+1)
        let inner: KernelHandle = Arc::new(FractionalKernel::new(0.25).unwrap());
        let fk = FractionalKernel::new(0.25).unwrap();
        let k = TruncatedKernel::new(inner, 1e8).unwrap();
        let r = node_rule(&k, 0.7, 32);
        let v: f64 = (0..r.s.len()).map(|i| 2.0 * r.w[i] * r.f[i] * r.dtf[i]).sum();
        let exact = 1.5 * fk.variance_constant() * 0.7f64.powf(0.5);
        assert!((v - exact).abs() < 1e-3 * exact, "{v} vs {exact}");
    }
}
